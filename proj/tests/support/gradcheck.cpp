#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "querynet/numgrad/ops.hpp"
#include "querynet/numgrad/tape.hpp"

namespace qn_test {
namespace {

namespace ng = querynet::numgrad;

struct DTensor {
  ng::Shape shape;
  std::vector<double> v;
};

struct Interp {
  std::vector<DTensor> vals;
  std::vector<long> pattern;

  DTensor run(const Program& p, const std::vector<std::vector<double>>& leaves) {
    vals.clear();
    pattern.clear();
    for (std::size_t i = 0; i < p.leaves.size(); ++i) vals.push_back({p.leaves[i].shape(), leaves[i]});
    for (const Op& op : p.ops) vals.push_back(apply(op));
    return vals.back();
  }

  DTensor apply(const Op& op) {
    const DTensor& a = vals[op.in[0]];
    switch (op.kind) {
      case OpKind::kDense: {
        const DTensor& w = vals[op.in[1]];
        const DTensor& b = vals[op.in[2]];
        const std::size_t rows = a.shape[0], in = w.shape[0], out = w.shape[1];
        DTensor y{{rows, out}, std::vector<double>(rows * out)};
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t o = 0; o < out; ++o) {
            double s = b.v[o];
            for (std::size_t i = 0; i < in; ++i) s += a.v[r * in + i] * w.v[i * out + o];
            y.v[r * out + o] = s;
          }
        return y;
      }
      case OpKind::kConv: {
        const DTensor& w = vals[op.in[1]];
        const DTensor& b = vals[op.in[2]];
        const long B = a.shape[0], C = a.shape[1], H = a.shape[2], W = a.shape[3];
        const long O = w.shape[0], k = w.shape[2], pad = k / 2;
        DTensor y{{a.shape[0], w.shape[0], a.shape[2], a.shape[3]}, std::vector<double>(B * O * H * W)};
        for (long n = 0; n < B; ++n)
          for (long o = 0; o < O; ++o)
            for (long yy = 0; yy < H; ++yy)
              for (long xx = 0; xx < W; ++xx) {
                double s = b.v[o];
                for (long c = 0; c < C; ++c)
                  for (long ky = 0; ky < k; ++ky)
                    for (long kx = 0; kx < k; ++kx) {
                      const long sy = yy + ky - pad, sx = xx + kx - pad;
                      if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                      s += w.v[((o * C + c) * k + ky) * k + kx] * a.v[((n * C + c) * H + sy) * W + sx];
                    }
                y.v[((n * O + o) * H + yy) * W + xx] = s;
              }
        return y;
      }
      case OpKind::kRelu: {
        DTensor y = a;
        for (auto& x : y.v) {
          pattern.push_back(x > 0);
          x = x > 0 ? x : 0.0;
        }
        return y;
      }
      case OpKind::kPool: {
        const std::size_t B = a.shape[0], C = a.shape[1], H = a.shape[2], W = a.shape[3];
        const std::size_t h = H / 2, w = W / 2;
        DTensor y{{B, C, h, w}, std::vector<double>(B * C * h * w)};
        for (std::size_t n = 0; n < B * C; ++n)
          for (std::size_t yy = 0; yy < h; ++yy)
            for (std::size_t xx = 0; xx < w; ++xx) {
              long arg = 0;
              double best = -1e300;
              for (int d = 0; d < 4; ++d) {
                const double v = a.v[(n * H + 2 * yy + d / 2) * W + 2 * xx + d % 2];
                if (v > best) best = v, arg = d;
              }
              pattern.push_back(arg);
              y.v[(n * h + yy) * w + xx] = best;
            }
        return y;
      }
      case OpKind::kSoftmax: {
        DTensor y = a;
        const std::size_t cols = a.shape.back();
        for (std::size_t r = 0; r < a.v.size() / cols; ++r) {
          double peak = -1e300, total = 0.0;
          for (std::size_t c = 0; c < cols; ++c) peak = std::max(peak, a.v[r * cols + c]);
          for (std::size_t c = 0; c < cols; ++c) total += std::exp(a.v[r * cols + c] - peak);
          for (std::size_t c = 0; c < cols; ++c) y.v[r * cols + c] = std::exp(a.v[r * cols + c] - peak) / total;
        }
        return y;
      }
      case OpKind::kAdd:
      case OpKind::kMul: {
        DTensor y = a;
        const DTensor& b = vals[op.in[1]];
        for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] = op.kind == OpKind::kAdd ? a.v[i] + b.v[i] : a.v[i] * b.v[i];
        return y;
      }
      case OpKind::kScaleBy: {
        DTensor y = a;
        for (auto& x : y.v) x *= vals[op.in[1]].v[op.index];
        return y;
      }
      case OpKind::kScale: {
        DTensor y = a;
        for (auto& x : y.v) x *= static_cast<double>(op.factor);
        return y;
      }
      case OpKind::kReshape:
        return {op.shape, a.v};
      case OpKind::kSum: {
        double s = 0.0;
        for (double x : a.v) s += x;
        return {{}, {s}};
      }
      case OpKind::kMse: {
        const DTensor& b = vals[op.in[1]];
        double s = 0.0;
        for (std::size_t i = 0; i < a.v.size(); ++i) s += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
        return {{}, {s / static_cast<double>(a.shape[0])}};
      }
      case OpKind::kMargin: {
        const std::size_t rows = a.shape[0], K = a.shape[1];
        DTensor y{{rows}, std::vector<double>(rows)};
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t t = static_cast<std::size_t>(op.labels[r]);
          std::size_t rival = t == 0 ? 1 : 0;
          for (std::size_t c = 0; c < K; ++c)
            if (c != t && a.v[r * K + c] > a.v[r * K + rival]) rival = c;
          pattern.push_back(static_cast<long>(rival));
          y.v[r] = a.v[r * K + t] - a.v[r * K + rival];
        }
        return y;
      }
      case OpKind::kCrossEntropy: {
        const std::size_t rows = a.shape[0], K = a.shape[1];
        double s = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
          double peak = -1e300, total = 0.0;
          for (std::size_t c = 0; c < K; ++c) peak = std::max(peak, a.v[r * K + c]);
          for (std::size_t c = 0; c < K; ++c) total += std::exp(a.v[r * K + c] - peak);
          s -= a.v[r * K + op.labels[r]] - peak - std::log(total);
        }
        return {{}, {s / static_cast<double>(rows)}};
      }
    }
    throw std::logic_error("unknown op");
  }
};

ng::Tensor random_tensor(std::mt19937_64& rng, ng::Shape shape, double scale) {
  std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
  ng::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = n(rng);
  return t;
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t rows, std::size_t classes) {
  std::vector<int> y(rows);
  for (auto& v : y) v = static_cast<int>(uniform(rng, 0, classes - 1));
  return y;
}

}  // namespace

Program random_program(std::mt19937_64& rng) {
  // Op inputs are written as -(k+1) for op k and renumbered once the leaf
  // count is known, so leaves occupy indices 0..L-1.
  Program p;
  auto leaf = [&](ng::Shape s, double scale) {
    p.leaves.push_back(random_tensor(rng, std::move(s), scale));
    return static_cast<int>(p.leaves.size() - 1);
  };
  std::vector<Op> ops;
  auto op = [&](Op o) {
    ops.push_back(std::move(o));
    return static_cast<int>(ops.size() - 1);
  };
  auto ref = [](int op_index) { return -(op_index + 1); };

  const std::size_t family = uniform(rng, 0, 4);
  const std::size_t rows = uniform(rng, 1, 3);
  if (family == 0 || family == 1) {
    p.family = family == 0 ? "mlp-mse" : "mlp-xent";
    const std::size_t in = uniform(rng, 2, 8), hidden = uniform(rng, 2, 6), out = uniform(rng, 2, 4);
    const int x = leaf({rows, in}, 1.0);
    const int w1 = leaf({in, hidden}, 1.0 / std::sqrt(in));
    const int b1 = leaf({hidden}, 0.5);
    const int w2 = leaf({hidden, out}, 1.0 / std::sqrt(hidden));
    const int b2 = leaf({out}, 0.5);
    const int h = op({OpKind::kDense, {x, w1, b1}});
    const int a = op({OpKind::kRelu, {ref(h)}});
    const int z = op({OpKind::kDense, {ref(a), w2, b2}});
    if (family == 0) {
      const int t = leaf({rows, out}, 0.5);
      const int s = op({OpKind::kSoftmax, {ref(z)}});
      op({OpKind::kMse, {ref(s), t}});
    } else {
      Op ce{OpKind::kCrossEntropy, {ref(z)}};
      ce.labels = random_labels(rng, rows, out);
      op(ce);
    }
  } else if (family == 2) {
    p.family = "cnn-margin";
    const std::size_t C = uniform(rng, 1, 2), H = uniform(rng, 2, 5), W = uniform(rng, 2, 5);
    const std::size_t O = uniform(rng, 1, 3), k = uniform(rng, 0, 1) ? 3 : 1, K = uniform(rng, 2, 4);
    const int x = leaf({rows, C, H, W}, 1.0);
    const int w = leaf({O, C, k, k}, 1.0 / std::sqrt(C * k * k));
    const int b = leaf({O}, 0.3);
    const std::size_t flat = O * (H / 2) * (W / 2);
    const int wd = leaf({flat, K}, 1.0 / std::sqrt(flat));
    const int bd = leaf({K}, 0.3);
    const int c = op({OpKind::kConv, {x, w, b}});
    const int r = op({OpKind::kRelu, {ref(c)}});
    const int m = op({OpKind::kPool, {ref(r)}});
    Op rs{OpKind::kReshape, {ref(m)}};
    rs.shape = {rows, flat};
    const int f = op(rs);
    const int z = op({OpKind::kDense, {ref(f), wd, bd}});
    const int s = op({OpKind::kSoftmax, {ref(z)}});
    Op mg{OpKind::kMargin, {ref(s)}};
    mg.labels = random_labels(rng, rows, K);
    const int l = op(mg);
    op({OpKind::kSum, {ref(l)}});
  } else if (family == 3) {
    p.family = "elementwise";
    const std::size_t n = uniform(rng, 1, 6), ops_count = uniform(rng, 2, 4);
    const int a = leaf({rows, n}, 1.0);
    const int b = leaf({rows, n}, 1.0);
    const int alpha = leaf({ops_count}, 1.0);
    const int s = op({OpKind::kSoftmax, {alpha}});
    const int ab = op({OpKind::kMul, {a, b}});
    Op sc{OpKind::kScale, {a}};
    sc.factor = std::uniform_real_distribution<float>(-2.0f, 2.0f)(rng);
    const int as = op(sc);
    const int sum_ab = op({OpKind::kAdd, {ref(ab), ref(as)}});
    Op by{OpKind::kScaleBy, {ref(sum_ab), ref(s)}};
    by.index = uniform(rng, 0, ops_count - 1);
    const int y = op(by);
    const int sq = op({OpKind::kMul, {ref(y), ref(y)}});
    op({OpKind::kSum, {ref(sq)}});
  } else {
    p.family = "mixed-layer";
    const std::size_t d = uniform(rng, 2, 6), K = uniform(rng, 2, 4);
    const int x = leaf({rows, d}, 1.0);
    const int alpha = leaf({2}, 1.0);
    const int w = leaf({d, d}, 1.0 / std::sqrt(d));
    const int b = leaf({d}, 0.3);
    const int wh = leaf({d, K}, 1.0 / std::sqrt(d));
    const int bh = leaf({K}, 0.3);
    const int t = leaf({rows, K}, 0.5);
    const int s = op({OpKind::kSoftmax, {alpha}});
    Op skip{OpKind::kScaleBy, {x, ref(s)}};
    skip.index = 0;
    const int o0 = op(skip);
    const int dn = op({OpKind::kDense, {x, w, b}});
    const int rl = op({OpKind::kRelu, {ref(dn)}});
    Op mix{OpKind::kScaleBy, {ref(rl), ref(s)}};
    mix.index = 1;
    const int o1 = op(mix);
    const int h = op({OpKind::kAdd, {ref(o0), ref(o1)}});
    const int z = op({OpKind::kDense, {ref(h), wh, bh}});
    op({OpKind::kMse, {ref(z), t}});
  }
  const int leaves = static_cast<int>(p.leaves.size());
  for (auto& o : ops) {
    for (auto& i : o.in) {
      if (i < 0) i = leaves + (-i - 1);
    }
  }
  p.ops = std::move(ops);
  return p;
}

namespace {

struct EngineRun {
  float loss;
  std::vector<ng::Tensor> grads;
};

EngineRun run_engine(const Program& p) {
  ng::Tape tape;
  std::vector<ng::Var> vals;
  for (const auto& leaf : p.leaves) vals.push_back(tape.variable(leaf));
  for (const Op& op : p.ops) {
    const auto& in = op.in;
    ng::Var y;
    switch (op.kind) {
      case OpKind::kDense: y = ng::dense(vals[in[0]], vals[in[1]], vals[in[2]]); break;
      case OpKind::kConv: y = ng::conv2d(vals[in[0]], vals[in[1]], vals[in[2]]); break;
      case OpKind::kRelu: y = ng::relu(vals[in[0]]); break;
      case OpKind::kPool: y = ng::maxpool2x2(vals[in[0]]); break;
      case OpKind::kSoftmax: y = ng::softmax(vals[in[0]]); break;
      case OpKind::kAdd: y = ng::add(vals[in[0]], vals[in[1]]); break;
      case OpKind::kMul: y = ng::mul(vals[in[0]], vals[in[1]]); break;
      case OpKind::kScaleBy: y = ng::scale_by(vals[in[0]], vals[in[1]], op.index); break;
      case OpKind::kScale: y = ng::scale(vals[in[0]], op.factor); break;
      case OpKind::kReshape: y = ng::reshape(vals[in[0]], op.shape); break;
      case OpKind::kSum: y = ng::sum(vals[in[0]]); break;
      case OpKind::kMse: y = ng::mse_loss(vals[in[0]], vals[in[1]]); break;
      case OpKind::kMargin: y = ng::margin(vals[in[0]], op.labels); break;
      case OpKind::kCrossEntropy: y = ng::cross_entropy(vals[in[0]], op.labels); break;
    }
    vals.push_back(y);
  }
  tape.backward(vals.back());
  EngineRun run{vals.back().value()[0], {}};
  for (std::size_t i = 0; i < p.leaves.size(); ++i) run.grads.push_back(tape.grad(vals[i]));
  return run;
}

std::vector<std::vector<double>> leaf_values(const Program& p) {
  std::vector<std::vector<double>> out;
  for (const auto& t : p.leaves) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

}  // namespace

double reference_loss(const Program& program) {
  Interp interp;
  return interp.run(program, leaf_values(program)).v.at(0);
}

float engine_loss(const Program& program) { return run_engine(program).loss; }

GradCheck check_gradients(const Program& program, double h, double floor) {
  const EngineRun engine = run_engine(program);
  auto leaves = leaf_values(program);
  Interp interp;
  interp.run(program, leaves);
  const std::vector<long> base_pattern = interp.pattern;

  GradCheck out;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (std::size_t e = 0; e < leaves[l].size(); ++e) {
      const double saved = leaves[l][e];
      leaves[l][e] = saved + h;
      const double up = interp.run(program, leaves).v.at(0);
      out.crosses_kink |= interp.pattern != base_pattern;
      leaves[l][e] = saved - h;
      const double down = interp.run(program, leaves).v.at(0);
      out.crosses_kink |= interp.pattern != base_pattern;
      leaves[l][e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = engine.grads[l][e];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), floor});
      out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic - numeric) / denom);
      ++out.entries;
    }
  }
  return out;
}

}  // namespace qn_test
