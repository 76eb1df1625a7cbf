#include "querynet/numgrad/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace querynet::numgrad {
namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecMap = Eigen::Map<Eigen::VectorXf>;
using CVecMap = Eigen::Map<const Eigen::VectorXf>;

Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* tape = vars.begin()->tape;
  for (const Var& v : vars) {
    if (v.tape == nullptr || v.tape != tape) throw std::invalid_argument("operands recorded on different tapes");
  }
  return *tape;
}

void require(bool ok, const char* primitive, const std::string& detail) {
  if (!ok) throw ShapeError(primitive, detail);
}

// Columns of a zero-padded k×k neighbourhood: rows (c, ky, kx), cols (y, x).
void im2col(const float* image, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, float* cols) {
  const long pad = static_cast<long>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        float* row = cols + ((c * k + ky) * k + kx) * hw;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + dx;
            const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w);
            row[y * w + x] = inside ? image[(c * h + sy) * w + sx] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t k, float* image) {
  const long pad = static_cast<long>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const float* row = cols + ((c * k + ky) * k + kx) * hw;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x) + dx;
            if (sx < 0 || sx >= static_cast<long>(w)) continue;
            image[(c * h + sy) * w + sx] += row[y * w + x];
          }
        }
      }
    }
  }
}

void check_labels(const char* primitive, std::span<const int> labels, std::size_t rows, std::size_t classes) {
  require(labels.size() == rows, primitive,
          "expected " + std::to_string(rows) + " labels, got " + std::to_string(labels.size()));
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < classes, primitive,
            "label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
  }
}

}  // namespace

Var dense(Var x, Var weight, Var bias) {
  Tape& tape = same_tape({x, weight, bias});
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require(xv.rank() >= 1 && wv.rank() == 2 && bv.rank() == 1, "dense",
          "ranks x" + shape_string(xv.shape()) + " W" + shape_string(wv.shape()) + " b" + shape_string(bv.shape()));
  const std::size_t rows = xv.dim(0);
  const std::size_t in = rows == 0 ? 0 : xv.size() / rows;
  const std::size_t out = wv.dim(1);
  require(wv.dim(0) == in && bv.dim(0) == out, "dense",
          "x" + shape_string(xv.shape()) + " W" + shape_string(wv.shape()) + " b" + shape_string(bv.shape()));

  Tensor y(Shape{rows, out});
  MapR ym(y.data(), rows, out);
  ym.noalias() = CMapR(xv.data(), rows, in) * CMapR(wv.data(), in, out);
  ym.rowwise() += CVecMap(bv.data(), out).transpose();

  return tape.record(std::move(y), {x, weight, bias}, [x, weight, bias, rows, in, out](Tape& t, std::size_t self) {
    CMapR gy(t.grad(self).data(), rows, out);
    if (t.requires_grad(x.id)) {
      MapR(t.grad(x.id).data(), rows, in).noalias() += gy * CMapR(weight.value().data(), in, out).transpose();
    }
    if (t.requires_grad(weight.id)) {
      MapR(t.grad(weight.id).data(), in, out).noalias() += CMapR(x.value().data(), rows, in).transpose() * gy;
    }
    if (t.requires_grad(bias.id)) {
      VecMap(t.grad(bias.id).data(), out) += gy.colwise().sum().transpose();
    }
  });
}

Var conv2d(Var x, Var weight, Var bias) {
  Tape& tape = same_tape({x, weight, bias});
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require(xv.rank() == 4 && wv.rank() == 4 && bv.rank() == 1, "conv2d",
          "ranks x" + shape_string(xv.shape()) + " W" + shape_string(wv.shape()) + " b" + shape_string(bv.shape()));
  const std::size_t batch = xv.dim(0), channels = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t out_ch = wv.dim(0), k = wv.dim(2);
  require(wv.dim(1) == channels && wv.dim(3) == k && (k == 1 || k == 3) && bv.dim(0) == out_ch, "conv2d",
          "x" + shape_string(xv.shape()) + " W" + shape_string(wv.shape()) + " b" + shape_string(bv.shape()));

  const std::size_t hw = h * w;
  const std::size_t patch = channels * k * k;
  Tensor y(Shape{batch, out_ch, h, w});
  FloatBuffer cols(patch * hw);
  CMapR wm(wv.data(), out_ch, patch);
  for (std::size_t b = 0; b < batch; ++b) {
    const float* image = xv.data() + b * channels * hw;
    MapR ym(y.data() + b * out_ch * hw, out_ch, hw);
    if (k == 1) {
      ym.noalias() = wm * CMapR(image, channels, hw);
    } else {
      im2col(image, channels, h, w, k, cols.data());
      ym.noalias() = wm * CMapR(cols.data(), patch, hw);
    }
    ym.colwise() += CVecMap(bv.data(), out_ch);
  }

  return tape.record(std::move(y), {x, weight, bias},
                     [=](Tape& t, std::size_t self) {
                       const Tensor& gy = t.grad(self);
                       const Tensor& xval = x.value();
                       CMapR wmat(weight.value().data(), out_ch, patch);
                       const bool need_x = t.requires_grad(x.id);
                       const bool need_w = t.requires_grad(weight.id);
                       const bool need_b = t.requires_grad(bias.id);
                       FloatBuffer buf(patch * hw);
                       for (std::size_t b = 0; b < batch; ++b) {
                         CMapR g(gy.data() + b * out_ch * hw, out_ch, hw);
                         const float* image = xval.data() + b * channels * hw;
                         if (need_w) {
                           MapR gw(t.grad(weight.id).data(), out_ch, patch);
                           if (k == 1) {
                             gw.noalias() += g * CMapR(image, channels, hw).transpose();
                           } else {
                             im2col(image, channels, h, w, k, buf.data());
                             gw.noalias() += g * CMapR(buf.data(), patch, hw).transpose();
                           }
                         }
                         if (need_b) VecMap(t.grad(bias.id).data(), out_ch) += g.rowwise().sum();
                         if (need_x) {
                           float* gx = t.grad(x.id).data() + b * channels * hw;
                           if (k == 1) {
                             MapR(gx, channels, hw).noalias() += wmat.transpose() * g;
                           } else {
                             MapR(buf.data(), patch, hw).noalias() = wmat.transpose() * g;
                             col2im_add(buf.data(), channels, h, w, k, gx);
                           }
                         }
                       }
                     });
}

Var relu(Var x) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
  return tape.record(std::move(y), {x}, [x](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    const Tensor& xval = x.value();
    Tensor& gx = t.grad(x.id);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xval[i] > 0.0f) gx[i] += gy[i];
    }
  });
}

Var maxpool2x2(Var x) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  require(xv.rank() == 4 && xv.dim(2) >= 2 && xv.dim(3) >= 2, "maxpool2x2", "x" + shape_string(xv.shape()));
  const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor y(Shape{xv.dim(0), xv.dim(1), oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const float* plane = xv.data() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (2 * oy + dy) * w + 2 * ox + dx;
            if (plane[idx] > plane[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        y[o] = plane[best];
        (*argmax)[o] = p * h * w + best;
      }
    }
  }
  return tape.record(std::move(y), {x}, [x, argmax](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad(x.id);
    for (std::size_t o = 0; o < gy.size(); ++o) gx[(*argmax)[o]] += gy[o];
  });
}

Var softmax(Var x) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  require(xv.rank() >= 1 && xv.shape().back() > 0, "softmax", "x" + shape_string(xv.shape()));
  const std::size_t cols = xv.shape().back();
  const std::size_t rows = xv.size() / cols;
  Tensor y(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = xv.data() + r * cols;
    float* out = y.data() + r * cols;
    const float peak = *std::max_element(in, in + cols);
    float total = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - peak);
      total += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= total;
  }
  const std::size_t out_id = tape.size();
  return tape.record(std::move(y), {x}, [x, rows, cols, out_id](Tape& t, std::size_t self) {
    const Tensor& yv = t.value(out_id);
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad(x.id);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * cols;
      float dot = 0.0f;
      for (std::size_t c = 0; c < cols; ++c) dot += gy[base + c] * yv[base + c];
      for (std::size_t c = 0; c < cols; ++c) gx[base + c] += yv[base + c] * (gy[base + c] - dot);
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  require(a.shape() == b.shape(), "add", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    for (const Var& v : {a, b}) {
      if (!t.requires_grad(v.id)) continue;
      Tensor& g = t.grad(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape({a, b});
  require(a.shape() == b.shape(), "mul", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    if (t.requires_grad(a.id)) {
      Tensor& g = t.grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * b.value()[i];
    }
    if (t.requires_grad(b.id)) {
      Tensor& g = t.grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * a.value()[i];
    }
  });
}

Var scale_by(Var x, Var s, std::size_t index) {
  Tape& tape = same_tape({x, s});
  require(index < s.value().size(), "scale_by",
          "index " + std::to_string(index) + " outside s" + shape_string(s.shape()));
  const float factor = s.value()[index];
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * x.value()[i];
  return tape.record(std::move(y), {x, s}, [x, s, index](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    const float f = s.value()[index];
    if (t.requires_grad(x.id)) {
      Tensor& g = t.grad(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * gy[i];
    }
    if (t.requires_grad(s.id)) {
      float acc = 0.0f;
      const Tensor& xv = x.value();
      for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * xv[i];
      t.grad(s.id)[index] += acc;
    }
  });
}

Var scale(Var x, float factor) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * x.value()[i];
  return x.tape->record(std::move(y), {x}, [x, factor](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor& g = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * gy[i];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(y), {x}, [x](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor& g = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
  });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double total = 0.0;
  for (float v : xv.values()) total += v;
  Tensor y(Shape{}, static_cast<float>(total));
  return x.tape->record(std::move(y), {x}, [x](Tape& t, std::size_t self) {
    const float gy = t.grad(self)[0];
    Tensor& g = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy;
  });
}

Var mse_loss(Var pred, Var target) {
  Tape& tape = same_tape({pred, target});
  const Tensor& p = pred.value();
  const Tensor& q = target.value();
  require(p.rank() == 2 && p.shape() == q.shape() && p.dim(0) > 0, "mse_loss",
          "pred" + shape_string(p.shape()) + " target" + shape_string(q.shape()));
  const std::size_t rows = p.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - q[i];
    total += d * d;
  }
  Tensor y(Shape{}, static_cast<float>(total / static_cast<double>(rows)));
  return tape.record(std::move(y), {pred, target}, [pred, target, rows](Tape& t, std::size_t self) {
    const float scale_factor = 2.0f * t.grad(self)[0] / static_cast<float>(rows);
    const Tensor& p = pred.value();
    const Tensor& q = target.value();
    if (t.requires_grad(pred.id)) {
      Tensor& g = t.grad(pred.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale_factor * (p[i] - q[i]);
    }
    if (t.requires_grad(target.id)) {
      Tensor& g = t.grad(target.id);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= scale_factor * (p[i] - q[i]);
    }
  });
}

Var margin(Var probs, std::span<const int> labels) {
  const Tensor& p = probs.value();
  require(p.rank() == 2 && p.dim(1) >= 2, "margin", "probs" + shape_string(p.shape()));
  const std::size_t rows = p.dim(0), classes = p.dim(1);
  check_labels("margin", labels, rows, classes);
  Tensor y(Shape{rows});
  auto rival = std::make_shared<std::vector<std::size_t>>(rows);
  auto truth = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = p.data() + r * classes;
    const std::size_t yk = (*truth)[r];
    std::size_t best = yk == 0 ? 1 : 0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (c != yk && row[c] > row[best]) best = c;
    }
    (*rival)[r] = best;
    y[r] = row[yk] - row[best];
  }
  return probs.tape->record(std::move(y), {probs}, [probs, rival, truth, classes](Tape& t, std::size_t self) {
    const Tensor& gy = t.grad(self);
    Tensor& g = t.grad(probs.id);
    for (std::size_t r = 0; r < gy.size(); ++r) {
      g[r * classes + (*truth)[r]] += gy[r];
      g[r * classes + (*rival)[r]] -= gy[r];
    }
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require(z.rank() == 2 && z.dim(0) > 0, "cross_entropy", "logits" + shape_string(z.shape()));
  const std::size_t rows = z.dim(0), classes = z.dim(1);
  check_labels("cross_entropy", labels, rows, classes);
  auto probs = std::make_shared<std::vector<float>>(z.size());
  auto truth = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* in = z.data() + r * classes;
    float* out = probs->data() + r * classes;
    const float peak = *std::max_element(in, in + classes);
    double norm = 0.0;
    for (std::size_t c = 0; c < classes; ++c) norm += std::exp(static_cast<double>(in[c] - peak));
    for (std::size_t c = 0; c < classes; ++c) {
      out[c] = static_cast<float>(std::exp(static_cast<double>(in[c] - peak)) / norm);
    }
    total += std::log(norm) - static_cast<double>(in[(*truth)[r]] - peak);
  }
  Tensor y(Shape{}, static_cast<float>(total / static_cast<double>(rows)));
  return logits.tape->record(std::move(y), {logits}, [logits, probs, truth, rows, classes](Tape& t, std::size_t self) {
    const float gy = t.grad(self)[0] / static_cast<float>(rows);
    Tensor& g = t.grad(logits.id);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < classes; ++c) {
        const float onehot = static_cast<int>(c) == (*truth)[r] ? 1.0f : 0.0f;
        g[r * classes + c] += gy * ((*probs)[r * classes + c] - onehot);
      }
    }
  });
}

}  // namespace querynet::numgrad
