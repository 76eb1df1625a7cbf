#pragma once

#include <span>

#include "querynet/numgrad/tape.hpp"

// Differentiable primitives. Each validates operand extents and throws
// ShapeError naming the primitive on mismatch.
namespace querynet::numgrad {

/// y = x·W + b with x viewed as (B, in), W (in, out), b (out).
Var dense(Var x, Var weight, Var bias);

/// Stride-1, zero-padded ("same") 2-D convolution. x (B,C,H,W), W (O,C,k,k)
/// with k in {1,3}, b (O).
Var conv2d(Var x, Var weight, Var bias);

Var relu(Var x);

/// 2×2 max-pool with stride 2 over (B,C,H,W); odd trailing rows/cols dropped.
Var maxpool2x2(Var x);

/// Softmax over the last axis.
Var softmax(Var x);

Var add(Var a, Var b);
Var mul(Var a, Var b);

/// y = s[index] · x, with s a tracked tensor (e.g. architecture weights).
Var scale_by(Var x, Var s, std::size_t index);

Var scale(Var x, float factor);
Var reshape(Var x, Shape shape);
Var sum(Var x);

/// Mean over rows of per-row squared-error sums. pred and target (B, K).
Var mse_loss(Var pred, Var target);

/// Per-row margin p[y] - max_{k != y} p[k] over a (B, K) tensor; output (B).
Var margin(Var probs, std::span<const int> labels);

/// Mean softmax cross-entropy of (B, K) logits.
Var cross_entropy(Var logits, std::span<const int> labels);

}  // namespace querynet::numgrad
