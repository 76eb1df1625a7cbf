#pragma once

#include <span>

#include "querynet/data/image_batch.hpp"
#include "querynet/models/surrogate.hpp"

namespace querynet::attackers {

/// ∇_x of −margin(softmax(S(x)), y), summed over rows: the direction that
/// makes each row more adversarial to the surrogate. Shape (B, C, H, W).
numgrad::Tensor adversarial_gradient(const models::Surrogate& surrogate, const data::ImageBatch& x,
                                     std::span<const int> labels);

/// One saturating step of size 2·eps along `direction`, projected back.
/// linf uses sign(direction); l2 uses direction/‖direction‖₂ and leaves
/// rows with a zero direction unchanged.
data::ImageBatch fgsm_step(const data::ImageBatch& x, const data::ImageBatch& x_org, const numgrad::Tensor& direction,
                           data::Norm norm, float eps);

/// Transfer candidate crafted on one surrogate.
data::ImageBatch fgsm_candidate(const models::Surrogate& surrogate, const data::ImageBatch& x,
                                std::span<const int> labels, const data::ImageBatch& x_org, data::Norm norm, float eps);

}  // namespace querynet::attackers
