#include "querynet/core/oracle.hpp"

#include "querynet/models/victim.hpp"

namespace querynet::core {

int LocalOracle::classes() const { return victim_.arch().classes; }

numgrad::Tensor LocalOracle::query(const data::ImageBatch& x) {
  if (!x.eight_bit()) throw OracleError("local oracle: queries must be 8-bit images");
  numgrad::Tensor probs = victim_.predict(x);
  total_ += x.batch();
  return probs;
}

}  // namespace querynet::core
