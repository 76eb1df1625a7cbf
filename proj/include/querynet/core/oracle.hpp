#pragma once

#include <atomic>
#include <cstddef>
#include <stdexcept>

#include "querynet/data/image_batch.hpp"
#include "querynet/numgrad/tensor.hpp"

namespace querynet::models {
class VictimModel;
}

namespace querynet::core {

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Score-based black-box access: probability rows and nothing else.
class VictimOracle {
 public:
  virtual ~VictimOracle() = default;

  virtual int classes() const = 0;
  /// (B, K) probabilities for 8-bit images. Throws OracleError on failure.
  virtual numgrad::Tensor query(const data::ImageBatch& x) = 0;
  /// Images answered so far by this oracle.
  virtual std::size_t total_queries() const = 0;
};

/// In-process victim.
class LocalOracle final : public VictimOracle {
 public:
  explicit LocalOracle(const models::VictimModel& victim) : victim_(victim) {}

  int classes() const override;
  numgrad::Tensor query(const data::ImageBatch& x) override;
  std::size_t total_queries() const override { return total_.load(); }

 private:
  const models::VictimModel& victim_;
  std::atomic<std::size_t> total_{0};
};

}  // namespace querynet::core
