#pragma once

#include <cstdint>
#include <vector>

namespace spikecnn {

struct OpTally {
  std::uint64_t adds = 0;
  std::uint64_t muls = 0;
  std::uint64_t compares = 0;

  OpTally& operator+=(const OpTally& o) noexcept {
    adds += o.adds;
    muls += o.muls;
    compares += o.compares;
    return *this;
  }
  friend bool operator==(const OpTally&, const OpTally&) = default;
};

// Dynamic arithmetic counters, broken down by spec layer index. Kernels take
// an OpCounter* and skip counting when it is null.
class OpCounter {
 public:
  OpTally& layer(std::size_t index) {
    if (index >= per_layer_.size()) per_layer_.resize(index + 1);
    return per_layer_[index];
  }

  [[nodiscard]] OpTally layer_or_zero(std::size_t index) const {
    return index < per_layer_.size() ? per_layer_[index] : OpTally{};
  }

  // Membrane updates of integrate-and-fire neurons, kept apart from the
  // synaptic arithmetic of the layers themselves.
  OpTally& membrane() noexcept { return membrane_; }
  [[nodiscard]] const OpTally& membrane() const noexcept { return membrane_; }

  [[nodiscard]] OpTally total() const {
    OpTally t = membrane_;
    for (const auto& l : per_layer_) t += l;
    return t;
  }

  [[nodiscard]] const std::vector<OpTally>& per_layer() const noexcept { return per_layer_; }

  void reset() {
    per_layer_.clear();
    membrane_ = {};
  }

 private:
  std::vector<OpTally> per_layer_;
  OpTally membrane_;
};

}  // namespace spikecnn
