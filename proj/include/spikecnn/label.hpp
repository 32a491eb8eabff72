#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace spikecnn {

// Positive class is preictal.
enum class Label : std::uint8_t { interictal = 0, preictal = 1 };

// Output neuron order of the two-class networks: P first, then I.
inline constexpr std::size_t kPreictalNeuron = 0;
inline constexpr std::size_t kInterictalNeuron = 1;

constexpr std::size_t neuron_index(Label label) noexcept {
  return label == Label::preictal ? kPreictalNeuron : kInterictalNeuron;
}

constexpr Label label_of_neuron(std::size_t neuron) noexcept {
  return neuron == kPreictalNeuron ? Label::preictal : Label::interictal;
}

inline std::string_view to_string(Label label) noexcept {
  return label == Label::preictal ? "preictal" : "interictal";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "preictal" || s == "1") return Label::preictal;
  if (s == "interictal" || s == "0") return Label::interictal;
  return std::nullopt;
}

}  // namespace spikecnn
