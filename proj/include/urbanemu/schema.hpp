#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace urbanemu {

/// Ordered feature names and units shared by a model file and its host.
struct FeatureSchema {
    std::vector<std::string> inputs;
    std::vector<std::string> input_units;
    std::vector<std::string> outputs;
    std::vector<std::string> output_units;

    [[nodiscard]] std::size_t n_inputs() const { return inputs.size(); }
    [[nodiscard]] std::size_t n_outputs() const { return outputs.size(); }

    /// Throws SchemaError on duplicates or unit/name length mismatch.
    void validate() const;

    bool operator==(const FeatureSchema&) const = default;
};

/// Slots of the emulator input tensor, in packing order.
namespace in {
inline constexpr std::size_t T = 0;
inline constexpr std::size_t q = 1;
inline constexpr std::size_t p = 2;
inline constexpr std::size_t S_dn = 3;
inline constexpr std::size_t L_dn = 4;
inline constexpr std::size_t u = 5;
inline constexpr std::size_t v = 6;
inline constexpr std::size_t RR = 7;
inline constexpr std::size_t mu0 = 8;
inline constexpr std::size_t dt = 9;
inline constexpr std::size_t T_s_prev = 10;
inline constexpr std::size_t count = 11;
}  // namespace in

/// Slots of the emulator output tensor.
namespace out {
inline constexpr std::size_t S_up = 0;
inline constexpr std::size_t T_s = 1;
inline constexpr std::size_t Q_H = 2;
inline constexpr std::size_t Q_E = 3;
inline constexpr std::size_t count = 4;
}  // namespace out

/// The urban emulator schema: 11 inputs, 4 outputs.
const FeatureSchema& emulator_schema();

}  // namespace urbanemu
