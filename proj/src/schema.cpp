#include "urbanemu/schema.hpp"

#include <set>

#include "urbanemu/errors.hpp"

namespace urbanemu {

namespace {

void check_unique(const std::vector<std::string>& names, const char* side) {
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty() || !seen.insert(n).second) {
            throw SchemaError(std::string(side) + " feature name '" + n + "' is empty or duplicated");
        }
    }
}

}  // namespace

void FeatureSchema::validate() const {
    if (inputs.empty() || outputs.empty()) {
        throw SchemaError("schema needs at least one input and one output");
    }
    if (input_units.size() != inputs.size() || output_units.size() != outputs.size()) {
        throw SchemaError("schema unit lists do not match feature lists");
    }
    check_unique(inputs, "input");
    check_unique(outputs, "output");
}

const FeatureSchema& emulator_schema() {
    static const FeatureSchema schema{
        {"T", "q", "p", "S_dn", "L_dn", "u", "v", "RR", "mu0", "dt", "T_s_prev"},
        {"K", "kg kg-1", "Pa", "W m-2", "W m-2", "m s-1", "m s-1", "kg m-2 s-1", "1", "s", "K"},
        {"S_up", "T_s", "Q_H", "Q_E"},
        {"W m-2", "K", "W m-2", "W m-2"},
    };
    return schema;
}

}  // namespace urbanemu
