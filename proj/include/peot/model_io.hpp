#pragma once

#include <string>

#include "json.hpp"
#include "peot/boosted_baseline.hpp"
#include "peot/soft_tree.hpp"

namespace peot {

inline constexpr int kModelFormatVersion = 1;

// Model documents carry {"format": ..., "version": 1}; every float64 is
// written as a hex-float string so save -> load -> save is byte-identical.
nlohmann::json tree_to_json(const ObliqueTree& tree);
ObliqueTree tree_from_json(const nlohmann::json& j);

nlohmann::json gbt_to_json(const GbtModel& model);
GbtModel gbt_from_json(const nlohmann::json& j);

std::string hex_double(double v);
double parse_hex_double(const std::string& s);

// Serialized text of a model document (no trailing whitespace differences).
std::string dump_model(const nlohmann::json& j);

// "oblique_tree" or "gbt" from a parsed document.
std::string model_format(const nlohmann::json& j);

}  // namespace peot
