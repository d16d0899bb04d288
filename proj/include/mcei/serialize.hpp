#pragma once
#include "mcei/gaussian.hpp"

#include <nlohmann/json.hpp>

namespace mcei {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char *kCodeVersion = "mcei 0.1.0";

json mat_to_json(const Mat &m); // nested arrays, row major
Mat mat_from_json(const json &j);

json mlp_to_json(const Mlp &net);
Mlp mlp_from_json(const json &j);

json cond_gaussian_to_json(const CondGaussian &g);
CondGaussian cond_gaussian_from_json(const json &j);

// Standalone parameter document with a schema-version field.
json param_document(const Mlp &net);
Mlp mlp_from_document(const json &doc);

} // namespace mcei
