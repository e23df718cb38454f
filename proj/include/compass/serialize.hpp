#pragma once

#include "compass/bench.hpp"
#include "compass/data.hpp"
#include "compass/generator.hpp"
#include "compass/surrogate.hpp"
#include "compass/trust.hpp"
#include "json.hpp"

namespace compass {

nlohmann::json cell_to_json(const Cell& cell);
/// Object keyed by feature name; throws QueryError on missing or mistyped features.
Config config_from_json(const nlohmann::json& j, const FeatureSchema& schema);
nlohmann::json config_to_json(const Config& config, const FeatureSchema& schema);

nlohmann::json schema_to_json(const FeatureSchema& schema);
nlohmann::json dataset_summary(const DatasetHandle& handle);
nlohmann::json row_to_json(std::size_t row_id, const std::vector<Cell>& row, const FeatureSchema& schema);

nlohmann::json prediction_to_json(const Prediction& p, const FeatureSchema& schema);
nlohmann::json verdict_to_json(const TrustVerdict& v, const FeatureSchema& schema, std::size_t support_limit = 25);
nlohmann::json candidate_to_json(const Candidate& c, const FeatureSchema& schema);
/// Top-gamma candidates in full; with `include_retained`, the remaining
/// candidates as (config, total_loss) pairs. No timings, so equal inputs give
/// byte-identical output.
nlohmann::json candidate_set_to_json(const CandidateSet& set, const FeatureSchema& schema,
                                     bool include_retained = false);

nlohmann::json selection_report_to_json(const SurrogateBundle& bundle);
nlohmann::json eval_report_to_json(const EvalReport& report);

} // namespace compass
