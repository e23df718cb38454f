#include "compass/serialize.hpp"

#include <cmath>

#include "compass/error.hpp"

namespace compass {

using nlohmann::json;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json range_bound(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

} // namespace

json cell_to_json(const Cell& cell) {
    if (const auto* d = std::get_if<double>(&cell)) return number(*d);
    return std::get<std::string>(cell);
}

Config config_from_json(const json& j, const FeatureSchema& schema) {
    if (!j.is_object()) throw QueryError("configuration must be an object keyed by feature name");
    Config c(schema.feature_count());
    for (std::size_t p = 0; p < schema.feature_count(); ++p) {
        const auto& spec = schema.feature(p);
        if (!j.contains(spec.name)) throw QueryError("configuration is missing feature '" + spec.name + "'");
        const auto& v = j[spec.name];
        if (spec.kind == ColumnKind::numeric) {
            if (!v.is_number()) throw QueryError("feature '" + spec.name + "' must be a number");
            c[p] = v.get<double>();
        } else {
            if (!v.is_string()) throw QueryError("feature '" + spec.name + "' must be a string");
            c[p] = v.get<std::string>();
        }
    }
    return c;
}

json config_to_json(const Config& config, const FeatureSchema& schema) {
    json j = json::object();
    for (std::size_t p = 0; p < config.size(); ++p) j[schema.feature(p).name] = cell_to_json(config[p]);
    return j;
}

json schema_to_json(const FeatureSchema& schema) {
    json cols = json::array();
    for (const auto& c : schema.columns()) {
        json j = {{"name", c.name}, {"kind", to_string(c.kind)}, {"role", to_string(c.role)}, {"mutable", c.is_mutable}};
        if (c.target_task) j["target_task"] = to_string(*c.target_task);
        if (c.kind == ColumnKind::numeric) {
            j["min"] = c.min;
            j["max"] = c.max;
            j["integral"] = c.integral;
        } else {
            j["categories"] = c.categories;
        }
        cols.push_back(j);
    }
    return {{"columns", cols}};
}

json dataset_summary(const DatasetHandle& handle) {
    return {{"dataset_id", handle.id()},
            {"schema", schema_to_json(handle.schema())},
            {"row_counts",
             {{"source", handle.source_rows()},
              {"train", handle.train().size()},
              {"validation", handle.validation().size()}}},
            {"seed", handle.seed()}};
}

json row_to_json(std::size_t row_id, const std::vector<Cell>& row, const FeatureSchema& schema) {
    json values = json::object();
    for (std::size_t c = 0; c < row.size(); ++c) values[schema.column(c).name] = cell_to_json(row[c]);
    return {{"row_id", row_id}, {"values", values}};
}

json prediction_to_json(const Prediction& p, const FeatureSchema& schema) {
    json j = json::object();
    const auto& targets = schema.target_columns();
    for (std::size_t h = 0; h < targets.size() && h < p.values.size(); ++h) {
        const ColumnSpec& spec = schema.column(targets[h]);
        if (spec.kind == ColumnKind::categorical) {
            json scores = json::object();
            for (std::size_t c = 0; c < spec.categories.size() && c < p.scores[h].size(); ++c)
                scores[spec.categories[c]] = p.scores[h][c];
            const auto code = static_cast<std::size_t>(p.values[h]);
            j[spec.name] = {{"label", code < spec.categories.size() ? spec.categories[code] : ""}, {"scores", scores}};
        } else {
            j[spec.name] = number(p.values[h]);
        }
    }
    return j;
}

json verdict_to_json(const TrustVerdict& v, const FeatureSchema& schema, std::size_t support_limit) {
    json j = {{"label", to_string(v.label)},
              {"ood", v.ood},
              {"uq", v.uq ? json(*v.uq) : json(nullptr)},
              {"knn_distance", v.knn_distance},
              {"support_count", v.support.size()},
              {"reason", v.reason}};
    json support = json::array();
    for (std::size_t i = 0; i < v.support.size() && i < support_limit; ++i)
        support.push_back({{"row_id", v.support[i].row_id}, {"distance", v.support[i].distance}});
    j["support"] = support;
    if (v.next_runs) {
        json runs = json::array();
        for (const auto& c : *v.next_runs) runs.push_back(config_to_json(c, schema));
        j["next_runs"] = runs;
    } else {
        j["next_runs"] = nullptr;
    }
    return j;
}

json candidate_to_json(const Candidate& c, const FeatureSchema& schema) {
    json j = {{"config", config_to_json(c.config, schema)},
              {"prediction", prediction_to_json(c.prediction, schema)},
              {"loss_terms", {{"valid", c.loss.valid}, {"prox", c.loss.prox}, {"cons", c.loss.cons}, {"div", c.loss.div}}},
              {"total_loss", c.total_loss},
              {"violated", c.violated}};
    j["trust"] = c.trust ? verdict_to_json(*c.trust, schema) : json(nullptr);
    return j;
}

json candidate_set_to_json(const CandidateSet& set, const FeatureSchema& schema, bool include_retained) {
    json targets = json::array();
    for (const auto& t : set.targets) {
        json r = {{"name", t.name}, {"task", to_string(t.task)}};
        if (t.task == TargetTask::classification) {
            r["class"] = schema.column(t.column).categories[static_cast<std::size_t>(t.class_code)];
        } else {
            r["min"] = range_bound(t.range.lo);
            r["max"] = range_bound(t.range.hi);
        }
        targets.push_back(r);
    }
    json top = json::array();
    for (const auto& c : set.top()) top.push_back(candidate_to_json(c, schema));
    json j = {{"kind", to_string(set.kind)},
              {"target_unmet", set.target_unmet},
              {"baseline",
               {{"row_id", set.baseline_row_id ? json(*set.baseline_row_id) : json(nullptr)},
                {"config", config_to_json(set.baseline, schema)},
                {"prediction", prediction_to_json(set.baseline_prediction, schema)}}},
              {"targets", targets},
              {"mutable_features", set.mutable_features},
              {"gamma", set.gamma},
              {"n_retained", set.candidates.size()},
              {"diversity", set.diversity},
              {"generations_run", set.generations_run},
              {"evaluations", set.evaluations},
              {"candidates", top}};
    if (set.kind == QueryKind::what_if) {
        json delta = json::object();
        const auto& cols = schema.target_columns();
        for (std::size_t h = 0; h < set.delta.size(); ++h) delta[schema.column(cols[h]).name] = number(set.delta[h]);
        j["delta"] = delta;
    }
    if (include_retained) {
        json rest = json::array();
        for (std::size_t i = set.top().size(); i < set.candidates.size(); ++i)
            rest.push_back({{"config", config_to_json(set.candidates[i].config, schema)},
                            {"total_loss", set.candidates[i].total_loss}});
        j["retained"] = rest;
    }
    return j;
}

json selection_report_to_json(const SurrogateBundle& bundle) {
    json report = json::array();
    for (const auto& e : bundle.selection_report)
        report.push_back({{"family", to_string(e.family)},
                          {"cv_error", e.cv_error ? json(*e.cv_error) : json(nullptr)},
                          {"note", e.note}});
    return {{"family", to_string(bundle.primary.family())},
            {"ensemble_size", bundle.ensemble.size()},
            {"targets", bundle.primary.target_names()},
            {"selection_report", report},
            {"seed", bundle.seed}};
}

json eval_report_to_json(const EvalReport& r) {
    json queries = json::array();
    for (const auto& q : r.queries)
        queries.push_back({{"row_id", q.row_id},
                           {"masked", q.masked},
                           {"diff_norm", q.diff_norm},
                           {"penalty_norm", q.penalty_norm},
                           {"penalized", q.penalized},
                           {"ape", q.ape ? json(*q.ape) : json(nullptr)},
                           {"target_unmet", q.target_unmet}});
    return {{"queries", queries},
            {"penalized_mape", {{"mean", r.mean}, {"ci95", {r.ci_low, r.ci_high}}}},
            {"ape", {{"values", r.ape},
                     {"min", r.ape_min ? json(*r.ape_min) : json(nullptr)},
                     {"mean", r.ape_mean ? json(*r.ape_mean) : json(nullptr)}}}};
}

} // namespace compass
