#include "compass/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "compass/error.hpp"

namespace compass {

using nlohmann::json;

namespace {

constexpr double kTolerance = 1e-9;

const double* number(const Cell& c) { return std::get_if<double>(&c); }

} // namespace

Constraint constraint_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("constraint must be a JSON object");
    Constraint c;
    try {
        if (!j.contains("feature") && j.size() == 1) {
            // {"job_state": "completed"} shorthand for an equality pin.
            const auto& [key, value] = *j.items().begin();
            json expanded = {{"feature", key}, {"op", "=="}, {"value", value}};
            return constraint_from_json(expanded);
        }
        c.feature = j.at("feature").get<std::string>();
        const auto op = j.at("op").get<std::string>();
        if (op != "<=" && op != ">=" && op != "==") throw SchemaError("unsupported constraint operator '" + op + "'");
        if (j.contains("penalty_scale")) {
            c.penalty_scale = j["penalty_scale"].get<double>();
            if (!(c.penalty_scale > 0)) throw SchemaError("penalty_scale must be positive");
        }
        if (j.contains("rhs_feature")) {
            c.rhs_feature = j["rhs_feature"].get<std::string>();
            c.coef = j.value("coef", 1.0);
            c.offset = j.value("offset", 0.0);
            c.kind = op == "==" ? ConstraintKind::equality_linear : ConstraintKind::inequality_linear;
            c.less_equal = op != ">=";
            return c;
        }
        const auto& v = j.at("value");
        if (v.is_string()) {
            if (op != "==") throw SchemaError("categorical constraints only support '=='");
            c.kind = ConstraintKind::categorical_equals;
            c.category = v.get<std::string>();
            return c;
        }
        c.value = v.get<double>();
        c.kind = op == "<=" ? ConstraintKind::bound_upper
                            : (op == ">=" ? ConstraintKind::bound_lower : ConstraintKind::equality_const);
        return c;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed constraint: ") + e.what());
    }
}

json constraint_to_json(const Constraint& c) {
    json j = {{"feature", c.feature}};
    switch (c.kind) {
    case ConstraintKind::bound_lower: j["op"] = ">="; j["value"] = c.value; break;
    case ConstraintKind::bound_upper: j["op"] = "<="; j["value"] = c.value; break;
    case ConstraintKind::equality_const: j["op"] = "=="; j["value"] = c.value; break;
    case ConstraintKind::categorical_equals: j["op"] = "=="; j["value"] = c.category; break;
    case ConstraintKind::equality_linear:
    case ConstraintKind::inequality_linear:
        j["op"] = c.kind == ConstraintKind::equality_linear ? "==" : (c.less_equal ? "<=" : ">=");
        j["rhs_feature"] = c.rhs_feature;
        j["coef"] = c.coef;
        j["offset"] = c.offset;
        break;
    }
    if (c.penalty_scale != 1.0) j["penalty_scale"] = c.penalty_scale;
    return j;
}

ConstraintSet::ConstraintSet(std::vector<Constraint> items, const FeatureSchema& schema) : items_(std::move(items)) {
    for (const auto& c : items_) {
        Bound b;
        b.lhs = schema.index_of(c.feature);
        const auto& lhs = schema.column(b.lhs);
        const bool categorical = c.kind == ConstraintKind::categorical_equals;
        if (categorical && lhs.kind != ColumnKind::categorical)
            throw SchemaError("constraint on '" + c.feature + "' compares a category but the column is numeric");
        if (!categorical && lhs.kind != ColumnKind::numeric)
            throw SchemaError("constraint on '" + c.feature + "' is numeric but the column is categorical");
        if (c.kind == ConstraintKind::equality_linear || c.kind == ConstraintKind::inequality_linear) {
            b.rhs = schema.index_of(c.rhs_feature);
            if (schema.column(b.rhs).kind != ColumnKind::numeric)
                throw SchemaError("linear constraint references categorical column '" + c.rhs_feature + "'");
        }
        b.range = lhs.range();
        bound_.push_back(b);
    }
}

double ConstraintSet::item_penalty(std::size_t k, std::span<const Cell> row) const {
    const auto& c = items_[k];
    const auto& b = bound_[k];
    if (c.kind == ConstraintKind::categorical_equals) {
        const auto* s = std::get_if<std::string>(&row[b.lhs]);
        return s && *s == c.category ? 0.0 : c.penalty_scale;
    }
    const double* lhs = number(row[b.lhs]);
    if (!lhs) return c.penalty_scale;
    double excess = 0.0;
    switch (c.kind) {
    case ConstraintKind::bound_lower: excess = std::max(0.0, c.value - *lhs); break;
    case ConstraintKind::bound_upper: excess = std::max(0.0, *lhs - c.value); break;
    case ConstraintKind::equality_const: excess = std::abs(*lhs - c.value); break;
    case ConstraintKind::equality_linear:
    case ConstraintKind::inequality_linear: {
        const double* rhs = number(row[b.rhs]);
        if (!rhs) return c.penalty_scale;
        const double diff = *lhs - (c.coef * *rhs + c.offset);
        if (c.kind == ConstraintKind::equality_linear) excess = std::abs(diff);
        else excess = c.less_equal ? std::max(0.0, diff) : std::max(0.0, -diff);
        break;
    }
    case ConstraintKind::categorical_equals: break;
    }
    const double normalized = excess / b.range;
    return normalized <= kTolerance ? 0.0 : c.penalty_scale * normalized;
}

Violation ConstraintSet::evaluate(std::span<const Cell> row) const {
    Violation v;
    for (std::size_t k = 0; k < items_.size(); ++k) {
        const double phi = item_penalty(k, row);
        if (phi > 0.0) {
            v.phi += phi;
            v.violated.push_back(k);
        }
    }
    return v;
}

std::pair<double, double> ConstraintSet::bounds_for(std::size_t column, double lo, double hi) const {
    for (std::size_t k = 0; k < items_.size(); ++k) {
        if (bound_[k].lhs != column) continue;
        const auto& c = items_[k];
        if (c.kind == ConstraintKind::bound_lower || c.kind == ConstraintKind::equality_const) lo = std::max(lo, c.value);
        if (c.kind == ConstraintKind::bound_upper || c.kind == ConstraintKind::equality_const) hi = std::min(hi, c.value);
    }
    return {lo, hi};
}

ConstraintSet parse_constraints(const json& array, const FeatureSchema& schema) {
    std::vector<Constraint> items;
    if (array.is_null()) return ConstraintSet({}, schema);
    if (array.is_object()) {
        if (array.contains("feature")) {
            items.push_back(constraint_from_json(array));
        } else {
            for (const auto& [key, value] : array.items()) items.push_back(constraint_from_json(json{{key, value}}));
        }
    } else if (array.is_array()) {
        for (const auto& c : array) items.push_back(constraint_from_json(c));
    } else {
        throw SchemaError("constraints must be a JSON array or object");
    }
    return ConstraintSet(std::move(items), schema);
}

Violation violation(const ConstraintSet& set, std::span<const Cell> row) { return set.evaluate(row); }

FilterResult filter(const Table& table, const ConstraintSet& set) {
    FilterResult result;
    std::vector<std::size_t> satisfied(table.size());
    for (std::size_t r = 0; r < table.size(); ++r) {
        std::size_t count = 0;
        for (std::size_t k = 0; k < set.size(); ++k) count += set.item_penalty(k, table.rows[r]) == 0.0;
        satisfied[r] = count;
        result.max_satisfied = std::max(result.max_satisfied, count);
    }
    for (std::size_t r = 0; r < table.size(); ++r) {
        if (satisfied[r] == set.size()) result.satisfying.push_back(table.row_ids[r]);
        if (satisfied[r] == result.max_satisfied) result.fallback.push_back(table.row_ids[r]);
    }
    return result;
}

FilterResult filter(const DatasetHandle& handle, const ConstraintSet& set) {
    Table all;
    std::size_t i = 0, j = 0;
    const auto& a = handle.train();
    const auto& b = handle.validation();
    while (i < a.size() || j < b.size()) {
        const bool take_a = j >= b.size() || (i < a.size() && a.row_ids[i] < b.row_ids[j]);
        const Table& src = take_a ? a : b;
        std::size_t& k = take_a ? i : j;
        all.row_ids.push_back(src.row_ids[k]);
        all.rows.push_back(src.rows[k]);
        ++k;
    }
    return filter(all, set);
}

} // namespace compass
