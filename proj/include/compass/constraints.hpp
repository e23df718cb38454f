#pragma once

#include <span>
#include <string>
#include <vector>

#include "compass/data.hpp"
#include "compass/table.hpp"
#include "json.hpp"

namespace compass {

enum class ConstraintKind {
    bound_lower,       // lhs >= value
    bound_upper,       // lhs <= value
    equality_const,    // lhs == value
    equality_linear,   // lhs == coef * rhs + offset
    inequality_linear, // lhs <= / >= coef * rhs + offset
    categorical_equals // lhs == category
};

struct Constraint {
    ConstraintKind kind = ConstraintKind::bound_upper;
    std::string feature;
    double value = 0.0;
    std::string category;
    std::string rhs_feature;
    double coef = 1.0;
    double offset = 0.0;
    bool less_equal = true; // inequality_linear direction
    double penalty_scale = 1.0;
};

/// JSON grammar:
///   {"feature":"num_gpus_req","op":"<=","coef":4,"rhs_feature":"num_nodes_req","offset":0}
///   {"feature":"job_state","op":"==","value":"completed"}
///   {"feature":"p","op":">=","value":64}
/// plus optional "penalty_scale". `op` is one of <=, >=, ==.
Constraint constraint_from_json(const nlohmann::json& j);
nlohmann::json constraint_to_json(const Constraint& c);

struct Violation {
    double phi = 0.0;
    std::vector<std::size_t> violated; // item indices
};

/// Constraints bound to a schema's columns. Evaluated on full rows (every
/// schema column, in schema order). Immutable and safe to share.
class ConstraintSet {
public:
    ConstraintSet() = default;
    /// Throws SchemaError when a referenced column is missing or has the wrong kind.
    ConstraintSet(std::vector<Constraint> items, const FeatureSchema& schema);

    const std::vector<Constraint>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    /// phi_k: 0 when satisfied, else penalty_scale times the range-normalized
    /// violation (numeric) or 1 (categorical).
    double item_penalty(std::size_t k, std::span<const Cell> row) const;
    Violation evaluate(std::span<const Cell> row) const;

    /// Numeric bound items on `column` folded into an interval (for clipping).
    std::pair<double, double> bounds_for(std::size_t column, double lo, double hi) const;

private:
    struct Bound {
        std::size_t lhs = 0;
        std::size_t rhs = 0;
        double range = 1.0;
    };
    std::vector<Constraint> items_;
    std::vector<Bound> bound_;
};

ConstraintSet parse_constraints(const nlohmann::json& array, const FeatureSchema& schema);

Violation violation(const ConstraintSet& set, std::span<const Cell> row);

struct FilterResult {
    std::vector<std::size_t> satisfying; // row ids with phi == 0
    std::vector<std::size_t> fallback;   // row ids attaining the maximum satisfied count
    std::size_t max_satisfied = 0;
};

FilterResult filter(const Table& table, const ConstraintSet& set);
/// Over train and validation, in row-id order.
FilterResult filter(const DatasetHandle& handle, const ConstraintSet& set);

} // namespace compass
