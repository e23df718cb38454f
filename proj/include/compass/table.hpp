#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace compass {

enum class ColumnKind { numeric, categorical };
enum class ColumnRole { user_feature, system_feature, target };
enum class TargetTask { regression, classification };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(ColumnRole role);
std::string_view to_string(TargetTask task);
ColumnKind column_kind_from_string(std::string_view text);
ColumnRole column_role_from_string(std::string_view text);
TargetTask target_task_from_string(std::string_view text);

/// A raw table cell: numeric value or category label.
using Cell = std::variant<double, std::string>;

/// A raw configuration: one cell per feature column, in schema feature order.
using Config = std::vector<Cell>;

std::string format_cell(const Cell& cell);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    ColumnRole role = ColumnRole::user_feature;
    std::optional<TargetTask> target_task;
    bool is_mutable = true;
    bool integral = false; // numeric column whose observed values are all integers
    double min = 0.0;
    double max = 0.0;
    std::vector<std::string> categories; // sorted; position is the ordinal code

    /// max - min, or 1 for a degenerate column.
    double range() const;
    std::optional<int> code_of(std::string_view category) const;
};

class FeatureSchema {
public:
    FeatureSchema() = default;
    /// Validates role invariants: at least one target and one user feature.
    explicit FeatureSchema(std::vector<ColumnSpec> columns);

    const std::vector<ColumnSpec>& columns() const { return columns_; }
    const ColumnSpec& column(std::size_t index) const { return columns_.at(index); }
    std::size_t size() const { return columns_.size(); }

    std::optional<std::size_t> find(std::string_view name) const;
    /// Throws SchemaError for unknown names.
    std::size_t index_of(std::string_view name) const;

    const std::vector<std::size_t>& feature_columns() const { return features_; }
    const std::vector<std::size_t>& target_columns() const { return targets_; }
    std::size_t feature_count() const { return features_.size(); }
    const ColumnSpec& feature(std::size_t position) const { return columns_[features_[position]]; }
    std::optional<std::size_t> feature_position(std::string_view name) const;
    std::vector<std::string> feature_names() const;
    /// One flag per feature position.
    std::vector<bool> categorical_mask() const;

private:
    std::vector<ColumnSpec> columns_;
    std::vector<std::size_t> features_;
    std::vector<std::size_t> targets_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

/// Rows keep every schema column, in schema order. row_ids are data-row
/// indices in the source file (0-based, before filtering).
struct Table {
    std::vector<std::size_t> row_ids;
    std::vector<std::vector<Cell>> rows;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

Config feature_config(const FeatureSchema& schema, std::span<const Cell> row);

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

} // namespace compass
