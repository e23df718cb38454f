#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compass/sampling.hpp"
#include "compass/table.hpp"

namespace compass {

struct ColumnHint {
    std::string name;
    std::optional<ColumnKind> kind;
    std::optional<ColumnRole> role;
    std::optional<TargetTask> target_task;
    std::optional<bool> is_mutable;
};

struct SchemaHints {
    std::vector<ColumnHint> columns;
    std::vector<std::string> drop;
};

/// `{"columns":[{"name":..,"kind":..,"role":..,"target_task":..,"mutable":..}],"drop":[..]}`
SchemaHints parse_schema_hints(std::string_view json_text);

struct IngestOptions {
    SchemaHints hints;
    std::vector<std::string> drop_columns;
    std::uint64_t seed = 0;
    bool enable_subsampling = false;
    SamplingConfig sampling;
    std::string id = "dataset";
};

struct ColumnStats {
    double mean = 0.0;
    double stddev = 0.0; // population std over train rows; 0 marks a degenerate column
};

/// Immutable after construction; safe for concurrent reads.
class DatasetHandle {
public:
    DatasetHandle(std::string id, FeatureSchema schema, Table train, Table validation,
                  std::uint64_t seed, std::size_t source_rows);

    const std::string& id() const { return id_; }
    const FeatureSchema& schema() const { return schema_; }
    const Table& train() const { return train_; }
    const Table& validation() const { return validation_; }
    std::uint64_t seed() const { return seed_; }
    /// Post-filter row count before any subsampling.
    std::size_t source_rows() const { return source_rows_; }
    /// Per feature position; categorical entries are unused.
    const std::vector<ColumnStats>& scaler() const { return scaler_; }

    /// Numerics standardized by train stats (degenerate columns map to 0),
    /// categoricals to their sorted-order code. Throws UnknownCategory.
    std::vector<double> normalize(const Config& config) const;
    /// As normalize, but an unseen category encodes as -1 (never equal to a real code).
    std::vector<double> normalize_lenient(const Config& config) const;
    /// Exact inverse of normalize up to rounding. Throws ShapeError / UnknownCode.
    Config denormalize(std::span<const double> encoded) const;

    double encode_feature(std::size_t position, double raw) const;
    double decode_feature(std::size_t position, double encoded) const;

    /// Encoded features of every train / validation row.
    const Matrix& train_features() const { return train_x_; }
    const Matrix& validation_features() const { return validation_x_; }

    /// Regression value or class code of `target_column` for every row of `table`.
    std::vector<double> target_values(const Table& table, std::size_t target_column) const;

    struct RowRef {
        const Table* table;
        std::size_t index;
    };
    /// Looks a row id up in train, then validation.
    std::optional<RowRef> locate(std::size_t row_id) const;

private:
    std::vector<double> encode(const Config& config, bool lenient) const;

    std::string id_;
    FeatureSchema schema_;
    Table train_;
    Table validation_;
    std::uint64_t seed_ = 0;
    std::size_t source_rows_ = 0;
    std::vector<ColumnStats> scaler_;
    Matrix train_x_;
    Matrix validation_x_;
};

/// Parses, filters rows with missing values, drops columns, optionally
/// subsamples, then splits 80/20 under `options.seed`.
DatasetHandle ingest(std::string_view csv_text, const IngestOptions& options);

/// Regression value or class code for a target cell.
double encode_target(const ColumnSpec& column, const Cell& cell);

} // namespace compass
