#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "compass/table.hpp"

namespace compass {

struct SamplingConfig {
    double retention = 0.2;                // `sampling.retention`
    std::size_t threshold_rows = 100'000;  // `sampling.threshold_rows`
    std::size_t max_pool_rows = 2'000'000; // cap on the scored pool S
    int fold_trees = 25;
    int fold_max_depth = 8;
};

struct SampleScore {
    std::size_t row_id = 0;
    std::vector<double> per_target_loss; // raw cross-fold losses, one per target
    double score = 0.0;                   // in [0, 1]
};

/// Cross-fold loss scoring: the pool is split into three folds; each fold is
/// predicted by a shallow forest trained on the other two, so every row gets
/// exactly one out-of-fold prediction. Requires at least 30 rows.
std::vector<SampleScore> score_subset(const Table& pool, const FeatureSchema& schema,
                                      std::uint64_t seed, const SamplingConfig& config = {});

/// Mean of the two largest normalized losses (or the single one when m = 1).
double aggregate_score(std::span<const double> normalized_losses);

/// Weighted sampling without replacement, weight = score + 1e-6.
/// Returns round(retention * n) row ids in ascending order.
std::vector<std::size_t> select_subset(std::span<const SampleScore> scores, double retention,
                                       std::uint64_t seed);

/// Scores `table` (capped at config.max_pool_rows) and keeps the selected rows.
Table subsample(const Table& table, const FeatureSchema& schema, std::uint64_t seed,
                const SamplingConfig& config);

} // namespace compass
