#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "compass/constraints.hpp"
#include "compass/data.hpp"
#include "compass/surrogate.hpp"

namespace compass {

/// sqrt(sum over numerics of (a_j - b_j)^2 + number of categorical mismatches).
double mixed_distance(std::span<const double> a, std::span<const double> b, const std::vector<bool>& categorical);

/// Exact metric index (vantage-point tree) over the rows of a matrix.
class VpTree {
public:
    VpTree() = default;
    VpTree(const Matrix* points, std::vector<bool> categorical);

    /// The k nearest rows as (distance, row index), ascending; ties broken by row index.
    std::vector<std::pair<double, std::size_t>> nearest(std::span<const double> query, std::size_t k) const;
    /// Every row within `radius` (inclusive), ascending.
    std::vector<std::pair<double, std::size_t>> within(std::span<const double> query, double radius) const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::size_t point = 0;
        double mu = 0.0;
        int inside = -1;
        int outside = -1;
    };
    int build(std::vector<std::size_t>& items, std::size_t lo, std::size_t hi);
    double distance(std::span<const double> q, std::size_t row) const;

    const Matrix* points_ = nullptr;
    std::vector<bool> categorical_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

enum class TrustLabel { trusted, caution, unsupported };
std::string_view to_string(TrustLabel label);

struct TrustConfig {
    int k = 20;
    double caution = 0.95;
    double unsupported = 0.99;
    std::optional<double> tau_close; // default: 5th percentile of validation distances
    double tau_percentile = 0.05;
    int next_runs = 4;
};

struct SupportEntry {
    std::size_t row_id = 0;
    double distance = 0.0;
};

struct TrustVerdict {
    TrustLabel label = TrustLabel::trusted;
    double ood = 0.0;
    std::optional<double> uq;
    double knn_distance = 0.0;
    std::optional<double> variance;
    std::vector<SupportEntry> support; // ascending distance, all <= tau_close
    std::string reason;
    std::optional<std::vector<Config>> next_runs;
};

/// Built once per (handle, bundle). Keeps a pointer to the handle, which must
/// outlive the index. Immutable afterwards.
class TrustIndex {
public:
    /// Throws IndexUnavailable when the validation partition is empty.
    TrustIndex(const DatasetHandle& handle, const SurrogateBundle& bundle, TrustConfig config = {});

    const DatasetHandle& handle() const { return *handle_; }
    const TrustConfig& config() const { return config_; }
    std::size_t k() const { return k_; }
    double tau_close() const { return tau_close_; }

    /// Mean distance from encoded x to its k nearest train rows.
    double knn_distance(std::span<const double> encoded) const;
    std::vector<SupportEntry> support(std::span<const double> encoded) const;

    /// Fraction of validation points whose statistic is <= the given value.
    double ood_score(double distance) const;
    double uq_score(double variance) const;

    /// Unsorted, in validation row order.
    const std::vector<double>& validation_distances() const { return val_distance_; }
    const std::vector<double>& validation_variances() const { return val_variance_; }

private:
    const DatasetHandle* handle_ = nullptr;
    TrustConfig config_;
    std::vector<bool> categorical_;
    VpTree tree_;
    std::size_t k_ = 0;
    double tau_close_ = 0.0;
    std::vector<double> val_distance_;
    std::vector<double> val_variance_;
    std::vector<double> sorted_distance_;
    std::vector<double> sorted_variance_;
};

/// `bounds` (optional) clips next-run suggestions.
TrustVerdict assess(const Config& x, const TrustIndex& index, const SurrogateBundle& bundle,
                    std::uint64_t seed = 0, const ConstraintSet* bounds = nullptr);

/// x first, then count - 1 perturbations of x on the tau_close sphere
/// (numerics only; categoricals held).
std::vector<Config> suggest_next_runs(const Config& x, const TrustIndex& index, int count, std::uint64_t seed,
                                      const ConstraintSet* bounds = nullptr);

/// Type-7 (linear interpolation) quantile of unsorted values.
double quantile(std::vector<double> values, double q);

} // namespace compass
