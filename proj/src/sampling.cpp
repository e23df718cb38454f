#include "compass/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "compass/data.hpp"
#include "compass/error.hpp"
#include "compass/models.hpp"
#include "compass/parallel.hpp"

namespace compass {

namespace {

constexpr std::size_t kFolds = 3;
constexpr double kWeightFloor = 1e-6;

// Trees are invariant to monotone rescaling, so raw numerics are used as-is.
Matrix raw_features(const Table& pool, const FeatureSchema& schema) {
    Matrix x(pool.size(), schema.feature_count());
    for (std::size_t r = 0; r < pool.size(); ++r) {
        for (std::size_t p = 0; p < schema.feature_count(); ++p) {
            const auto& spec = schema.feature(p);
            const auto& cell = pool.rows[r][schema.feature_columns()[p]];
            x(r, p) = spec.kind == ColumnKind::numeric ? std::get<double>(cell)
                                                       : spec.code_of(std::get<std::string>(cell)).value_or(-1);
        }
    }
    return x;
}

} // namespace

double aggregate_score(std::span<const double> normalized_losses) {
    if (normalized_losses.empty()) return 0.0;
    if (normalized_losses.size() == 1) return normalized_losses[0];
    std::vector<double> v(normalized_losses.begin(), normalized_losses.end());
    std::partial_sort(v.begin(), v.begin() + 2, v.end(), std::greater<>());
    return (v[0] + v[1]) / 2.0;
}

std::vector<SampleScore> score_subset(const Table& pool, const FeatureSchema& schema, std::uint64_t seed,
                                      const SamplingConfig& config) {
    const std::size_t n = pool.size();
    if (n < 10 * kFolds) throw Error("subset scoring needs at least 30 rows, got " + std::to_string(n));

    const Matrix x = raw_features(pool, schema);
    const SortedFeatures sorted(x);
    const TrainingSet data{&x, &sorted, schema.categorical_mask()};

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = i % kFolds;

    ForestParams forest;
    forest.trees = config.fold_trees;
    forest.max_depth = config.fold_max_depth;

    const auto& targets = schema.target_columns();
    const std::size_t m = targets.size();
    std::vector<std::vector<double>> loss(m, std::vector<double>(n, 0.0));

    for (std::size_t t = 0; t < m; ++t) {
        const auto& spec = schema.column(targets[t]);
        HeadSpec head{spec.name, *spec.target_task, static_cast<int>(spec.categories.size())};
        std::vector<double> y(n);
        for (std::size_t r = 0; r < n; ++r) y[r] = encode_target(spec, pool.rows[r][targets[t]]);

        parallel_for(kFolds, [&](std::size_t k) {
            std::vector<double> weights(n);
            for (std::size_t r = 0; r < n; ++r) weights[r] = fold_of[r] == k ? 0.0 : 1.0;

            if (head.task == TargetTask::classification) {
                std::set<int> classes;
                for (std::size_t r = 0; r < n; ++r)
                    if (weights[r] > 0) classes.insert(static_cast<int>(y[r]));
                if (classes.size() == 1) {
                    warn("fold " + std::to_string(k) + " of target '" + spec.name +
                         "' has a single class; using a constant-probability predictor");
                    const int only = *classes.begin();
                    for (std::size_t r = 0; r < n; ++r)
                        if (fold_of[r] == k) loss[t][r] = static_cast<int>(y[r]) == only ? 0.0 : 1.0;
                    return;
                }
            }
            const Model model = fit_model(Family::random_forest, data, y, head, weights,
                                          derive_seed(seed, 10 * t + k + 1), forest, {}, {});
            for (std::size_t r = 0; r < n; ++r) {
                if (fold_of[r] != k) continue;
                const auto pred = predict_model(model, x.row(r));
                loss[t][r] = head.task == TargetTask::regression
                                 ? std::abs(y[r] - pred[0])
                                 : 1.0 - pred[static_cast<std::size_t>(y[r])];
            }
        });
    }

    std::vector<std::vector<double>> normalized(m, std::vector<double>(n, 0.0));
    for (std::size_t t = 0; t < m; ++t) {
        const auto [lo, hi] = std::minmax_element(loss[t].begin(), loss[t].end());
        const double span = *hi - *lo;
        for (std::size_t r = 0; r < n; ++r) normalized[t][r] = span > 0 ? (loss[t][r] - *lo) / span : 0.0;
    }

    std::vector<SampleScore> scores(n);
    std::vector<double> row_norm(m);
    for (std::size_t r = 0; r < n; ++r) {
        scores[r].row_id = pool.row_ids[r];
        scores[r].per_target_loss.resize(m);
        for (std::size_t t = 0; t < m; ++t) {
            scores[r].per_target_loss[t] = loss[t][r];
            row_norm[t] = normalized[t][r];
        }
        scores[r].score = aggregate_score(row_norm);
    }
    return scores;
}

std::vector<std::size_t> select_subset(std::span<const SampleScore> scores, double retention,
                                       std::uint64_t seed) {
    if (!(retention > 0.0 && retention <= 1.0)) throw Error("retention must lie in (0, 1]");
    const std::size_t n = scores.size();
    const auto k = static_cast<std::size_t>(std::llround(retention * static_cast<double>(n)));
    if (k < 1) throw Error("retention selects no rows from a pool of " + std::to_string(n));

    std::vector<std::size_t> ids;
    if (k >= n) {
        for (const auto& s : scores) ids.push_back(s.row_id);
    } else {
        // Efraimidis-Spirakis: keep the k largest log(u) / w.
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<std::pair<double, std::size_t>> keyed(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = std::max(unit(rng), std::numeric_limits<double>::min());
            keyed[i] = {std::log(u) / (scores[i].score + kWeightFloor), i};
        }
        std::nth_element(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k), keyed.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
        for (std::size_t i = 0; i < k; ++i) ids.push_back(scores[keyed[i].second].row_id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

Table subsample(const Table& table, const FeatureSchema& schema, std::uint64_t seed,
                const SamplingConfig& config) {
    Table pool;
    if (table.size() > config.max_pool_rows) {
        std::vector<std::size_t> idx(table.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(derive_seed(seed, 77));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(config.max_pool_rows);
        std::sort(idx.begin(), idx.end());
        for (auto i : idx) {
            pool.row_ids.push_back(table.row_ids[i]);
            pool.rows.push_back(table.rows[i]);
        }
    }
    const Table& source = pool.empty() ? table : pool;
    const auto scores = score_subset(source, schema, derive_seed(seed, 1), config);
    const auto keep = select_subset(scores, config.retention, derive_seed(seed, 2));

    Table out;
    std::size_t j = 0;
    for (std::size_t i = 0; i < source.size() && j < keep.size(); ++i) {
        if (source.row_ids[i] != keep[j]) continue;
        out.row_ids.push_back(source.row_ids[i]);
        out.rows.push_back(source.rows[i]);
        ++j;
    }
    return out;
}

} // namespace compass
