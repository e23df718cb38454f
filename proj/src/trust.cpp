#include "compass/trust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "compass/error.hpp"
#include "compass/parallel.hpp"

namespace compass {

namespace {

// Float slack for triangle-inequality pruning; keeps the search exact.
double slack(double a, double b) { return 1e-9 * (1.0 + std::abs(a) + std::abs(b)); }

std::string fixed(double v, int digits) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(digits);
    out << v;
    return out.str();
}

} // namespace

double mixed_distance(std::span<const double> a, std::span<const double> b, const std::vector<bool>& categorical) {
    if (a.size() != b.size()) throw ShapeError("mixed_distance: dimension mismatch");
    double sum = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (j < categorical.size() && categorical[j]) {
            sum += a[j] != b[j] ? 1.0 : 0.0;
        } else {
            const double d = a[j] - b[j];
            sum += d * d;
        }
    }
    return std::sqrt(sum);
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw MetricUndefined("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// --- VpTree ---

VpTree::VpTree(const Matrix* points, std::vector<bool> categorical)
    : points_(points), categorical_(std::move(categorical)) {
    std::vector<std::size_t> items(points->rows);
    std::iota(items.begin(), items.end(), std::size_t{0});
    nodes_.reserve(items.size());
    root_ = build(items, 0, items.size());
}

double VpTree::distance(std::span<const double> q, std::size_t row) const {
    return mixed_distance(q, points_->row(row), categorical_);
}

int VpTree::build(std::vector<std::size_t>& items, std::size_t lo, std::size_t hi) {
    if (lo >= hi) return -1;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({items[lo], 0.0, -1, -1});
    if (hi - lo == 1) return id;
    const auto vp = points_->row(items[lo]);
    const std::size_t mid = lo + 1 + (hi - lo - 1) / 2;
    std::vector<std::pair<double, std::size_t>> d;
    d.reserve(hi - lo - 1);
    for (std::size_t i = lo + 1; i < hi; ++i) d.emplace_back(mixed_distance(vp, points_->row(items[i]), categorical_), items[i]);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid - lo - 1), d.end());
    const double mu = d[mid - lo - 1].first;
    for (std::size_t i = 0; i < d.size(); ++i) items[lo + 1 + i] = d[i].second;
    // [lo+1, mid] have distance <= mu, (mid, hi) have distance >= mu.
    const int inside = build(items, lo + 1, mid + 1);
    const int outside = build(items, mid + 1, hi);
    nodes_[id].mu = mu;
    nodes_[id].inside = inside;
    nodes_[id].outside = outside;
    return id;
}

std::vector<std::pair<double, std::size_t>> VpTree::nearest(std::span<const double> query, std::size_t k) const {
    std::vector<std::pair<double, std::size_t>> out;
    if (k == 0 || root_ < 0) return out;
    std::priority_queue<std::pair<double, std::size_t>> heap; // max-heap on (distance, row)
    const auto worst = [&] {
        return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.top().first;
    };
    // Iterative depth-first search; near side pushed last so it pops first.
    struct Frame {
        int node;
        double bound; // lower bound on distances inside this subtree
    };
    std::vector<Frame> frames{{root_, 0.0}};
    while (!frames.empty()) {
        const Frame f = frames.back();
        frames.pop_back();
        if (f.node < 0 || f.bound > worst()) continue;
        const Node& n = nodes_[static_cast<std::size_t>(f.node)];
        const double d = distance(query, n.point);
        const std::pair<double, std::size_t> entry{d, n.point};
        if (heap.size() < k) heap.push(entry);
        else if (entry < heap.top()) {
            heap.pop();
            heap.push(entry);
        }
        if (n.inside < 0 && n.outside < 0) continue;
        const double s = slack(d, n.mu);
        const double inside_bound = std::max(0.0, d - n.mu - s);
        const double outside_bound = std::max(0.0, n.mu - d - s);
        if (d <= n.mu) {
            frames.push_back({n.outside, outside_bound});
            frames.push_back({n.inside, inside_bound});
        } else {
            frames.push_back({n.inside, inside_bound});
            frames.push_back({n.outside, outside_bound});
        }
    }
    out.reserve(heap.size());
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<std::pair<double, std::size_t>> VpTree::within(std::span<const double> query, double radius) const {
    std::vector<std::pair<double, std::size_t>> out;
    if (root_ < 0) return out;
    std::vector<int> stack{root_};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (id < 0) continue;
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const double d = distance(query, n.point);
        if (d <= radius) out.emplace_back(d, n.point);
        const double s = slack(d, n.mu);
        if (d - radius - s <= n.mu) stack.push_back(n.inside);
        if (d + radius + s >= n.mu) stack.push_back(n.outside);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// --- TrustIndex ---

std::string_view to_string(TrustLabel label) {
    switch (label) {
    case TrustLabel::trusted: return "trusted";
    case TrustLabel::caution: return "caution";
    case TrustLabel::unsupported: return "unsupported";
    }
    return "trusted";
}

TrustIndex::TrustIndex(const DatasetHandle& handle, const SurrogateBundle& bundle, TrustConfig config)
    : handle_(&handle), config_(std::move(config)), categorical_(handle.schema().categorical_mask()) {
    const Matrix& train = handle.train_features();
    const Matrix& val = handle.validation_features();
    if (val.rows == 0) throw IndexUnavailable("trust index needs a non-empty validation partition");
    if (train.rows == 0) throw IndexUnavailable("trust index needs a non-empty training partition");
    if (config_.k < 1) throw IndexUnavailable("k must be positive");
    k_ = static_cast<std::size_t>(config_.k);
    if (k_ > train.rows) {
        warn("trust: k=" + std::to_string(k_) + " exceeds the " + std::to_string(train.rows) +
             " training rows; clamped");
        k_ = train.rows;
    }
    tree_ = VpTree(&train, categorical_);

    val_distance_.assign(val.rows, 0.0);
    val_variance_.assign(val.rows, 0.0);
    parallel_for(val.rows, [&](std::size_t i) {
        val_distance_[i] = knn_distance(val.row(i));
        val_variance_[i] = ensemble_variance(bundle, val.row(i));
    });
    sorted_distance_ = val_distance_;
    sorted_variance_ = val_variance_;
    std::sort(sorted_distance_.begin(), sorted_distance_.end());
    std::sort(sorted_variance_.begin(), sorted_variance_.end());
    tau_close_ = config_.tau_close ? *config_.tau_close : quantile(val_distance_, config_.tau_percentile);
}

double TrustIndex::knn_distance(std::span<const double> encoded) const {
    const auto nn = tree_.nearest(encoded, k_);
    double sum = 0.0;
    for (const auto& [d, row] : nn) sum += d; // ascending order, independent of search path
    return nn.empty() ? 0.0 : sum / static_cast<double>(nn.size());
}

std::vector<SupportEntry> TrustIndex::support(std::span<const double> encoded) const {
    std::vector<SupportEntry> out;
    for (const auto& [d, row] : tree_.within(encoded, tau_close_))
        out.push_back({handle_->train().row_ids[row], d});
    return out;
}

double TrustIndex::ood_score(double distance) const {
    const auto count = std::upper_bound(sorted_distance_.begin(), sorted_distance_.end(), distance) - sorted_distance_.begin();
    return static_cast<double>(count) / static_cast<double>(sorted_distance_.size());
}

double TrustIndex::uq_score(double variance) const {
    const auto count = std::upper_bound(sorted_variance_.begin(), sorted_variance_.end(), variance) - sorted_variance_.begin();
    return static_cast<double>(count) / static_cast<double>(sorted_variance_.size());
}

// --- assess ---

TrustVerdict assess(const Config& x, const TrustIndex& index, const SurrogateBundle& bundle, std::uint64_t seed,
                    const ConstraintSet* bounds) {
    const auto encoded = index.handle().normalize_lenient(x);
    const auto& cfg = index.config();
    TrustVerdict v;
    v.knn_distance = index.knn_distance(encoded);
    v.ood = index.ood_score(v.knn_distance);
    v.support = index.support(encoded);
    const std::string k = std::to_string(index.k());
    if (v.ood > cfg.unsupported) {
        v.label = TrustLabel::unsupported;
        v.reason = "no nearby training samples: mean distance to the " + k + " nearest (" +
                   fixed(v.knn_distance, 3) + ") exceeds " + fixed(100.0 * v.ood, 1) +
                   "% of validation points; measure before relying on this prediction";
        v.next_runs = suggest_next_runs(x, index, cfg.next_runs, seed, bounds);
        return v;
    }
    v.variance = ensemble_variance(bundle, encoded);
    v.uq = index.uq_score(*v.variance);
    const std::string count = std::to_string(v.support.size());
    if (v.ood > cfg.caution) {
        v.label = TrustLabel::caution;
        v.reason = "limited support: " + count + " training samples within distance " + fixed(index.tau_close(), 3) +
                   "; region sparser than " + fixed(100.0 * v.ood, 1) + "% of validation points";
    } else if (*v.uq > cfg.caution) {
        v.label = TrustLabel::caution;
        v.reason = "high uncertainty: ensemble variance above " + fixed(100.0 * *v.uq, 1) +
                   "% of validation points (" + count + " supporting samples)";
    } else {
        v.label = TrustLabel::trusted;
        v.reason = "supported by " + count + " training samples within distance " + fixed(index.tau_close(), 3) +
                   "; ensemble agreement typical of validation data";
    }
    if (v.label == TrustLabel::caution) v.next_runs = suggest_next_runs(x, index, cfg.next_runs, seed, bounds);
    return v;
}

std::vector<Config> suggest_next_runs(const Config& x, const TrustIndex& index, int count, std::uint64_t seed,
                                      const ConstraintSet* bounds) {
    std::vector<Config> out;
    if (count < 1) return out;
    out.push_back(x);
    const DatasetHandle& h = index.handle();
    const FeatureSchema& schema = h.schema();
    const auto base = h.normalize_lenient(x);
    const auto categorical = schema.categorical_mask();

    std::vector<std::size_t> free; // numeric, non-degenerate
    for (std::size_t p = 0; p < base.size(); ++p)
        if (!categorical[p] && h.scaler()[p].stddev > 0.0) free.push_back(p);
    if (free.empty()) return out;

    double radius = index.tau_close();
    if (!(radius > 0.0)) radius = 1e-3;

    std::mt19937_64 rng(derive_seed(seed, 0x6e657874));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::set<std::vector<std::string>> seen;
    const auto key = [](const Config& c) {
        std::vector<std::string> k;
        for (const auto& cell : c) k.push_back(format_cell(cell));
        return k;
    };
    seen.insert(key(x));

    const int max_attempts = 64 * count;
    for (int attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < count; ++attempt) {
        std::vector<double> dir(free.size());
        double norm = 0.0;
        for (double& d : dir) {
            d = gauss(rng);
            norm += d * d;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        Config c = x;
        for (std::size_t i = 0; i < free.size(); ++i) {
            const std::size_t p = free[i];
            const ColumnSpec& spec = schema.feature(p);
            const double raw_x = std::get<double>(x[p]);
            double raw = h.decode_feature(p, base[p] + radius * dir[i] / norm);
            double lo = std::min(spec.min, raw_x);
            double hi = std::max(spec.max, raw_x);
            if (bounds) std::tie(lo, hi) = bounds->bounds_for(schema.feature_columns()[p], lo, hi);
            if (lo <= hi) raw = std::clamp(raw, lo, hi);
            if (spec.integral) {
                const double snapped = std::round(raw);
                const double drift = std::abs(h.encode_feature(p, snapped) - h.encode_feature(p, raw));
                if (drift <= 0.25 * radius && snapped >= lo && snapped <= hi) raw = snapped;
            }
            c[p] = raw;
        }
        if (seen.insert(key(c)).second) out.push_back(std::move(c));
    }
    return out;
}

} // namespace compass
