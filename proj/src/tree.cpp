#include "compass/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "compass/error.hpp"

namespace compass {

int DecisionTree::leaf_of(std::span<const double> x) const {
    int n = 0;
    while (nodes_[n].feature >= 0) {
        const auto& node = nodes_[n];
        n = x[node.feature] <= node.threshold ? node.left : node.right;
    }
    return n;
}

std::span<const double> DecisionTree::predict(std::span<const double> x) const {
    return {values_.data() + nodes_[leaf_of(x)].value, static_cast<std::size_t>(width_)};
}

void DecisionTree::set_leaf_value(int node, std::span<const double> value) {
    std::copy(value.begin(), value.end(), values_.begin() + nodes_[node].value);
}

DecisionTree DecisionTree::from_parts(int width, std::vector<Node> nodes, std::vector<double> values) {
    if (width < 1 || nodes.empty()) throw FormatError("malformed decision tree");
    for (const auto& n : nodes) {
        const bool leaf = n.feature < 0;
        const auto count = static_cast<int>(nodes.size());
        if (leaf && (n.value < 0 || n.value + width > static_cast<int>(values.size())))
            throw FormatError("decision tree leaf value out of range");
        if (!leaf && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
            throw FormatError("decision tree child index out of range");
    }
    DecisionTree t;
    t.width_ = width;
    t.nodes_ = std::move(nodes);
    t.values_ = std::move(values);
    return t;
}

SortedFeatures::SortedFeatures(const Matrix& x) : rows_(x.rows) {
    columns_.assign(x.cols, std::vector<double>(x.rows));
    orders_.assign(x.cols, std::vector<std::uint32_t>(x.rows));
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) columns_[j][i] = x(i, j);
    for (std::size_t j = 0; j < x.cols; ++j) {
        auto& ord = orders_[j];
        std::iota(ord.begin(), ord.end(), 0u);
        const auto& col = columns_[j];
        std::stable_sort(ord.begin(), ord.end(), [&](auto a, auto b) { return col[a] < col[b]; });
    }
}

class TreeBuilder {
public:
    TreeBuilder(const SortedFeatures& f, std::span<const double> y, int width, std::span<const double> w,
                const TreeParams& p, std::mt19937_64& rng)
        : features_(f), y_(y), width_(width), w_(w), params_(p), rng_(rng) {}

    DecisionTree build(std::vector<int>* leaf_of_row) {
        const std::size_t d = features_.cols();
        if (y_.size() != features_.rows() * static_cast<std::size_t>(width_) || w_.size() != features_.rows())
            throw ShapeError("tree targets/weights do not match the feature matrix");
        orders_.resize(d);
        for (std::size_t f = 0; f < d; ++f) {
            for (auto r : features_.order(f))
                if (w_[r] > 0.0) orders_[f].push_back(r);
        }
        const std::size_t m = d ? orders_[0].size() : 0;
        if (m == 0) throw TrainingFailed("tree has no weighted training rows");
        goes_left_.assign(features_.rows(), 0);
        buffer_.resize(m);
        if (leaf_of_row) leaf_of_row->assign(features_.rows(), -1);
        leaf_of_row_ = leaf_of_row;

        tree_.width_ = width_;
        tree_.nodes_.emplace_back();
        struct Work {
            int node;
            std::size_t begin, end;
            int depth;
        };
        std::vector<Work> stack{{0, 0, m, 0}};
        std::vector<double> sum(width_);
        while (!stack.empty()) {
            const Work work = stack.back();
            stack.pop_back();
            double weight = 0.0, sq = 0.0;
            std::fill(sum.begin(), sum.end(), 0.0);
            for (std::size_t i = work.begin; i < work.end; ++i) {
                const auto r = orders_[0][i];
                weight += w_[r];
                for (int k = 0; k < width_; ++k) {
                    const double v = y_[r * width_ + k];
                    sum[k] += w_[r] * v;
                    sq += w_[r] * v * v;
                }
            }
            double parent = 0.0;
            for (double s : sum) parent += s * s;
            parent /= weight;
            const double sse = sq - parent;

            const bool depth_stop = params_.max_depth > 0 && work.depth >= params_.max_depth;
            const bool weight_stop = weight < 2.0 * params_.min_leaf_weight;
            const bool pure = sse <= 1e-12 * sq;
            Split split;
            if (!depth_stop && !weight_stop && !pure) split = best_split(work.begin, work.end, sum, weight, parent);
            if (!split.valid) {
                make_leaf(work.node, work.begin, work.end, sum, weight);
                continue;
            }
            const std::size_t mid = partition(work.begin, work.end, split);
            const int left = static_cast<int>(tree_.nodes_.size());
            tree_.nodes_.emplace_back();
            tree_.nodes_.emplace_back();
            auto& node = tree_.nodes_[work.node];
            node.feature = static_cast<int>(split.feature);
            node.threshold = split.threshold;
            node.left = left;
            node.right = left + 1;
            stack.push_back({left + 1, mid, work.end, work.depth + 1});
            stack.push_back({left, work.begin, mid, work.depth + 1});
        }
        return std::move(tree_);
    }

private:
    struct Split {
        bool valid = false;
        std::size_t feature = 0;
        double threshold = 0.0;
        double gain = 0.0;
    };

    void make_leaf(int node, std::size_t begin, std::size_t end, const std::vector<double>& sum, double weight) {
        auto& n = tree_.nodes_[node];
        n.feature = -1;
        n.value = static_cast<int>(tree_.values_.size());
        for (int k = 0; k < width_; ++k) tree_.values_.push_back(sum[k] / weight);
        if (leaf_of_row_)
            for (std::size_t i = begin; i < end; ++i) (*leaf_of_row_)[orders_[0][i]] = node;
    }

    Split best_split(std::size_t begin, std::size_t end, const std::vector<double>& sum, double weight,
                     double parent) {
        const std::size_t d = features_.cols();
        std::vector<std::size_t> candidates(d);
        std::iota(candidates.begin(), candidates.end(), 0);
        const bool subsample = params_.max_features > 0 && static_cast<std::size_t>(params_.max_features) < d;
        if (subsample) std::shuffle(candidates.begin(), candidates.end(), rng_);

        Split best;
        best.gain = parent + 1e-14 * std::abs(parent) + 1e-300;
        std::vector<double> left(width_);
        int examined = 0;
        for (auto f : candidates) {
            if (subsample && examined >= params_.max_features && best.valid) break;
            const auto& ord = orders_[f];
            const double first = features_.value(ord[begin], f);
            const double last = features_.value(ord[end - 1], f);
            if (!(first < last)) continue;
            ++examined;
            std::fill(left.begin(), left.end(), 0.0);
            double wl = 0.0;
            for (std::size_t i = begin; i + 1 < end; ++i) {
                const auto r = ord[i];
                wl += w_[r];
                for (int k = 0; k < width_; ++k) left[k] += w_[r] * y_[r * width_ + k];
                const double v = features_.value(r, f);
                const double next = features_.value(ord[i + 1], f);
                if (!(v < next)) continue;
                const double wr = weight - wl;
                if (wl < params_.min_leaf_weight || wr < params_.min_leaf_weight) continue;
                double gl = 0.0, gr = 0.0;
                for (int k = 0; k < width_; ++k) {
                    gl += left[k] * left[k];
                    const double rk = sum[k] - left[k];
                    gr += rk * rk;
                }
                const double gain = gl / wl + gr / wr;
                if (gain > best.gain) {
                    double threshold = v + (next - v) / 2.0;
                    if (!(threshold < next)) threshold = v;
                    best = {true, f, threshold, gain};
                }
            }
        }
        return best;
    }

    std::size_t partition(std::size_t begin, std::size_t end, const Split& split) {
        std::size_t n_left = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const auto r = orders_[0][i];
            const bool left = features_.value(r, split.feature) <= split.threshold;
            goes_left_[r] = left;
            n_left += left;
        }
        for (auto& ord : orders_) {
            std::size_t l = 0, r = n_left;
            for (std::size_t i = begin; i < end; ++i) {
                const auto row = ord[i];
                buffer_[goes_left_[row] ? l++ : r++] = row;
            }
            std::copy(buffer_.begin(), buffer_.begin() + (end - begin), ord.begin() + begin);
        }
        return begin + n_left;
    }

    const SortedFeatures& features_;
    std::span<const double> y_;
    int width_;
    std::span<const double> w_;
    const TreeParams& params_;
    std::mt19937_64& rng_;
    std::vector<std::vector<std::uint32_t>> orders_;
    std::vector<char> goes_left_;
    std::vector<std::uint32_t> buffer_;
    std::vector<int>* leaf_of_row_ = nullptr;
    DecisionTree tree_;
};

DecisionTree fit_tree(const SortedFeatures& features, std::span<const double> targets, int width,
                      std::span<const double> weights, const TreeParams& params, std::mt19937_64& rng,
                      std::vector<int>* leaf_of_row) {
    return TreeBuilder(features, targets, width, weights, params, rng).build(leaf_of_row);
}

} // namespace compass
