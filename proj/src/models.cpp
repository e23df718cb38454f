#include "compass/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "compass/error.hpp"
#include "compass/parallel.hpp"

namespace compass {

using nlohmann::json;

std::string_view to_string(Family family) {
    switch (family) {
    case Family::random_forest: return "random_forest";
    case Family::gradient_boosted_trees: return "gradient_boosted_trees";
    case Family::ridge_linear: return "ridge_linear";
    }
    return "random_forest";
}

Family family_from_string(std::string_view text) {
    if (text == "random_forest") return Family::random_forest;
    if (text == "gradient_boosted_trees") return Family::gradient_boosted_trees;
    if (text == "ridge_linear") return Family::ridge_linear;
    throw Error("unknown model family '" + std::string(text) + "'");
}

namespace {

// Row-major targets of width 1 (regression) or K (one-hot classes).
std::vector<double> head_targets(std::span<const double> y, const HeadSpec& head) {
    if (head.task == TargetTask::regression) return {y.begin(), y.end()};
    std::vector<double> out(y.size() * head.classes, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) out[i * head.classes + static_cast<std::size_t>(y[i])] = 1.0;
    return out;
}

int width_of(const HeadSpec& head) { return head.task == TargetTask::regression ? 1 : head.classes; }

ForestModel fit_forest(const TrainingSet& data, std::span<const double> y, const HeadSpec& head,
                       std::span<const double> weights, std::uint64_t seed, const ForestParams& p) {
    const auto targets = head_targets(y, head);
    const std::size_t n = data.sorted->rows();
    const std::size_t d = data.sorted->cols();
    TreeParams tp;
    tp.max_depth = p.max_depth;
    tp.min_leaf_weight = p.min_leaf;
    tp.max_features = p.max_features < 0 ? std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))))
                                          : p.max_features;

    std::vector<std::size_t> active;
    std::vector<double> cumulative;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] <= 0.0) continue;
        active.push_back(i);
        total += weights[i];
        cumulative.push_back(total);
    }
    if (active.empty()) throw TrainingFailed("forest has no training rows");

    ForestModel model;
    model.width = width_of(head);
    model.trees.resize(static_cast<std::size_t>(p.trees));
    parallel_for(model.trees.size(), [&](std::size_t t) {
        std::mt19937_64 rng(derive_seed(seed, t));
        // Bootstrap of size |active| drawn proportionally to the row weights.
        std::vector<double> w(n, 0.0);
        std::uniform_real_distribution<double> u(0.0, total);
        for (std::size_t k = 0; k < active.size(); ++k) {
            const double draw = u(rng);
            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), draw);
            const auto idx = std::min<std::size_t>(it - cumulative.begin(), active.size() - 1);
            w[active[idx]] += 1.0;
        }
        model.trees[t] = fit_tree(*data.sorted, targets, model.width, w, tp, rng);
    });
    return model;
}

std::vector<double> softmax(std::vector<double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (auto& v : z) {
        v = std::exp(v - mx);
        s += v;
    }
    for (auto& v : z) v /= s;
    return z;
}

BoostingModel fit_boosting(const TrainingSet& data, std::span<const double> y, const HeadSpec& head,
                           std::span<const double> weights, std::uint64_t seed, const BoostingParams& p) {
    const std::size_t n = data.sorted->rows();
    TreeParams tp;
    tp.max_depth = p.max_depth;
    tp.min_leaf_weight = p.min_leaf;
    std::mt19937_64 rng(seed);

    BoostingModel model;
    model.learning_rate = p.learning_rate;
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) wsum += weights[i];
    if (wsum <= 0.0) throw TrainingFailed("boosting has no training rows");

    std::vector<int> leaf_of_row;
    if (head.task == TargetTask::regression) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += weights[i] * y[i];
        mean /= wsum;
        model.base = {mean};
        std::vector<double> f(n, mean), residual(n);
        for (int round = 0; round < p.rounds; ++round) {
            for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - f[i];
            auto tree = fit_tree(*data.sorted, residual, 1, weights, tp, rng, &leaf_of_row);
            for (std::size_t i = 0; i < n; ++i) {
                if (weights[i] <= 0.0) continue;
                f[i] += p.learning_rate * tree.values()[tree.nodes()[leaf_of_row[i]].value];
            }
            model.trees.push_back(std::move(tree));
            for (double v : f)
                if (!std::isfinite(v)) throw TrainingFailed("boosting diverged");
        }
        return model;
    }

    const int k_classes = head.classes;
    model.classes = k_classes;
    std::vector<double> prior(k_classes, 1e-3);
    for (std::size_t i = 0; i < n; ++i) prior[static_cast<std::size_t>(y[i])] += weights[i];
    const double prior_total = std::accumulate(prior.begin(), prior.end(), 0.0);
    for (auto& v : prior) v = std::log(v / prior_total);
    model.base = prior;

    std::vector<std::vector<double>> f(n, prior);
    std::vector<double> residual(n);
    const double scale = static_cast<double>(k_classes - 1) / k_classes;
    for (int round = 0; round < p.rounds; ++round) {
        std::vector<std::vector<double>> prob(n);
        for (std::size_t i = 0; i < n; ++i)
            if (weights[i] > 0.0) prob[i] = softmax(f[i]);
        for (int k = 0; k < k_classes; ++k) {
            for (std::size_t i = 0; i < n; ++i)
                residual[i] = weights[i] > 0.0 ? (static_cast<int>(y[i]) == k ? 1.0 : 0.0) - prob[i][k] : 0.0;
            auto tree = fit_tree(*data.sorted, residual, 1, weights, tp, rng, &leaf_of_row);
            std::vector<double> num(tree.nodes().size(), 0.0), den(tree.nodes().size(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (weights[i] <= 0.0) continue;
                const double r = residual[i];
                num[leaf_of_row[i]] += weights[i] * r;
                den[leaf_of_row[i]] += weights[i] * std::abs(r) * (1.0 - std::abs(r));
            }
            for (std::size_t node = 0; node < tree.nodes().size(); ++node) {
                if (tree.nodes()[node].feature >= 0) continue;
                const double v = den[node] < 1e-12 ? 0.0 : scale * num[node] / den[node];
                const double clipped = std::clamp(v, -10.0, 10.0);
                tree.set_leaf_value(static_cast<int>(node), std::span<const double>(&clipped, 1));
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (weights[i] <= 0.0) continue;
                f[i][k] += p.learning_rate * tree.values()[tree.nodes()[leaf_of_row[i]].value];
            }
            model.trees.push_back(std::move(tree));
        }
    }
    return model;
}

std::size_t expanded_size(const std::vector<int>& counts) {
    std::size_t s = 0;
    for (int c : counts) s += c == 0 ? 1 : static_cast<std::size_t>(c);
    return s;
}

void expand_row(const std::vector<int>& counts, std::span<const double> x, double* out) {
    std::size_t j = 0;
    for (std::size_t f = 0; f < counts.size(); ++f) {
        if (counts[f] == 0) {
            out[j++] = x[f];
            continue;
        }
        for (int c = 0; c < counts[f]; ++c) out[j + c] = 0.0;
        const double code = x[f];
        if (code >= 0 && code < counts[f] && code == std::floor(code)) out[j + static_cast<std::size_t>(code)] = 1.0;
        j += static_cast<std::size_t>(counts[f]);
    }
}

RidgeModel fit_ridge(const TrainingSet& data, std::span<const double> y, const HeadSpec& head,
                     std::span<const double> weights, const RidgeParams& p) {
    const Matrix& x = *data.x;
    RidgeModel model;
    model.classification = head.task == TargetTask::classification;
    model.category_counts.assign(x.cols, 0);
    for (std::size_t f = 0; f < x.cols; ++f) {
        if (!data.categorical[f]) continue;
        double mx = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) mx = std::max(mx, x(i, f));
        model.category_counts[f] = static_cast<int>(mx) + 1;
    }
    const std::size_t p_dim = expanded_size(model.category_counts);
    const int outputs = width_of(head);
    const auto targets = head_targets(y, head);

    Eigen::MatrixXd z(x.rows, p_dim);
    std::vector<double> row(p_dim);
    double wsum = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        expand_row(model.category_counts, x.row(i), row.data());
        for (std::size_t j = 0; j < p_dim; ++j) z(i, j) = row[j];
        wsum += weights[i];
    }
    if (wsum <= 0.0) throw TrainingFailed("ridge has no training rows");
    Eigen::VectorXd w(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) w(i) = weights[i];
    Eigen::MatrixXd t(x.rows, outputs);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (int k = 0; k < outputs; ++k) t(i, k) = targets[i * outputs + k];

    const Eigen::RowVectorXd z_mean = (w.transpose() * z) / wsum;
    const Eigen::RowVectorXd t_mean = (w.transpose() * t) / wsum;
    const Eigen::MatrixXd zc = z.rowwise() - z_mean;
    const Eigen::MatrixXd tc = t.rowwise() - t_mean;
    Eigen::MatrixXd gram = zc.transpose() * w.asDiagonal() * zc;
    gram.diagonal().array() += p.alpha;
    const Eigen::MatrixXd rhs = zc.transpose() * w.asDiagonal() * tc;
    Eigen::LDLT<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw TrainingFailed("ridge normal equations are singular");
    const Eigen::MatrixXd beta = solver.solve(rhs);
    if (!beta.allFinite()) throw TrainingFailed("ridge solution is not finite");

    model.coefficients.resize(static_cast<std::size_t>(outputs) * p_dim);
    model.intercepts.resize(outputs);
    for (int k = 0; k < outputs; ++k) {
        for (std::size_t j = 0; j < p_dim; ++j) model.coefficients[k * p_dim + j] = beta(j, k);
        model.intercepts[k] = t_mean(k) - z_mean.dot(beta.col(k));
    }
    return model;
}

json tree_to_json(const DecisionTree& t) {
    json features = json::array(), thresholds = json::array(), left = json::array(), right = json::array(),
         offsets = json::array();
    for (const auto& n : t.nodes()) {
        features.push_back(n.feature);
        thresholds.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        offsets.push_back(n.value);
    }
    return {{"width", t.width()}, {"feature", features}, {"threshold", thresholds}, {"left", left},
            {"right", right},     {"value", offsets},    {"values", t.values()}};
}

DecisionTree tree_from_json(const json& j) {
    const auto features = j.at("feature").get<std::vector<int>>();
    const auto thresholds = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto offsets = j.at("value").get<std::vector<int>>();
    const std::size_t n = features.size();
    if (thresholds.size() != n || left.size() != n || right.size() != n || offsets.size() != n)
        throw FormatError("decision tree arrays disagree in length");
    std::vector<DecisionTree::Node> nodes(n);
    for (std::size_t i = 0; i < n; ++i) nodes[i] = {features[i], thresholds[i], left[i], right[i], offsets[i]};
    return DecisionTree::from_parts(j.at("width").get<int>(), std::move(nodes),
                                    j.at("values").get<std::vector<double>>());
}

} // namespace

Model fit_model(Family family, const TrainingSet& data, std::span<const double> y, const HeadSpec& head,
                std::span<const double> weights, std::uint64_t seed, const ForestParams& forest,
                const BoostingParams& boosting, const RidgeParams& ridge) {
    if (head.task == TargetTask::classification && head.classes < 1)
        throw TrainingFailed("classification head '" + head.name + "' has no classes");
    switch (family) {
    case Family::random_forest: return fit_forest(data, y, head, weights, seed, forest);
    case Family::gradient_boosted_trees: return fit_boosting(data, y, head, weights, seed, boosting);
    case Family::ridge_linear: return fit_ridge(data, y, head, weights, ridge);
    }
    throw TrainingFailed("unknown family");
}

std::vector<double> predict_model(const Model& model, std::span<const double> x) {
    return std::visit(
        [&](const auto& m) -> std::vector<double> {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ForestModel>) {
                std::vector<double> acc(m.width, 0.0);
                for (const auto& tree : m.trees) {
                    auto v = tree.predict(x);
                    for (int k = 0; k < m.width; ++k) acc[k] += v[k];
                }
                for (auto& v : acc) v /= static_cast<double>(m.trees.size());
                if (m.width > 1) {
                    const double s = std::accumulate(acc.begin(), acc.end(), 0.0);
                    for (auto& v : acc) v /= s;
                }
                return acc;
            } else if constexpr (std::is_same_v<T, BoostingModel>) {
                std::vector<double> f = m.base;
                const std::size_t stride = m.classes == 0 ? 1 : static_cast<std::size_t>(m.classes);
                for (std::size_t t = 0; t < m.trees.size(); ++t) f[t % stride] += m.learning_rate * m.trees[t].predict(x)[0];
                return m.classes == 0 ? f : softmax(std::move(f));
            } else {
                const std::size_t p_dim = expanded_size(m.category_counts);
                std::vector<double> row(p_dim);
                expand_row(m.category_counts, x, row.data());
                std::vector<double> out(m.intercepts);
                for (std::size_t k = 0; k < out.size(); ++k)
                    for (std::size_t j = 0; j < p_dim; ++j) out[k] += m.coefficients[k * p_dim + j] * row[j];
                if (!m.classification) return out;
                double s = 0.0;
                for (auto& v : out) {
                    v = std::max(v, 0.0);
                    s += v;
                }
                for (auto& v : out) v = s > 0.0 ? v / s : 1.0 / static_cast<double>(out.size());
                return out;
            }
        },
        model);
}

json model_to_json(const Model& model) {
    return std::visit(
        [](const auto& m) -> json {
            using T = std::decay_t<decltype(m)>;
            json trees = json::array();
            if constexpr (std::is_same_v<T, ForestModel>) {
                for (const auto& t : m.trees) trees.push_back(tree_to_json(t));
                return {{"type", "forest"}, {"width", m.width}, {"trees", trees}};
            } else if constexpr (std::is_same_v<T, BoostingModel>) {
                for (const auto& t : m.trees) trees.push_back(tree_to_json(t));
                return {{"type", "boosting"},       {"classes", m.classes}, {"learning_rate", m.learning_rate},
                        {"base", m.base},           {"trees", trees}};
            } else {
                return {{"type", "ridge"},
                        {"classification", m.classification},
                        {"category_counts", m.category_counts},
                        {"coefficients", m.coefficients},
                        {"intercepts", m.intercepts}};
            }
        },
        model);
}

Model model_from_json(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "forest") {
        ForestModel m;
        m.width = j.at("width").get<int>();
        for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
        if (m.trees.empty()) throw FormatError("forest without trees");
        return m;
    }
    if (type == "boosting") {
        BoostingModel m;
        m.classes = j.at("classes").get<int>();
        m.learning_rate = j.at("learning_rate").get<double>();
        m.base = j.at("base").get<std::vector<double>>();
        for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
        if (m.base.size() != static_cast<std::size_t>(std::max(1, m.classes)))
            throw FormatError("boosting base has the wrong size");
        return m;
    }
    if (type == "ridge") {
        RidgeModel m;
        m.classification = j.at("classification").get<bool>();
        m.category_counts = j.at("category_counts").get<std::vector<int>>();
        m.coefficients = j.at("coefficients").get<std::vector<double>>();
        m.intercepts = j.at("intercepts").get<std::vector<double>>();
        if (m.coefficients.size() != m.intercepts.size() * expanded_size(m.category_counts))
            throw FormatError("ridge coefficient matrix has the wrong size");
        return m;
    }
    throw FormatError("unknown model type '" + type + "'");
}

} // namespace compass
