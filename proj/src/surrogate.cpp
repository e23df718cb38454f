#include "compass/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "compass/error.hpp"
#include "compass/parallel.hpp"

namespace compass {

using nlohmann::json;

Predictor::Predictor(Family family, std::vector<std::string> feature_order, std::vector<HeadSpec> heads,
                     std::vector<Model> models)
    : family_(family), feature_order_(std::move(feature_order)), heads_(std::move(heads)),
      models_(std::move(models)) {
    if (heads_.size() != models_.size()) throw ShapeError("predictor heads and models disagree");
}

std::vector<std::string> Predictor::target_names() const {
    std::vector<std::string> names;
    for (const auto& h : heads_) names.push_back(h.name);
    return names;
}

Prediction Predictor::predict(std::span<const double> x) const {
    if (x.size() != feature_order_.size())
        throw ShapeError("input has " + std::to_string(x.size()) + " features, predictor expects " +
                         std::to_string(feature_order_.size()));
    Prediction out;
    out.values.resize(heads_.size());
    out.scores.resize(heads_.size());
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        auto y = predict_model(models_[h], x);
        if (heads_[h].task == TargetTask::regression) {
            out.values[h] = y[0];
        } else {
            out.values[h] = static_cast<double>(std::max_element(y.begin(), y.end()) - y.begin());
            out.scores[h] = std::move(y);
        }
    }
    return out;
}

const std::vector<Family>& default_families() {
    static const std::vector<Family> families{Family::random_forest, Family::gradient_boosted_trees,
                                              Family::ridge_linear};
    return families;
}

TrainingData make_training_data(const DatasetHandle& handle) {
    const auto& schema = handle.schema();
    std::vector<HeadSpec> heads;
    std::vector<std::vector<double>> targets;
    for (auto c : schema.target_columns()) {
        const auto& spec = schema.column(c);
        HeadSpec head{spec.name, *spec.target_task, 0};
        if (head.task == TargetTask::classification) head.classes = static_cast<int>(spec.categories.size());
        heads.push_back(head);
        targets.push_back(handle.target_values(handle.train(), c));
    }
    const Matrix& x = handle.train_features();
    return TrainingData{x, SortedFeatures(x), schema.categorical_mask(), std::move(heads), std::move(targets),
                        schema.feature_names()};
}

Predictor fit_predictor(Family family, const TrainingData& data, std::span<const double> weights,
                        std::uint64_t seed, const SurrogateConfig& config) {
    std::vector<Model> models;
    for (std::size_t h = 0; h < data.heads.size(); ++h) {
        models.push_back(fit_model(family, data.view(), data.targets[h], data.heads[h], weights,
                                   derive_seed(seed, h), config.forest, config.boosting, config.ridge));
    }
    return Predictor(family, data.feature_order, data.heads, std::move(models));
}

double mean_absolute_percentage_error(std::span<const double> truth, std::span<const double> predicted) {
    if (truth.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i)
        s += std::abs(truth[i] - predicted[i]) / std::max(std::abs(truth[i]), 1e-8);
    return s / static_cast<double>(truth.size());
}

double macro_f1(std::span<const double> truth, std::span<const double> predicted, int classes) {
    std::vector<double> tp(classes, 0), fp(classes, 0), fn(classes, 0);
    std::set<int> present;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = static_cast<int>(truth[i]);
        const int p = static_cast<int>(predicted[i]);
        present.insert(t);
        present.insert(p);
        if (t == p) {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn[t] += 1;
        }
    }
    if (present.empty()) return 1.0;
    double s = 0.0;
    for (int c : present) {
        const double denom = 2 * tp[c] + fp[c] + fn[c];
        s += denom > 0 ? 2 * tp[c] / denom : 0.0;
    }
    return s / static_cast<double>(present.size());
}

double cross_validated_error(Family family, const TrainingData& data, std::uint64_t seed,
                             const SurrogateConfig& config) {
    const std::size_t n = data.x.rows;
    const std::size_t folds = std::min<std::size_t>(static_cast<std::size_t>(config.cv_folds), n);
    if (folds < 2) throw TrainingFailed("too few rows for cross-validation");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> fold_of(n);
    for (std::size_t i = 0; i < n; ++i) fold_of[order[i]] = i % folds;

    std::vector<double> fold_errors(folds, 0.0);
    parallel_for(folds, [&](std::size_t k) {
        std::vector<double> weights(n);
        for (std::size_t i = 0; i < n; ++i) weights[i] = fold_of[i] == k ? 0.0 : 1.0;
        const auto predictor = fit_predictor(family, data, weights, derive_seed(seed, 100 + k), config);
        std::vector<std::size_t> held;
        for (std::size_t i = 0; i < n; ++i)
            if (fold_of[i] == k) held.push_back(i);
        std::vector<std::vector<double>> truth(data.heads.size()), pred(data.heads.size());
        for (auto i : held) {
            const auto p = predictor.predict(data.x.row(i));
            for (std::size_t h = 0; h < data.heads.size(); ++h) {
                truth[h].push_back(data.targets[h][i]);
                pred[h].push_back(p.values[h]);
            }
        }
        double err = 0.0;
        for (std::size_t h = 0; h < data.heads.size(); ++h) {
            err += data.heads[h].task == TargetTask::regression
                       ? mean_absolute_percentage_error(truth[h], pred[h])
                       : 1.0 - macro_f1(truth[h], pred[h], data.heads[h].classes);
        }
        fold_errors[k] = err / static_cast<double>(data.heads.size());
    });
    return std::accumulate(fold_errors.begin(), fold_errors.end(), 0.0) / static_cast<double>(folds);
}

SurrogateBundle train_select(const DatasetHandle& handle, std::span<const Family> families, std::uint64_t seed,
                             const SurrogateConfig& config) {
    if (families.empty()) throw TrainingFailed("no model families requested");
    if (config.ensemble_size < 2) throw TrainingFailed("ensemble needs at least two members");
    const auto data = make_training_data(handle);
    const std::size_t n = data.x.rows;

    SurrogateBundle bundle;
    bundle.seed = seed;
    std::optional<std::size_t> best;
    for (std::size_t f = 0; f < families.size(); ++f) {
        SelectionEntry entry{families[f], std::nullopt, {}};
        try {
            entry.cv_error = cross_validated_error(families[f], data, derive_seed(seed, f), config);
            if (!std::isfinite(*entry.cv_error)) throw TrainingFailed("non-finite validation error");
            entry.note = "ok";
            if (!best || *entry.cv_error < *bundle.selection_report[*best].cv_error) best = f;
        } catch (const TrainingFailed& e) {
            entry.cv_error.reset();
            entry.note = std::string("excluded: ") + e.what();
            warn("model family " + std::string(to_string(families[f])) + " excluded: " + e.what());
        }
        bundle.selection_report.push_back(std::move(entry));
    }
    if (!best) throw TrainingFailed("every model family failed to train");
    const Family chosen = families[*best];

    const std::vector<double> ones(n, 1.0);
    bundle.primary = fit_predictor(chosen, data, ones, derive_seed(seed, 500), config);
    bundle.ensemble.resize(static_cast<std::size_t>(config.ensemble_size));
    for (std::size_t p = 0; p < bundle.ensemble.size(); ++p) {
        std::mt19937_64 rng(derive_seed(seed, 1000 + p));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<double> counts(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) counts[pick(rng)] += 1.0;
        bundle.ensemble[p] = fit_predictor(chosen, data, counts, derive_seed(seed, 2000 + p), config);
    }
    return bundle;
}

Prediction predict(const SurrogateBundle& bundle, std::span<const double> x) { return bundle.primary.predict(x); }

double ensemble_variance(const SurrogateBundle& bundle, std::span<const double> x) {
    if (bundle.ensemble.empty()) throw ShapeError("surrogate bundle has no ensemble members");
    std::vector<Prediction> preds;
    preds.reserve(bundle.ensemble.size());
    for (const auto& member : bundle.ensemble) preds.push_back(member.predict(x));
    const auto& heads = bundle.ensemble.front().heads();
    const double m = static_cast<double>(preds.size());
    double total = 0.0;
    for (std::size_t h = 0; h < heads.size(); ++h) {
        std::vector<double> sample;
        if (heads[h].task == TargetTask::regression) {
            for (const auto& p : preds) sample.push_back(p.values[h]);
        } else {
            std::vector<double> mean(static_cast<std::size_t>(heads[h].classes), 0.0);
            for (const auto& p : preds)
                for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p.scores[h][c];
            const auto top = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
            for (const auto& p : preds) sample.push_back(p.scores[h][top]);
        }
        const double mu = std::accumulate(sample.begin(), sample.end(), 0.0) / m;
        double var = 0.0;
        for (double v : sample) var += (v - mu) * (v - mu);
        total += var / m;
    }
    return total / static_cast<double>(heads.size());
}

// ---------------------------------------------------------------- persistence

namespace {

constexpr char kMagic[4] = {'C', 'M', 'P', 'S'};

json predictor_to_json(const Predictor& p) {
    json heads = json::array(), models = json::array();
    for (const auto& h : p.heads())
        heads.push_back({{"name", h.name}, {"task", to_string(h.task)}, {"classes", h.classes}});
    for (const auto& m : p.models()) models.push_back(model_to_json(m));
    return {{"family", to_string(p.family())}, {"feature_order", p.feature_order()}, {"heads", heads},
            {"models", models}};
}

Predictor predictor_from_json(const json& j) {
    std::vector<HeadSpec> heads;
    for (const auto& h : j.at("heads"))
        heads.push_back({h.at("name").get<std::string>(), target_task_from_string(h.at("task").get<std::string>()),
                         h.at("classes").get<int>()});
    std::vector<Model> models;
    for (const auto& m : j.at("models")) models.push_back(model_from_json(m));
    return Predictor(family_from_string(j.at("family").get<std::string>()),
                     j.at("feature_order").get<std::vector<std::string>>(), std::move(heads), std::move(models));
}

void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view in, std::size_t at, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

} // namespace

std::string persist(const SurrogateBundle& bundle) {
    json report = json::array();
    for (const auto& e : bundle.selection_report) {
        report.push_back({{"family", to_string(e.family)},
                          {"cv_error", e.cv_error ? json(*e.cv_error) : json(nullptr)},
                          {"note", e.note}});
    }
    json ensemble = json::array();
    for (const auto& m : bundle.ensemble) ensemble.push_back(predictor_to_json(m));
    const json payload = {{"seed", bundle.seed},
                          {"primary", predictor_to_json(bundle.primary)},
                          {"ensemble", ensemble},
                          {"selection_report", report}};
    const auto cbor = json::to_cbor(payload);
    std::string out(kMagic, 4);
    put_le(out, kBundleFormatVersion, 2);
    put_le(out, cbor.size(), 8);
    out.append(reinterpret_cast<const char*>(cbor.data()), cbor.size());
    return out;
}

SurrogateBundle load(std::string_view bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("not a native surrogate container (foreign model formats are not supported)");
    if (bytes.size() < 14) throw FormatError("truncated surrogate container header");
    const auto version = static_cast<std::uint16_t>(get_le(bytes, 4, 2));
    if (version != kBundleFormatVersion)
        throw FormatError("surrogate container version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kBundleFormatVersion) + ")");
    const auto length = get_le(bytes, 6, 8);
    if (bytes.size() - 14 != length) throw FormatError("truncated surrogate container payload");
    try {
        const json j = json::from_cbor(bytes.substr(14));
        SurrogateBundle bundle;
        bundle.seed = j.at("seed").get<std::uint64_t>();
        bundle.primary = predictor_from_json(j.at("primary"));
        for (const auto& m : j.at("ensemble")) bundle.ensemble.push_back(predictor_from_json(m));
        for (const auto& e : j.at("selection_report")) {
            SelectionEntry entry;
            entry.family = family_from_string(e.at("family").get<std::string>());
            if (!e.at("cv_error").is_null()) entry.cv_error = e.at("cv_error").get<double>();
            entry.note = e.at("note").get<std::string>();
            bundle.selection_report.push_back(std::move(entry));
        }
        return bundle;
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt surrogate payload: ") + e.what());
    } catch (const Error& e) {
        throw FormatError(std::string("corrupt surrogate payload: ") + e.what());
    }
}

} // namespace compass
