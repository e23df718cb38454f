#include "compass/generator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "compass/error.hpp"
#include "compass/parallel.hpp"

namespace compass {

// --- Loss terms ---

double validity_loss(double prediction, const TargetRange& range) {
    double loss = 0.0;
    if (std::isfinite(range.lo)) loss += std::max(0.0, range.lo - prediction);
    if (std::isfinite(range.hi)) loss += std::max(0.0, prediction - range.hi);
    return loss;
}

double validity_loss(std::span<const double> predictions, std::span<const TargetRange> ranges) {
    double sum = 0.0;
    for (std::size_t t = 0; t < predictions.size() && t < ranges.size(); ++t) sum += validity_loss(predictions[t], ranges[t]);
    return sum;
}

double class_validity_loss(std::span<const double> scores, int target) {
    if (target < 0 || static_cast<std::size_t>(target) >= scores.size()) return 1.0;
    double best_other = 0.0;
    for (std::size_t c = 0; c < scores.size(); ++c)
        if (static_cast<int>(c) != target) best_other = std::max(best_other, scores[c]);
    return std::max(0.0, best_other - scores[static_cast<std::size_t>(target)]);
}

double proximity_loss(std::span<const double> candidate, std::span<const double> baseline,
                      const std::vector<bool>& categorical, std::span<const double> weights) {
    double sum = 0.0;
    for (std::size_t j = 0; j < candidate.size(); ++j) {
        const double w = j < weights.size() ? weights[j] : 1.0;
        if (j < categorical.size() && categorical[j]) sum += w * (candidate[j] != baseline[j] ? 1.0 : 0.0);
        else sum += w * std::abs(candidate[j] - baseline[j]);
    }
    return sum;
}

std::vector<double> diversity_contributions(const std::vector<std::vector<double>>& encoded,
                                            const std::vector<bool>& categorical) {
    const std::size_t n = encoded.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = mixed_distance(encoded[i], encoded[j], categorical);
            out[i] += d;
            out[j] += d;
        }
    for (double& v : out) v /= static_cast<double>(n - 1);
    return out;
}

double diversity_score(const std::vector<std::vector<double>>& encoded, const std::vector<bool>& categorical) {
    const std::size_t n = encoded.size();
    if (n < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) sum += mixed_distance(encoded[i], encoded[j], categorical);
    return sum / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

TargetRange objective_to_range(const Objective& objective, std::span<const double> observed, double quantile_p,
                               std::optional<double> baseline_value) {
    TargetRange r;
    switch (objective.kind) {
    case ObjectiveKind::range:
        if (objective.min) r.lo = *objective.min;
        if (objective.max) r.hi = *objective.max;
        break;
    case ObjectiveKind::minimize:
        r.hi = quantile(std::vector<double>(observed.begin(), observed.end()), quantile_p);
        break;
    case ObjectiveKind::maximize:
        r.lo = quantile(std::vector<double>(observed.begin(), observed.end()), 1.0 - quantile_p);
        break;
    case ObjectiveKind::change: {
        if (!baseline_value) throw QueryError("change objective needs the baseline's observed target");
        const double goal = *baseline_value * (1.0 + objective.percent / 100.0);
        if (goal < *baseline_value) r.hi = goal;
        else r.lo = goal;
        break;
    }
    case ObjectiveKind::class_label: break;
    }
    return r;
}

// --- Search ---

namespace {

double round_significant(double x, int digits = 6) {
    if (x == 0.0 || !std::isfinite(x)) return x;
    const double scale = std::pow(10.0, digits - 1 - static_cast<int>(std::floor(std::log10(std::abs(x)))));
    return std::round(x * scale) / scale;
}

struct Individual {
    std::vector<double> enc;
    Config raw;
    Prediction pred;
    double valid = 0.0;
    double prox = 0.0;
    double cons = 0.0;
    double div = 0.0;
    std::vector<std::size_t> violated;
    std::vector<double> key; // dedup identity: rounded numerics and category codes
};

class Problem {
public:
    Problem(const DatasetHandle& handle, const SurrogateBundle& bundle, const ConstraintSet& constraints,
            const Lambdas& lambdas, const std::vector<ResolvedTarget>& targets, Config baseline_assigned,
            std::vector<double> prox_origin, std::vector<double> prox_weights, std::vector<std::size_t> mutable_pos)
        : handle_(handle), schema_(handle.schema()), bundle_(bundle), constraints_(constraints), lambdas_(lambdas),
          targets_(targets), fixed_raw_(std::move(baseline_assigned)), prox_origin_(std::move(prox_origin)),
          prox_weights_(std::move(prox_weights)), mutable_(std::move(mutable_pos)),
          categorical_(schema_.categorical_mask()) {
        fixed_enc_ = handle_.normalize_lenient(fixed_raw_);
        is_mutable_.assign(fixed_raw_.size(), false);
        for (auto p : mutable_) is_mutable_[p] = true;
    }

    const std::vector<std::size_t>& mutable_positions() const { return mutable_; }
    const std::vector<bool>& categorical() const { return categorical_; }
    const std::vector<double>& fixed_encoded() const { return fixed_enc_; }
    const Lambdas& lambdas() const { return lambdas_; }
    std::size_t category_count(std::size_t p) const { return schema_.feature(p).categories.size(); }

    /// Snaps an encoded vector onto the feasible grid and scores it.
    Individual evaluate(std::vector<double> enc) const {
        Individual ind;
        ind.raw = fixed_raw_;
        ind.key.assign(enc.size(), 0.0);
        for (std::size_t p = 0; p < enc.size(); ++p) {
            if (!is_mutable_[p]) {
                enc[p] = fixed_enc_[p];
                ind.key[p] = fixed_enc_[p];
                continue;
            }
            const ColumnSpec& spec = schema_.feature(p);
            if (spec.kind == ColumnKind::categorical) {
                const double max_code = static_cast<double>(spec.categories.size()) - 1.0;
                const double code = std::clamp(std::round(enc[p]), 0.0, max_code);
                enc[p] = code;
                ind.raw[p] = spec.categories[static_cast<std::size_t>(code)];
                ind.key[p] = code;
            } else {
                double raw = std::clamp(handle_.decode_feature(p, enc[p]), spec.min, spec.max);
                if (spec.integral) raw = std::round(raw);
                raw = round_significant(raw);
                ind.raw[p] = raw;
                enc[p] = handle_.encode_feature(p, raw);
                ind.key[p] = raw;
            }
        }
        ind.enc = std::move(enc);
        ind.pred = bundle_.primary.predict(ind.enc);

        std::vector<Cell> row(schema_.size());
        const auto& features = schema_.feature_columns();
        for (std::size_t p = 0; p < features.size(); ++p) row[features[p]] = ind.raw[p];
        const auto& target_cols = schema_.target_columns();
        for (std::size_t h = 0; h < target_cols.size(); ++h) {
            const ColumnSpec& spec = schema_.column(target_cols[h]);
            if (spec.kind == ColumnKind::categorical) {
                const auto code = static_cast<std::size_t>(ind.pred.values[h]);
                row[target_cols[h]] = code < spec.categories.size() ? spec.categories[code] : std::string();
            } else {
                row[target_cols[h]] = ind.pred.values[h];
            }
        }
        for (const auto& t : targets_) {
            if (t.task == TargetTask::classification) ind.valid += class_validity_loss(ind.pred.scores[t.head], t.class_code);
            else ind.valid += validity_loss(ind.pred.values[t.head], t.range) / t.scale;
        }
        ind.prox = proximity_loss(ind.enc, prox_origin_, categorical_, prox_weights_);
        const auto v = constraints_.evaluate(row);
        ind.cons = v.phi;
        ind.violated = v.violated;
        return ind;
    }

    double total(const Individual& a) const {
        return lambdas_.valid * a.valid + lambdas_.prox * a.prox + lambdas_.cons * a.cons - lambdas_.div * a.div;
    }

    /// Validity first, then constraints, then the full objective.
    bool better(const Individual& a, const Individual& b) const {
        const double va = lambdas_.valid * a.valid, vb = lambdas_.valid * b.valid;
        if (va != vb) return va < vb;
        const double ca = lambdas_.cons * a.cons, cb = lambdas_.cons * b.cons;
        if (ca != cb) return ca < cb;
        const double ta = total(a), tb = total(b);
        if (ta != tb) return ta < tb;
        if (a.prox != b.prox) return a.prox < b.prox;
        return a.key < b.key;
    }

private:
    const DatasetHandle& handle_;
    const FeatureSchema& schema_;
    const SurrogateBundle& bundle_;
    const ConstraintSet& constraints_;
    Lambdas lambdas_;
    const std::vector<ResolvedTarget>& targets_;
    Config fixed_raw_;
    std::vector<double> fixed_enc_;
    std::vector<double> prox_origin_;
    std::vector<double> prox_weights_;
    std::vector<std::size_t> mutable_;
    std::vector<bool> is_mutable_;
    std::vector<bool> categorical_;
};

void assign_diversity(std::vector<Individual>& pop, const std::vector<bool>& categorical) {
    std::vector<std::vector<double>> enc;
    enc.reserve(pop.size());
    for (const auto& ind : pop) enc.push_back(ind.enc);
    const auto div = diversity_contributions(enc, categorical);
    for (std::size_t i = 0; i < pop.size(); ++i) pop[i].div = div[i];
}

struct WorkerResult {
    std::vector<Individual> archive;
    int generations = 0;
    std::size_t evaluations = 0;
};

class Worker {
public:
    Worker(const Problem& problem, const SearchConfig& config, std::size_t archive_cap, std::uint64_t seed,
           const std::vector<std::vector<double>>& seeds, std::chrono::steady_clock::time_point deadline)
        : problem_(problem), config_(config), cap_(archive_cap), rng_(seed), seeds_(seeds), deadline_(deadline) {}

    WorkerResult run() {
        const std::size_t pop_size = static_cast<std::size_t>(config_.population);
        std::vector<Individual> pop;
        pop.push_back(evaluate(problem_.fixed_encoded()));
        std::vector<std::size_t> order(seeds_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng_);
        for (std::size_t i = 0; i < order.size() && pop.size() < pop_size / 2 + 1; ++i) pop.push_back(evaluate(seeds_[order[i]]));
        while (pop.size() < pop_size) {
            auto enc = problem_.fixed_encoded();
            mutate(enc, true);
            pop.push_back(evaluate(std::move(enc)));
        }
        absorb(pop);

        const auto elites = static_cast<std::size_t>(std::ceil(config_.elitism * static_cast<double>(pop_size)));
        for (int g = 0; g < config_.generations; ++g) {
            rank(pop);
            std::vector<Individual> next(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(std::min(elites, pop.size())));
            std::vector<Individual> children;
            while (next.size() + children.size() < pop_size) {
                const auto& a = pop[tournament(pop.size())];
                const auto& b = pop[tournament(pop.size())];
                std::vector<double> child = a.enc;
                if (uniform_(rng_) < config_.crossover_rate)
                    for (auto p : problem_.mutable_positions())
                        if (uniform_(rng_) < 0.5) child[p] = b.enc[p];
                mutate(child, false);
                children.push_back(evaluate(std::move(child)));
            }
            absorb(children);
            for (auto& c : children) next.push_back(std::move(c));
            pop = std::move(next);
            ++result_.generations;
            if (std::chrono::steady_clock::now() > deadline_) break;
        }
        trim(cap_);
        for (auto& [key, ind] : archive_) result_.archive.push_back(std::move(ind));
        return std::move(result_);
    }

private:
    Individual evaluate(std::vector<double> enc) {
        ++result_.evaluations;
        return problem_.evaluate(std::move(enc));
    }

    void rank(std::vector<Individual>& pop) const {
        assign_diversity(pop, problem_.categorical());
        std::sort(pop.begin(), pop.end(), [&](const Individual& a, const Individual& b) { return problem_.better(a, b); });
    }

    std::size_t tournament(std::size_t n) {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::size_t best = pick(rng_);
        for (int i = 1; i < config_.tournament; ++i) best = std::min(best, pick(rng_));
        return best;
    }

    /// Gaussian steps with a log-uniform scale mixture sigma * 10^(-3u),
    /// which mixes exploration with fine adjustment near narrow target bands.
    void mutate(std::vector<double>& enc, bool all) {
        const auto& positions = problem_.mutable_positions();
        if (positions.empty()) return;
        const double rate = all ? 1.0 : 1.0 / static_cast<double>(positions.size());
        bool changed = false;
        const auto step = [&](std::size_t p) {
            if (problem_.categorical()[p]) {
                enc[p] = std::floor(uniform_(rng_) * category_count(p));
            } else {
                const double sigma = config_.sigma * std::pow(10.0, -3.0 * uniform_(rng_));
                enc[p] += sigma * gauss_(rng_);
            }
            changed = true;
        };
        for (auto p : positions)
            if (uniform_(rng_) < rate) step(p);
        if (!changed) step(positions[std::uniform_int_distribution<std::size_t>(0, positions.size() - 1)(rng_)]);
    }

    double category_count(std::size_t p) const { return static_cast<double>(problem_.category_count(p)); }

    void absorb(const std::vector<Individual>& inds) {
        for (const auto& ind : inds) archive_.try_emplace(ind.key, ind);
        if (archive_.size() > 2 * cap_ + 64) trim(cap_);
    }

    void trim(std::size_t cap) {
        if (archive_.size() <= cap) return;
        std::vector<const Individual*> all;
        for (const auto& [key, ind] : archive_) all.push_back(&ind);
        // Archive members carry no diversity term; rank on the population-free part.
        std::sort(all.begin(), all.end(), [&](const Individual* a, const Individual* b) { return problem_.better(*a, *b); });
        std::map<std::vector<double>, Individual> kept;
        for (std::size_t i = 0; i < cap; ++i) {
            Individual ind = *all[i];
            ind.div = 0.0;
            kept.emplace(ind.key, std::move(ind));
        }
        archive_ = std::move(kept);
    }

    const Problem& problem_;
    SearchConfig config_;
    std::size_t cap_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> gauss_{0.0, 1.0};
    const std::vector<std::vector<double>>& seeds_;
    std::chrono::steady_clock::time_point deadline_;
    std::map<std::vector<double>, Individual> archive_;
    WorkerResult result_;
};

Candidate to_candidate(Individual&& ind, const Problem& problem) {
    Candidate c;
    c.config = std::move(ind.raw);
    c.prediction = std::move(ind.pred);
    c.loss = {ind.valid, ind.prox, ind.cons, ind.div};
    c.total_loss = problem.total(ind);
    c.violated = std::move(ind.violated);
    return c;
}

double population_std(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

} // namespace

CandidateSet generate(const Query& query, const DatasetHandle& handle, const SurrogateBundle& bundle,
                      const TrustIndex* index) {
    validate_query(query, handle);
    const FeatureSchema& schema = handle.schema();
    const ConstraintSet constraints(query.constraints, schema);
    if (handle.train().empty()) throw DatasetEmpty("no training rows");

    CandidateSet out;
    out.kind = query.kind;

    // Baseline row.
    std::vector<Cell> baseline_row;
    if (query.kind == QueryKind::recommend) {
        const auto f = filter(handle.train(), constraints);
        const auto& pool = f.satisfying.empty() ? f.fallback : f.satisfying;
        if (pool.empty()) throw DatasetEmpty("no training rows after filtering");
        std::mt19937_64 rng(derive_seed(query.seed, 0xba5e));
        const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
        out.baseline_row_id = pool[pick];
    } else {
        out.baseline_row_id = *query.baseline_row;
    }
    {
        const auto ref = handle.locate(*out.baseline_row_id);
        baseline_row = ref->table->rows[ref->index];
    }
    out.baseline = feature_config(schema, baseline_row);
    const auto baseline_enc = handle.normalize_lenient(out.baseline);
    out.baseline_prediction = bundle.primary.predict(baseline_enc);

    // Assignments.
    Config assigned = out.baseline;
    std::vector<bool> marked_unknown(schema.feature_count(), false);
    std::vector<bool> assigned_flag(schema.feature_count(), false);
    for (const auto& [name, a] : query.assignments) {
        const std::size_t p = *schema.feature_position(name);
        assigned_flag[p] = true;
        switch (a.kind) {
        case AssignmentKind::value: assigned[p] = a.value; break;
        case AssignmentKind::unknown: marked_unknown[p] = true; break;
        case AssignmentKind::transition:
            if (a.to) assigned[p] = *a.to;
            else if (a.scale) assigned[p] = *a.scale * std::get<double>(out.baseline[p]);
            else marked_unknown[p] = true;
            break;
        }
    }
    std::vector<std::size_t> mutable_pos;
    for (std::size_t p = 0; p < schema.feature_count(); ++p)
        if (marked_unknown[p]) mutable_pos.push_back(p);
    if (mutable_pos.empty() && query.kind == QueryKind::recommend)
        for (std::size_t p = 0; p < schema.feature_count(); ++p)
            if (!assigned_flag[p] && schema.feature(p).is_mutable) mutable_pos.push_back(p);
    for (auto p : mutable_pos) out.mutable_features.push_back(schema.feature(p).name);

    // Targets.
    const auto& target_cols = schema.target_columns();
    for (const auto& t : query.targets) {
        ResolvedTarget r;
        r.name = t.name;
        r.column = schema.index_of(t.name);
        r.head = static_cast<std::size_t>(std::find(target_cols.begin(), target_cols.end(), r.column) - target_cols.begin());
        const ColumnSpec& spec = schema.column(r.column);
        r.task = *spec.target_task;
        if (r.task == TargetTask::classification) {
            r.class_code = *spec.code_of(t.objective.label);
        } else {
            const auto observed = handle.target_values(handle.train(), r.column);
            std::optional<double> base;
            if (const auto* d = std::get_if<double>(&baseline_row[r.column])) base = *d;
            r.range = objective_to_range(t.objective, observed, query.search.quantile, base);
            const double sd = population_std(observed);
            r.scale = sd > 0.0 ? sd : 1.0;
        }
        out.targets.push_back(r);
    }

    std::vector<double> weights(schema.feature_count(), 1.0);
    for (const auto& [name, w] : query.proximity_weights) weights[*schema.feature_position(name)] = w;

    Problem problem(handle, bundle, constraints, query.lambdas, out.targets, assigned, baseline_enc, weights,
                    mutable_pos);
    out.gamma = static_cast<std::size_t>(query.gamma);

    std::vector<Individual> merged;
    if (query.kind == QueryKind::what_if || mutable_pos.empty()) {
        merged.push_back(problem.evaluate(problem.fixed_encoded()));
        out.evaluations = 1;
    } else {
        // Seeds: train rows whose observed targets sit closest to the request.
        const Matrix& tx = handle.train_features();
        std::vector<std::vector<double>> target_obs;
        for (const auto& t : out.targets) target_obs.push_back(handle.target_values(handle.train(), t.column));
        std::vector<std::pair<std::pair<double, double>, std::size_t>> ranked;
        for (std::size_t r = 0; r < tx.rows; ++r) {
            double miss = 0.0;
            for (std::size_t t = 0; t < out.targets.size(); ++t) {
                const auto& rt = out.targets[t];
                if (rt.task == TargetTask::classification) miss += target_obs[t][r] == rt.class_code ? 0.0 : 1.0;
                else miss += validity_loss(target_obs[t][r], rt.range) / rt.scale;
            }
            double near = 0.0;
            for (auto p : mutable_pos) near += std::abs(tx(r, p) - baseline_enc[p]);
            ranked.push_back({{miss, near}, r});
        }
        const std::size_t keep = std::min(ranked.size(), static_cast<std::size_t>(4 * query.search.population));
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end());
        std::vector<std::vector<double>> seeds;
        for (std::size_t i = 0; i < keep; ++i) {
            auto enc = problem.fixed_encoded();
            for (auto p : mutable_pos) enc[p] = tx(ranked[i].second, p);
            seeds.push_back(std::move(enc));
        }

        const auto workers = static_cast<std::size_t>(query.search.workers);
        const std::size_t cap = (static_cast<std::size_t>(query.n) + workers - 1) / workers;
        const auto deadline = std::chrono::steady_clock::now() +
                              std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(query.search.time_budget_seconds));
        std::vector<WorkerResult> results(workers);
        parallel_for(workers, [&](std::size_t w) {
            Worker worker(problem, query.search, cap, derive_seed(query.seed, 1000 + w), seeds, deadline);
            results[w] = worker.run();
        });

        // Single aggregation: union, dedup, validity filter, sort, truncate.
        std::map<std::vector<double>, Individual> pool;
        for (auto& r : results) {
            out.generations_run = std::max(out.generations_run, r.generations);
            out.evaluations += r.evaluations;
            for (auto& ind : r.archive) pool.try_emplace(ind.key, std::move(ind));
        }
        for (auto& [key, ind] : pool) merged.push_back(std::move(ind));
        const bool any_valid = std::any_of(merged.begin(), merged.end(), [](const Individual& i) { return i.valid == 0.0; });
        if (any_valid && query.lambdas.valid > 0.0)
            std::erase_if(merged, [](const Individual& i) { return i.valid != 0.0; });
        for (auto& ind : merged) ind.div = 0.0;
        std::sort(merged.begin(), merged.end(), [&](const Individual& a, const Individual& b) { return problem.better(a, b); });
        if (merged.size() > static_cast<std::size_t>(query.n)) merged.resize(static_cast<std::size_t>(query.n));
    }

    assign_diversity(merged, problem.categorical());
    std::sort(merged.begin(), merged.end(), [&](const Individual& a, const Individual& b) { return problem.better(a, b); });
    {
        std::vector<std::vector<double>> enc;
        for (const auto& ind : merged) enc.push_back(ind.enc);
        out.diversity = diversity_score(enc, problem.categorical());
    }
    for (auto& ind : merged) out.candidates.push_back(to_candidate(std::move(ind), problem));
    out.target_unmet = query.kind != QueryKind::what_if && !out.targets.empty() &&
                       std::none_of(out.candidates.begin(), out.candidates.end(), [](const Candidate& c) { return c.loss.valid == 0.0; });

    if (query.kind == QueryKind::what_if) {
        const auto& pred = out.candidates.front().prediction;
        for (std::size_t h = 0; h < pred.values.size(); ++h) {
            const bool cls = schema.column(target_cols[h]).kind == ColumnKind::categorical;
            out.delta.push_back(cls ? std::nan("") : pred.values[h] - out.baseline_prediction.values[h]);
        }
    }

    if (index) attach_trust(out, query, *index, bundle);
    return out;
}

void attach_trust(CandidateSet& set, const Query& query, const TrustIndex& index, const SurrogateBundle& bundle) {
    const ConstraintSet constraints(query.constraints, index.handle().schema());
    const auto top = std::min(set.gamma, set.candidates.size());
    parallel_for(top, [&](std::size_t i) {
        set.candidates[i].trust = assess(set.candidates[i].config, index, bundle, derive_seed(query.seed, 2000 + i), &constraints);
    });
}

} // namespace compass
