#include <cmath>
#include <set>

#include "compass/error.hpp"
#include "compass/generator.hpp"

namespace compass {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& rule) {
    if (!ok) throw QueryError(rule);
}

Cell cell_from_json(const json& j, const std::string& context) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw QueryError(context + ": expected a number or a string");
}

json cell_to_json(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return *d;
    return std::get<std::string>(c);
}

bool is_unknown(const json& j) {
    return (j.is_string() && j.get<std::string>() == "unknown") ||
           (j.is_object() && j.contains("unknown") && j["unknown"] == true);
}

Assignment assignment_from_json(const std::string& name, const json& j) {
    Assignment a;
    if (is_unknown(j)) {
        a.kind = AssignmentKind::unknown;
        return a;
    }
    if (j.is_object() && (j.contains("to") || j.contains("scale"))) {
        a.kind = AssignmentKind::transition;
        if (j.contains("from")) a.from = cell_from_json(j["from"], "assignment '" + name + "' from");
        if (j.contains("scale")) {
            require(j["scale"].is_number(), "assignment '" + name + "': scale must be a number");
            a.scale = j["scale"].get<double>();
        }
        if (j.contains("to") && !is_unknown(j["to"])) a.to = cell_from_json(j["to"], "assignment '" + name + "' to");
        require(!(a.to && a.scale), "assignment '" + name + "': give either 'to' or 'scale', not both");
        return a;
    }
    if (j.is_object() && j.contains("value")) {
        a.value = cell_from_json(j["value"], "assignment '" + name + "'");
        return a;
    }
    a.value = cell_from_json(j, "assignment '" + name + "'");
    return a;
}

json assignment_to_json(const Assignment& a) {
    switch (a.kind) {
    case AssignmentKind::unknown: return "unknown";
    case AssignmentKind::value:
        if (const auto* s = std::get_if<std::string>(&a.value); s && *s == "unknown") return json{{"value", *s}};
        return cell_to_json(a.value);
    case AssignmentKind::transition: {
        json j = json::object();
        if (a.from) j["from"] = cell_to_json(*a.from);
        if (a.scale) j["scale"] = *a.scale;
        else j["to"] = a.to ? cell_to_json(*a.to) : json("unknown");
        return j;
    }
    }
    return nullptr;
}

Objective objective_from_json(const json& t) {
    Objective o;
    const auto kind = t.value("objective", std::string("range"));
    if (kind == "minimize") o.kind = ObjectiveKind::minimize;
    else if (kind == "maximize") o.kind = ObjectiveKind::maximize;
    else if (kind == "range") {
        o.kind = ObjectiveKind::range;
        if (t.contains("min") && !t["min"].is_null()) o.min = t["min"].get<double>();
        if (t.contains("max") && !t["max"].is_null()) o.max = t["max"].get<double>();
        require(o.min || o.max, "range objective needs 'min' and/or 'max'");
        require(!(o.min && o.max) || *o.min <= *o.max, "range objective needs min <= max");
    } else if (kind == "class") {
        o.kind = ObjectiveKind::class_label;
        require(t.contains("class") && t["class"].is_string(), "class objective needs a string 'class'");
        o.label = t["class"].get<std::string>();
    } else if (kind == "change") {
        o.kind = ObjectiveKind::change;
        require(t.contains("percent") && t["percent"].is_number(), "change objective needs a numeric 'percent'");
        o.percent = t["percent"].get<double>();
        require(o.percent != 0.0, "change objective needs a non-zero percent");
    } else {
        throw QueryError("unknown objective '" + kind + "'");
    }
    return o;
}

json objective_to_json(const TargetObjective& t) {
    json j = {{"name", t.name}};
    const auto& o = t.objective;
    switch (o.kind) {
    case ObjectiveKind::minimize: j["objective"] = "minimize"; break;
    case ObjectiveKind::maximize: j["objective"] = "maximize"; break;
    case ObjectiveKind::range:
        j["objective"] = "range";
        if (o.min) j["min"] = *o.min;
        if (o.max) j["max"] = *o.max;
        break;
    case ObjectiveKind::class_label: j["objective"] = "class"; j["class"] = o.label; break;
    case ObjectiveKind::change: j["objective"] = "change"; j["percent"] = o.percent; break;
    }
    return j;
}

const std::set<std::string> kQueryKeys = {"kind",  "targets", "assignments", "constraints", "baseline_row", "gamma",
                                          "n",     "lambdas", "seed",        "proximity_weights", "search"};

} // namespace

std::string_view to_string(QueryKind kind) {
    switch (kind) {
    case QueryKind::recommend: return "recommend";
    case QueryKind::reconfigure: return "reconfigure";
    case QueryKind::what_if: return "what_if";
    }
    return "recommend";
}

Query parse_query(const json& j) {
    require(j.is_object(), "query must be a JSON object");
    for (const auto& [key, value] : j.items()) require(kQueryKeys.count(key) > 0, "unknown query field '" + key + "'");
    Query q;
    try {
        require(j.contains("kind") && j["kind"].is_string(), "query needs a 'kind'");
        const auto kind = j["kind"].get<std::string>();
        if (kind == "recommend") q.kind = QueryKind::recommend;
        else if (kind == "reconfigure") q.kind = QueryKind::reconfigure;
        else if (kind == "what_if" || kind == "what-if") q.kind = QueryKind::what_if;
        else throw QueryError("unknown query kind '" + kind + "'");

        for (const auto& t : j.value("targets", json::array())) {
            require(t.is_object() && t.contains("name") && t["name"].is_string(), "each target needs a 'name'");
            q.targets.push_back({t["name"].get<std::string>(), objective_from_json(t)});
        }
        if (j.contains("assignments")) {
            require(j["assignments"].is_object(), "'assignments' must be an object");
            for (const auto& [name, value] : j["assignments"].items()) q.assignments[name] = assignment_from_json(name, value);
        }
        if (j.contains("constraints")) {
            const auto& c = j["constraints"];
            if (c.is_array()) {
                for (const auto& item : c) q.constraints.push_back(constraint_from_json(item));
            } else if (c.is_object()) {
                if (c.contains("feature")) q.constraints.push_back(constraint_from_json(c));
                else
                    for (const auto& [key, value] : c.items()) q.constraints.push_back(constraint_from_json(json{{key, value}}));
            } else if (!c.is_null()) {
                throw QueryError("'constraints' must be an array");
            }
        }
        if (j.contains("baseline_row") && !j["baseline_row"].is_null()) {
            require(j["baseline_row"].is_number_unsigned(), "baseline_row must be a non-negative integer");
            q.baseline_row = j["baseline_row"].get<std::size_t>();
        }
        if (j.contains("gamma")) {
            require(j["gamma"].is_number_integer() && j["gamma"].get<long long>() >= 1, "gamma must be a positive integer");
            q.gamma = j["gamma"].get<int>();
        }
        if (j.contains("n")) {
            require(j["n"].is_number_integer() && j["n"].get<long long>() >= 1, "n must be a positive integer");
            q.n = j["n"].get<int>();
        }
        if (j.contains("lambdas")) {
            const auto& l = j["lambdas"];
            require(l.is_object(), "'lambdas' must be an object");
            for (const auto& [key, value] : l.items()) {
                require(value.is_number(), "lambda '" + key + "' must be a number");
                const double v = value.get<double>();
                require(std::isfinite(v) && v >= 0.0, "lambda '" + key + "' must be non-negative");
                if (key == "valid") q.lambdas.valid = v;
                else if (key == "prox") q.lambdas.prox = v;
                else if (key == "cons") q.lambdas.cons = v;
                else if (key == "div") q.lambdas.div = v;
                else throw QueryError("unknown lambda '" + key + "'");
            }
        }
        if (j.contains("seed")) {
            require(j["seed"].is_number_integer(), "seed must be an integer");
            q.seed = j["seed"].is_number_unsigned() ? j["seed"].get<std::uint64_t>()
                                                    : static_cast<std::uint64_t>(j["seed"].get<std::int64_t>());
        }
        if (j.contains("proximity_weights")) {
            for (const auto& [key, value] : j["proximity_weights"].items()) {
                require(value.is_number() && value.get<double>() >= 0.0, "proximity weight '" + key + "' must be non-negative");
                q.proximity_weights[key] = value.get<double>();
            }
        }
        if (j.contains("search")) {
            const auto& s = j["search"];
            require(s.is_object(), "'search' must be an object");
            auto& c = q.search;
            c.population = s.value("population", c.population);
            c.generations = s.value("generations", c.generations);
            c.workers = s.value("workers", c.workers);
            c.sigma = s.value("sigma", c.sigma);
            c.elitism = s.value("elitism", c.elitism);
            c.crossover_rate = s.value("crossover_rate", c.crossover_rate);
            c.tournament = s.value("tournament", c.tournament);
            c.time_budget_seconds = s.value("time_budget_seconds", c.time_budget_seconds);
            c.quantile = s.value("quantile", c.quantile);
            require(c.population >= 2, "search.population must be at least 2");
            require(c.generations >= 0, "search.generations must be non-negative");
            require(c.workers >= 1, "search.workers must be positive");
            require(c.sigma > 0.0, "search.sigma must be positive");
            require(c.elitism >= 0.0 && c.elitism < 1.0, "search.elitism must be in [0, 1)");
            require(c.crossover_rate >= 0.0 && c.crossover_rate <= 1.0, "search.crossover_rate must be in [0, 1]");
            require(c.tournament >= 1, "search.tournament must be positive");
            require(c.time_budget_seconds > 0.0, "search.time_budget_seconds must be positive");
            require(c.quantile > 0.0 && c.quantile < 0.5, "search.quantile must be in (0, 0.5)");
        }
    } catch (const json::exception& e) {
        throw QueryError(std::string("malformed query: ") + e.what());
    } catch (const SchemaError& e) {
        throw QueryError(e.what());
    }
    require(q.gamma <= q.n, "gamma must not exceed n");
    return q;
}

json query_to_json(const Query& q) {
    json j = {{"kind", to_string(q.kind)}, {"gamma", q.gamma}, {"n", q.n}, {"seed", q.seed}};
    j["targets"] = json::array();
    for (const auto& t : q.targets) j["targets"].push_back(objective_to_json(t));
    j["assignments"] = json::object();
    for (const auto& [name, a] : q.assignments) j["assignments"][name] = assignment_to_json(a);
    j["constraints"] = json::array();
    for (const auto& c : q.constraints) j["constraints"].push_back(constraint_to_json(c));
    if (q.baseline_row) j["baseline_row"] = *q.baseline_row;
    j["lambdas"] = {{"valid", q.lambdas.valid}, {"prox", q.lambdas.prox}, {"cons", q.lambdas.cons}, {"div", q.lambdas.div}};
    if (!q.proximity_weights.empty()) j["proximity_weights"] = q.proximity_weights;
    const auto& s = q.search;
    j["search"] = {{"population", s.population}, {"generations", s.generations}, {"workers", s.workers},
                   {"sigma", s.sigma}, {"elitism", s.elitism}, {"crossover_rate", s.crossover_rate},
                   {"tournament", s.tournament}, {"time_budget_seconds", s.time_budget_seconds},
                   {"quantile", s.quantile}};
    return j;
}

void validate_query(const Query& q, const DatasetHandle& handle) {
    const FeatureSchema& schema = handle.schema();
    const bool needs_baseline = q.kind != QueryKind::recommend;
    if (needs_baseline) require(q.baseline_row.has_value(), std::string(to_string(q.kind)) + " requires baseline_row");
    else require(!q.baseline_row.has_value(), "recommend does not take a baseline_row");
    if (q.baseline_row)
        require(handle.locate(*q.baseline_row).has_value(),
                "baseline_row " + std::to_string(*q.baseline_row) + " is not in the dataset");
    if (q.kind != QueryKind::what_if) require(!q.targets.empty(), std::string(to_string(q.kind)) + " needs at least one target");

    std::set<std::string> seen;
    for (const auto& t : q.targets) {
        const auto col = schema.find(t.name);
        require(col && schema.column(*col).role == ColumnRole::target, "'" + t.name + "' is not a target column");
        require(seen.insert(t.name).second, "target '" + t.name + "' listed twice");
        const auto& spec = schema.column(*col);
        const bool cls = spec.target_task == TargetTask::classification;
        if (t.objective.kind == ObjectiveKind::class_label) {
            require(cls, "class objective on regression target '" + t.name + "'");
            require(spec.code_of(t.objective.label).has_value(),
                    "class '" + t.objective.label + "' never occurs in target '" + t.name + "'");
        } else {
            require(!cls, "classification target '" + t.name + "' needs a class objective");
        }
        if (t.objective.kind == ObjectiveKind::change)
            require(q.kind != QueryKind::recommend, "change objectives need a baseline (reconfigure or what_if)");
    }

    bool concrete_transition = false;
    bool has_unknown = false;
    for (const auto& [name, a] : q.assignments) {
        const auto pos = schema.feature_position(name);
        require(pos.has_value(), "assignment names unknown feature '" + name + "'");
        const auto& spec = schema.feature(*pos);
        const auto check_cell = [&](const Cell& c, const std::string& what) {
            if (spec.kind == ColumnKind::numeric) {
                require(std::holds_alternative<double>(c), what + " for numeric feature '" + name + "' must be a number");
            } else {
                const auto* s = std::get_if<std::string>(&c);
                require(s != nullptr, what + " for categorical feature '" + name + "' must be a string");
                require(spec.code_of(*s).has_value(), "category '" + *s + "' never occurs in feature '" + name + "'");
            }
        };
        const bool becomes_unknown = a.kind == AssignmentKind::unknown ||
                                     (a.kind == AssignmentKind::transition && !a.to && !a.scale);
        if (becomes_unknown) {
            require(spec.is_mutable, "feature '" + name + "' is immutable and cannot be marked unknown");
            has_unknown = true;
        }
        if (a.kind == AssignmentKind::value) check_cell(a.value, "value");
        if (a.kind == AssignmentKind::transition) {
            require(q.kind != QueryKind::recommend, "transitions need a baseline (reconfigure or what_if)");
            if (a.to) check_cell(*a.to, "transition target");
            if (a.scale) require(spec.kind == ColumnKind::numeric, "scale transition on categorical feature '" + name + "'");
            if (a.from) {
                check_cell(*a.from, "transition source");
                const auto ref = handle.locate(*q.baseline_row);
                const Cell& actual = ref->table->rows[ref->index][schema.feature_columns()[*pos]];
                require(format_cell(actual) == format_cell(*a.from),
                        "transition for '" + name + "' starts from " + format_cell(*a.from) +
                            " but the baseline has " + format_cell(actual));
            }
            if (a.to || a.scale) concrete_transition = true;
        }
    }
    if (q.kind == QueryKind::what_if) {
        require(concrete_transition, "what_if requires at least one transition with a concrete new value");
        require(!has_unknown, "what_if does not search; unknown assignments are not allowed");
    }
    if (q.kind == QueryKind::reconfigure)
        require(has_unknown, "reconfigure requires at least one feature marked unknown");
    for (const auto& [name, w] : q.proximity_weights)
        require(schema.feature_position(name).has_value(), "proximity weight names unknown feature '" + name + "'");
    try {
        ConstraintSet(q.constraints, schema);
    } catch (const SchemaError& e) {
        throw QueryError(e.what());
    }
}

} // namespace compass
