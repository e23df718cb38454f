#include "compass/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "compass/csv.hpp"
#include "compass/error.hpp"
#include "json.hpp"

namespace compass {

using nlohmann::json;

// ---------------------------------------------------------------- table.hpp

std::string_view to_string(ColumnKind kind) {
    return kind == ColumnKind::numeric ? "numeric" : "categorical";
}

std::string_view to_string(ColumnRole role) {
    switch (role) {
    case ColumnRole::user_feature: return "user_feature";
    case ColumnRole::system_feature: return "system_feature";
    case ColumnRole::target: return "target";
    }
    return "user_feature";
}

std::string_view to_string(TargetTask task) {
    return task == TargetTask::regression ? "regression" : "classification";
}

ColumnKind column_kind_from_string(std::string_view text) {
    if (text == "numeric") return ColumnKind::numeric;
    if (text == "categorical") return ColumnKind::categorical;
    throw SchemaError("unknown column kind '" + std::string(text) + "'");
}

ColumnRole column_role_from_string(std::string_view text) {
    if (text == "user_feature") return ColumnRole::user_feature;
    if (text == "system_feature") return ColumnRole::system_feature;
    if (text == "target") return ColumnRole::target;
    throw SchemaError("unknown column role '" + std::string(text) + "'");
}

TargetTask target_task_from_string(std::string_view text) {
    if (text == "regression") return TargetTask::regression;
    if (text == "classification") return TargetTask::classification;
    throw SchemaError("unknown target task '" + std::string(text) + "'");
}

std::string format_cell(const Cell& cell) {
    if (const auto* s = std::get_if<std::string>(&cell)) return *s;
    char buffer[64];
    auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, std::get<double>(cell));
    return std::string(buffer, end);
}

double ColumnSpec::range() const {
    const double r = max - min;
    return r > 0.0 ? r : 1.0;
}

std::optional<int> ColumnSpec::code_of(std::string_view category) const {
    auto it = std::lower_bound(categories.begin(), categories.end(), category);
    if (it == categories.end() || *it != category) return std::nullopt;
    return static_cast<int>(it - categories.begin());
}

FeatureSchema::FeatureSchema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
    bool has_user = false;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        if (!by_name_.emplace(c.name, i).second)
            throw SchemaError("duplicate column '" + c.name + "'");
        if (c.role == ColumnRole::target) {
            targets_.push_back(i);
        } else {
            features_.push_back(i);
            has_user = has_user || c.role == ColumnRole::user_feature;
        }
    }
    if (targets_.empty()) throw SchemaError("schema needs at least one target column");
    if (!has_user) throw SchemaError("schema needs at least one user_feature column");
}

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

std::size_t FeatureSchema::index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw SchemaError("unknown column '" + std::string(name) + "'");
}

std::optional<std::size_t> FeatureSchema::feature_position(std::string_view name) const {
    auto i = find(name);
    if (!i) return std::nullopt;
    auto it = std::find(features_.begin(), features_.end(), *i);
    if (it == features_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - features_.begin());
}

std::vector<std::string> FeatureSchema::feature_names() const {
    std::vector<std::string> names;
    for (auto i : features_) names.push_back(columns_[i].name);
    return names;
}

std::vector<bool> FeatureSchema::categorical_mask() const {
    std::vector<bool> mask;
    for (auto i : features_) mask.push_back(columns_[i].kind == ColumnKind::categorical);
    return mask;
}

Config feature_config(const FeatureSchema& schema, std::span<const Cell> row) {
    Config config;
    config.reserve(schema.feature_count());
    for (auto i : schema.feature_columns()) config.push_back(row[i]);
    return config;
}

// ---------------------------------------------------------------- hints

SchemaHints parse_schema_hints(std::string_view json_text) {
    SchemaHints hints;
    if (json_text.find_first_not_of(" \t\r\n") == std::string_view::npos) return hints;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("schema hints are not valid JSON: ") + e.what());
    }
    try {
        if (doc.contains("columns")) {
            for (const auto& c : doc.at("columns")) {
                ColumnHint hint;
                hint.name = c.at("name").get<std::string>();
                if (c.contains("kind")) hint.kind = column_kind_from_string(c["kind"].get<std::string>());
                if (c.contains("role")) hint.role = column_role_from_string(c["role"].get<std::string>());
                if (c.contains("target_task") && !c["target_task"].is_null())
                    hint.target_task = target_task_from_string(c["target_task"].get<std::string>());
                if (c.contains("mutable")) hint.is_mutable = c["mutable"].get<bool>();
                hints.columns.push_back(std::move(hint));
            }
        }
        if (doc.contains("drop")) hints.drop = doc["drop"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed schema hints: ") + e.what());
    }
    return hints;
}

// ---------------------------------------------------------------- handle

namespace {

bool degenerate(const ColumnStats& s) { return s.stddev == 0.0; }

} // namespace

DatasetHandle::DatasetHandle(std::string id, FeatureSchema schema, Table train, Table validation,
                             std::uint64_t seed, std::size_t source_rows)
    : id_(std::move(id)), schema_(std::move(schema)), train_(std::move(train)),
      validation_(std::move(validation)), seed_(seed), source_rows_(source_rows) {
    const std::size_t d = schema_.feature_count();
    scaler_.assign(d, {});
    for (std::size_t p = 0; p < d; ++p) {
        if (schema_.feature(p).kind != ColumnKind::numeric || train_.empty()) continue;
        const std::size_t col = schema_.feature_columns()[p];
        double sum = 0.0;
        for (const auto& row : train_.rows) sum += std::get<double>(row[col]);
        const double mean = sum / static_cast<double>(train_.size());
        double ss = 0.0;
        for (const auto& row : train_.rows) {
            const double dv = std::get<double>(row[col]) - mean;
            ss += dv * dv;
        }
        double sd = std::sqrt(ss / static_cast<double>(train_.size()));
        if (sd <= 1e-12 * std::abs(mean)) sd = 0.0;
        scaler_[p] = {mean, sd};
    }
    auto encode_table = [&](const Table& t) {
        Matrix m(t.size(), d);
        for (std::size_t r = 0; r < t.size(); ++r) {
            auto enc = encode(feature_config(schema_, t.rows[r]), false);
            std::copy(enc.begin(), enc.end(), m.row(r).begin());
        }
        return m;
    };
    train_x_ = encode_table(train_);
    validation_x_ = encode_table(validation_);
}

double DatasetHandle::encode_feature(std::size_t p, double raw) const {
    const auto& s = scaler_[p];
    return degenerate(s) ? 0.0 : (raw - s.mean) / s.stddev;
}

double DatasetHandle::decode_feature(std::size_t p, double encoded) const {
    const auto& s = scaler_[p];
    return degenerate(s) ? s.mean : s.mean + encoded * s.stddev;
}

std::vector<double> DatasetHandle::encode(const Config& config, bool lenient) const {
    const std::size_t d = schema_.feature_count();
    if (config.size() != d)
        throw ShapeError("configuration has " + std::to_string(config.size()) + " fields, schema has " +
                         std::to_string(d) + " features");
    std::vector<double> out(d);
    for (std::size_t p = 0; p < d; ++p) {
        const auto& spec = schema_.feature(p);
        if (spec.kind == ColumnKind::numeric) {
            const auto* v = std::get_if<double>(&config[p]);
            if (!v) throw ShapeError("feature '" + spec.name + "' expects a number");
            out[p] = encode_feature(p, *v);
        } else {
            const auto* s = std::get_if<std::string>(&config[p]);
            if (!s) throw ShapeError("feature '" + spec.name + "' expects a category label");
            if (auto code = spec.code_of(*s)) {
                out[p] = *code;
            } else if (lenient) {
                out[p] = -1.0;
            } else {
                throw UnknownCategory("unseen category '" + *s + "' for feature '" + spec.name + "'");
            }
        }
    }
    return out;
}

std::vector<double> DatasetHandle::normalize(const Config& config) const { return encode(config, false); }

std::vector<double> DatasetHandle::normalize_lenient(const Config& config) const {
    return encode(config, true);
}

Config DatasetHandle::denormalize(std::span<const double> encoded) const {
    const std::size_t d = schema_.feature_count();
    if (encoded.size() != d)
        throw ShapeError("encoded vector has " + std::to_string(encoded.size()) + " entries, expected " +
                         std::to_string(d));
    Config out;
    out.reserve(d);
    for (std::size_t p = 0; p < d; ++p) {
        const auto& spec = schema_.feature(p);
        if (spec.kind == ColumnKind::numeric) {
            out.emplace_back(decode_feature(p, encoded[p]));
            continue;
        }
        const double code = encoded[p];
        if (!std::isfinite(code) || code != std::floor(code) || code < 0 ||
            code >= static_cast<double>(spec.categories.size()))
            throw UnknownCode("code " + format_cell(code) + " is outside the category map of '" + spec.name + "'");
        out.emplace_back(spec.categories[static_cast<std::size_t>(code)]);
    }
    return out;
}

double encode_target(const ColumnSpec& column, const Cell& cell) {
    if (column.kind == ColumnKind::numeric) return std::get<double>(cell);
    const auto& label = std::get<std::string>(cell);
    auto code = column.code_of(label);
    if (!code) throw UnknownCategory("unseen class '" + label + "' for target '" + column.name + "'");
    return *code;
}

std::vector<double> DatasetHandle::target_values(const Table& table, std::size_t target_column) const {
    const auto& spec = schema_.column(target_column);
    std::vector<double> out;
    out.reserve(table.size());
    for (const auto& row : table.rows) out.push_back(encode_target(spec, row[target_column]));
    return out;
}

std::optional<DatasetHandle::RowRef> DatasetHandle::locate(std::size_t row_id) const {
    for (const Table* t : {&train_, &validation_}) {
        auto it = std::lower_bound(t->row_ids.begin(), t->row_ids.end(), row_id);
        if (it != t->row_ids.end() && *it == row_id)
            return RowRef{t, static_cast<std::size_t>(it - t->row_ids.begin())};
    }
    return std::nullopt;
}

// ---------------------------------------------------------------- ingest

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool is_missing_token(std::string_view s) { return s.empty(); }

std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

Table sorted_by_row_id(Table t) {
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t.row_ids[a] < t.row_ids[b]; });
    Table out;
    out.row_ids.reserve(t.size());
    out.rows.reserve(t.size());
    for (auto i : order) {
        out.row_ids.push_back(t.row_ids[i]);
        out.rows.push_back(std::move(t.rows[i]));
    }
    return out;
}

} // namespace

DatasetHandle ingest(std::string_view csv_text, const IngestOptions& options) {
    auto records = csv::parse(csv_text);
    if (records.empty()) throw SchemaError("CSV has no header row");
    const auto header = records.front();
    {
        std::unordered_set<std::string> seen;
        for (const auto& h : header)
            if (!seen.insert(h).second) throw SchemaError("duplicate header column '" + h + "'");
    }
    auto header_index = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };

    std::set<std::size_t> dropped;
    auto drop = options.drop_columns;
    drop.insert(drop.end(), options.hints.drop.begin(), options.hints.drop.end());
    for (const auto& name : drop) {
        auto i = header_index(name);
        if (!i) throw SchemaError("drop list names unknown column '" + name + "'");
        dropped.insert(*i);
    }
    std::vector<const ColumnHint*> hint_of(header.size(), nullptr);
    for (const auto& hint : options.hints.columns) {
        auto i = header_index(hint.name);
        if (!i) throw SchemaError("schema hint names unknown column '" + hint.name + "'");
        hint_of[*i] = &hint;
    }

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (!dropped.count(i)) kept.push_back(i);

    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != header.size())
            throw ParseError("row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                             " fields, header has " + std::to_string(header.size()));
    }

    // Column specs (kind, role, task).
    std::vector<ColumnSpec> specs;
    for (auto i : kept) {
        ColumnSpec spec;
        spec.name = header[i];
        const ColumnHint* hint = hint_of[i];
        spec.role = hint && hint->role ? *hint->role : ColumnRole::user_feature;
        if (hint && hint->kind) {
            spec.kind = *hint->kind;
        } else {
            bool numeric = true;
            for (std::size_t r = 1; r < records.size() && numeric; ++r) {
                auto cell = trim(records[r][i]);
                if (!is_missing_token(cell) && !parse_number(cell)) numeric = false;
            }
            spec.kind = numeric ? ColumnKind::numeric : ColumnKind::categorical;
        }
        if (spec.role == ColumnRole::target) {
            spec.target_task = hint && hint->target_task
                                   ? *hint->target_task
                                   : (spec.kind == ColumnKind::numeric ? TargetTask::regression
                                                                      : TargetTask::classification);
            if (*spec.target_task == TargetTask::classification) spec.kind = ColumnKind::categorical;
            if (*spec.target_task == TargetTask::regression && spec.kind != ColumnKind::numeric)
                throw SchemaError("regression target '" + spec.name + "' must be numeric");
        }
        spec.is_mutable = hint && hint->is_mutable ? *hint->is_mutable : spec.role == ColumnRole::user_feature;
        specs.push_back(std::move(spec));
    }

    // Rows: parse, dropping any row with a missing required value.
    Table table;
    for (std::size_t r = 1; r < records.size(); ++r) {
        std::vector<Cell> row;
        row.reserve(kept.size());
        bool missing = false;
        for (std::size_t k = 0; k < kept.size() && !missing; ++k) {
            auto token = trim(records[r][kept[k]]);
            if (is_missing_token(token)) {
                missing = true;
                break;
            }
            if (specs[k].kind == ColumnKind::numeric) {
                auto v = parse_number(token);
                if (!v)
                    throw ParseError("row " + std::to_string(r) + ", column '" + specs[k].name +
                                     "': cannot parse '" + std::string(token) + "' as a number");
                row.emplace_back(*v);
            } else {
                row.emplace_back(std::string(token));
            }
        }
        if (missing) continue;
        table.row_ids.push_back(r - 1);
        table.rows.push_back(std::move(row));
    }
    if (table.empty()) throw DatasetEmpty("no rows left after removing missing values");

    // Observed ranges and category sets over the filtered table.
    for (std::size_t k = 0; k < specs.size(); ++k) {
        auto& spec = specs[k];
        if (spec.kind == ColumnKind::numeric) {
            spec.min = spec.max = std::get<double>(table.rows.front()[k]);
            spec.integral = true;
            for (const auto& row : table.rows) {
                const double v = std::get<double>(row[k]);
                spec.min = std::min(spec.min, v);
                spec.max = std::max(spec.max, v);
                spec.integral = spec.integral && v == std::floor(v);
            }
        } else {
            std::set<std::string> cats;
            for (const auto& row : table.rows) cats.insert(std::get<std::string>(row[k]));
            spec.categories.assign(cats.begin(), cats.end());
        }
    }
    FeatureSchema schema(std::move(specs));
    const std::size_t source_rows = table.size();

    if (options.enable_subsampling && table.size() > options.sampling.threshold_rows)
        table = subsample(table, schema, options.seed, options.sampling);

    // 80/20 split by seeded shuffle.
    std::vector<std::size_t> order(table.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(options.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(table.size())));
    Table train, validation;
    for (std::size_t i = 0; i < order.size(); ++i) {
        Table& dst = i < n_val ? validation : train;
        dst.row_ids.push_back(table.row_ids[order[i]]);
        dst.rows.push_back(std::move(table.rows[order[i]]));
    }
    if (train.empty()) throw DatasetEmpty("training partition is empty");
    return DatasetHandle(options.id, std::move(schema), sorted_by_row_id(std::move(train)),
                         sorted_by_row_id(std::move(validation)), options.seed, source_rows);
}

} // namespace compass
