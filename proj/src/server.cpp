#include "compass/server.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "compass/constraints.hpp"
#include "compass/error.hpp"
#include "compass/serialize.hpp"
#include "httplib.h"

namespace compass {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string error_name(const std::exception& e) {
    if (dynamic_cast<const DatasetEmpty*>(&e)) return "DatasetEmpty";
    if (dynamic_cast<const SchemaError*>(&e)) return "SchemaError";
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const UnknownCategory*>(&e)) return "UnknownCategory";
    if (dynamic_cast<const UnknownCode*>(&e)) return "UnknownCode";
    if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
    if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
    if (dynamic_cast<const TrainingFailed*>(&e)) return "TrainingFailed";
    if (dynamic_cast<const QueryError*>(&e)) return "QueryError";
    if (dynamic_cast<const IndexUnavailable*>(&e)) return "IndexUnavailable";
    if (dynamic_cast<const UnknownModel*>(&e)) return "UnknownModel";
    if (dynamic_cast<const MetricUndefined*>(&e)) return "MetricUndefined";
    return "Error";
}

Service::Response error_response(int status, const std::exception& e) {
    return {status, {{"error", error_name(e)}, {"message", e.what()}}, {}, "application/json"};
}

Service::Response error_response(int status, const std::string& kind, const std::string& message) {
    return {status, {{"error", kind}, {"message", message}}, {}, "application/json"};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << bytes;
        if (!out) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, p);
}

bool foreign_model_name(const std::string& filename) {
    static const char* exts[] = {".h5", ".hdf5", ".pt", ".pth", ".pkl", ".pickle", ".onnx", ".keras", ".joblib", ".pb"};
    std::string lower = filename;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const char* ext : exts)
        if (lower.size() >= std::strlen(ext) && lower.compare(lower.size() - std::strlen(ext), std::string::npos, ext) == 0)
            return true;
    return false;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    if (text.empty()) return out;
    if (text.front() == '[') {
        for (const auto& v : json::parse(text)) out.push_back(v.get<std::string>());
        return out;
    }
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

IngestOptions options_from_meta(const json& meta) {
    IngestOptions o;
    o.id = meta.at("dataset_id").get<std::string>();
    o.seed = meta.value("seed", std::uint64_t{0});
    o.hints = parse_schema_hints(meta.value("hints", std::string()));
    o.drop_columns = meta.value("drop", std::vector<std::string>{});
    o.enable_subsampling = meta.value("subsample", false);
    return o;
}

} // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)), jobs_(config_.data_dir / "jobs") {
    fs::create_directories(config_.data_dir / "datasets");
    for (const auto& d : fs::directory_iterator(config_.data_dir / "datasets")) {
        const fs::path meta = d.path() / "meta.json";
        if (!fs::exists(meta)) continue;
        auto e = std::make_shared<DatasetEntry>();
        e->meta = json::parse(read_file(meta));
        const auto id = e->meta.at("dataset_id").get<std::string>();
        next_dataset_ = std::max<std::size_t>(next_dataset_, std::strtoull(id.c_str() + 3, nullptr, 10) + 1);
        datasets_[id] = std::move(e);
    }
    for (const auto& id : jobs_.pending()) queue_.push_back(id);
    worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
    {
        std::lock_guard lock(queue_mu_);
        stop_ = true;
    }
    queue_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

fs::path Service::dataset_dir(const std::string& id) const { return config_.data_dir / "datasets" / id; }

std::shared_ptr<Service::DatasetEntry> Service::entry(const std::string& id) {
    std::lock_guard lock(datasets_mu_);
    const auto it = datasets_.find(id);
    return it == datasets_.end() ? nullptr : it->second;
}

std::shared_ptr<const DatasetHandle> Service::load_handle(DatasetEntry& e) {
    std::lock_guard lock(e.mu);
    if (!e.handle) {
        const auto id = e.meta.at("dataset_id").get<std::string>();
        const auto csv = read_file(dataset_dir(id) / "source.csv");
        e.handle = std::make_shared<const DatasetHandle>(ingest(csv, options_from_meta(e.meta)));
    }
    return e.handle;
}

std::shared_ptr<const Session> Service::ensure_session(DatasetEntry& e, const std::string& id) {
    auto handle = load_handle(e);
    std::lock_guard lock(e.mu);
    if (e.session) return e.session;
    const fs::path model = dataset_dir(id) / "bundle.cmps";
    std::shared_ptr<const SurrogateBundle> bundle;
    double train_time = 0.0;
    if (fs::exists(model)) {
        bundle = std::make_shared<const SurrogateBundle>(load(read_file(model)));
    } else {
        const auto start = std::chrono::steady_clock::now();
        bundle = std::make_shared<const SurrogateBundle>(
            train_select(*handle, config_.train.families, handle->seed(), config_.train.surrogate));
        train_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_file(model, persist(*bundle));
    }
    auto session = std::make_shared<Session>(open_session(handle, bundle, config_.train.trust));
    session->timings.train = train_time;
    e.session = session;
    return e.session;
}

Service::Response Service::upload_dataset(const Upload& upload) {
    if (foreign_model_name(upload.filename))
        return error_response(415, "UnsupportedMediaType",
                              "pretrained models in foreign formats are not supported; upload a CSV dataset");
    if (upload.content.empty()) return error_response(400, "ParseError", "multipart field 'file' with CSV content is required");

    std::string id;
    {
        std::lock_guard lock(datasets_mu_);
        id = "ds-" + std::to_string(next_dataset_++);
    }
    json meta = {{"dataset_id", id}, {"filename", upload.filename}, {"hints", upload.hints}};
    try {
        const auto get = [&](const std::string& k) {
            const auto it = upload.fields.find(k);
            return it == upload.fields.end() ? std::string() : it->second;
        };
        meta["seed"] = get("seed").empty() ? config_.seed : std::stoull(get("seed"));
        meta["drop"] = split_list(get("drop"));
        meta["subsample"] = get("subsample") == "true" || get("subsample") == "1";
    } catch (const std::exception& e) {
        return error_response(400, "SchemaError", std::string("bad upload field: ") + e.what());
    }

    std::shared_ptr<const DatasetHandle> handle;
    try {
        handle = std::make_shared<const DatasetHandle>(ingest(upload.content, options_from_meta(meta)));
    } catch (const Error& e) {
        return error_response(400, e);
    }
    const fs::path dir = dataset_dir(id);
    fs::create_directories(dir);
    write_file(dir / "source.csv", upload.content);
    write_file(dir / "meta.json", meta.dump(2));
    auto e = std::make_shared<DatasetEntry>();
    e->meta = meta;
    e->handle = handle;
    {
        std::lock_guard lock(datasets_mu_);
        datasets_[id] = std::move(e);
    }
    return {201, dataset_summary(*handle), {}, "application/json"};
}

Service::Response Service::list_datasets() {
    json list = json::array();
    std::lock_guard lock(datasets_mu_);
    for (const auto& [id, e] : datasets_) list.push_back({{"dataset_id", id}, {"filename", e->meta.value("filename", "")}});
    return {200, {{"datasets", list}}, {}, "application/json"};
}

Service::Response Service::get_dataset(const std::string& id) {
    auto e = entry(id);
    if (!e) return error_response(404, "NotFound", "unknown dataset '" + id + "'");
    try {
        auto h = load_handle(*e);
        json body = dataset_summary(*h);
        {
            std::lock_guard lock(e->mu);
            body["trained"] = e->session != nullptr || fs::exists(dataset_dir(id) / "bundle.cmps");
        }
        return {200, body, {}, "application/json"};
    } catch (const Error& ex) {
        return error_response(500, ex);
    }
}

Service::Response Service::samples(const std::string& id, const std::optional<std::string>& filter_text,
                                   const std::optional<std::string>& limit_text) {
    auto e = entry(id);
    if (!e) return error_response(404, "NotFound", "unknown dataset '" + id + "'");
    std::size_t limit = 50;
    if (limit_text) {
        try {
            const long long v = std::stoll(*limit_text);
            if (v < 0) throw std::invalid_argument("negative");
            limit = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            return error_response(400, "QueryError", "limit must be a non-negative integer");
        }
    }
    auto h = load_handle(*e);
    const auto& schema = h->schema();
    ConstraintSet set;
    try {
        if (filter_text && !filter_text->empty()) set = parse_constraints(json::parse(*filter_text), schema);
        else set = ConstraintSet({}, schema);
    } catch (const json::exception& ex) {
        return error_response(400, "SchemaError", std::string("filter is not valid JSON: ") + ex.what());
    } catch (const Error& ex) {
        return error_response(400, ex);
    }
    const auto result = filter(*h, set);
    json rows = json::array();
    for (std::size_t i = 0; i < result.satisfying.size() && i < limit; ++i) {
        const auto id_row = result.satisfying[i];
        const auto ref = h->locate(id_row);
        rows.push_back(row_to_json(id_row, ref->table->rows[ref->index], schema));
    }
    return {200, {{"dataset_id", id}, {"rows", rows}, {"total", result.satisfying.size()}}, {}, "application/json"};
}

Service::Response Service::train(const std::string& id, const std::string& body) {
    auto e = entry(id);
    if (!e) return error_response(404, "NotFound", "unknown dataset '" + id + "'");
    std::vector<Family> families = config_.train.families;
    try {
        if (!body.empty()) {
            const auto j = json::parse(body);
            if (j.contains("families")) {
                families.clear();
                for (const auto& f : j["families"]) families.push_back(family_from_string(f.get<std::string>()));
            }
        }
    } catch (const std::exception& ex) {
        return error_response(400, "SchemaError", std::string("bad train request: ") + ex.what());
    }
    try {
        auto h = load_handle(*e);
        std::lock_guard lock(e->mu);
        auto bundle = std::make_shared<const SurrogateBundle>(
            train_select(*h, families, h->seed(), config_.train.surrogate));
        write_file(dataset_dir(id) / "bundle.cmps", persist(*bundle));
        e->session = std::make_shared<Session>(open_session(h, bundle, config_.train.trust));
        json out = selection_report_to_json(*bundle);
        out["dataset_id"] = id;
        return {200, out, {}, "application/json"};
    } catch (const Error& ex) {
        return error_response(422, ex);
    }
}

Service::Response Service::upload_model(const std::string& id, const std::string& filename, const std::string& bytes) {
    auto e = entry(id);
    if (!e) return error_response(404, "NotFound", "unknown dataset '" + id + "'");
    if (bytes.size() < 4 || bytes.compare(0, 4, "CMPS") != 0 || foreign_model_name(filename))
        return error_response(415, "UnsupportedMediaType",
                              "only engine-native surrogate bundles (.cmps) can be loaded; foreign model formats are out of scope");
    try {
        auto h = load_handle(*e);
        auto bundle = std::make_shared<const SurrogateBundle>(load(bytes));
        std::lock_guard lock(e->mu);
        e->session = std::make_shared<Session>(open_session(h, bundle, config_.train.trust));
        write_file(dataset_dir(id) / "bundle.cmps", bytes);
        json out = selection_report_to_json(*bundle);
        out["dataset_id"] = id;
        return {200, out, {}, "application/json"};
    } catch (const Error& ex) {
        return error_response(400, ex);
    }
}

Service::Response Service::download_model(const std::string& id) {
    auto e = entry(id);
    if (!e) return error_response(404, "NotFound", "unknown dataset '" + id + "'");
    const fs::path model = dataset_dir(id) / "bundle.cmps";
    if (!fs::exists(model)) return error_response(404, "NotFound", "dataset '" + id + "' has no trained surrogate yet");
    return {200, nullptr, read_file(model), "application/octet-stream"};
}

Service::Response Service::submit_query(const std::string& id, const std::string& body) {
    auto e = entry(id);
    if (!e) return error_response(404, "NotFound", "unknown dataset '" + id + "'");
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& ex) {
        return error_response(400, "QueryError", std::string("query is not valid JSON: ") + ex.what());
    }
    if (j.is_object() && !j.contains("seed")) j["seed"] = config_.seed;
    try {
        const Query q = parse_query(j);
        validate_query(q, *load_handle(*e));
    } catch (const QueryError& ex) {
        return error_response(422, ex);
    } catch (const Error& ex) {
        return error_response(422, ex);
    }
    const JobRecord r = jobs_.create(id, j);
    enqueue(r.job_id);
    return {202, {{"job_id", r.job_id}, {"state", to_string(r.state)}}, {}, "application/json"};
}

Service::Response Service::get_job(const std::string& job_id) {
    const auto r = jobs_.get(job_id);
    if (!r) return error_response(404, "NotFound", "unknown job '" + job_id + "'");
    return {200, r->to_json(), {}, "application/json"};
}

Service::Response Service::list_jobs() {
    json list = json::array();
    for (const auto& r : jobs_.list())
        list.push_back({{"job_id", r.job_id}, {"dataset_id", r.dataset_id}, {"state", to_string(r.state)}});
    return {200, {{"jobs", list}}, {}, "application/json"};
}

void Service::enqueue(const std::string& job_id) {
    {
        std::lock_guard lock(queue_mu_);
        queue_.push_back(job_id);
    }
    queue_cv_.notify_one();
}

void Service::wait_idle() {
    std::unique_lock lock(queue_mu_);
    idle_cv_.wait(lock, [&] { return queue_.empty() && !busy_; });
}

void Service::worker_loop() {
    for (;;) {
        std::string job_id;
        {
            std::unique_lock lock(queue_mu_);
            queue_cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
            if (stop_) return;
            job_id = queue_.front();
            queue_.pop_front();
            busy_ = true;
        }
        run_job(job_id);
        {
            std::lock_guard lock(queue_mu_);
            busy_ = false;
        }
        idle_cv_.notify_all();
    }
}

void Service::run_job(const std::string& job_id) {
    auto record = jobs_.get(job_id);
    if (!record || record->state != JobState::queued) return;
    record->advance(JobState::running);
    jobs_.put(*record);
    try {
        auto e = entry(record->dataset_id);
        if (!e) throw Error("dataset '" + record->dataset_id + "' no longer exists");
        const auto session = ensure_session(*e, record->dataset_id);
        const Query q = parse_query(record->query);
        auto outcome = run_query(q, *session);
        outcome.timings.train = session->timings.train;
        record->timings = outcome.timings;
        record->result = candidate_set_to_json(outcome.result, session->handle->schema());
        record->advance(outcome.result.target_unmet ? JobState::target_unmet : JobState::done);
    } catch (const std::exception& ex) {
        record->error = error_name(ex) + ": " + ex.what();
        record->advance(JobState::failed);
    }
    jobs_.put(*record);
}

// --- HTTP ---

struct HttpServer::Impl {
    Service& service;
    httplib::Server server;
    std::thread thread;

    explicit Impl(Service& s) : service(s) { routes(); }

    static void reply(httplib::Response& res, const Service::Response& r) {
        res.status = r.status;
        if (r.content_type == "application/json") res.set_content(r.body.dump(), "application/json");
        else res.set_content(r.raw, r.content_type);
    }

    void routes() {
        server.set_payload_max_length(std::size_t{1} << 31);
        server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"status":"ok"})", "application/json");
        });
        server.Post("/datasets", [this](const httplib::Request& req, httplib::Response& res) {
            Service::Upload up;
            if (req.is_multipart_form_data()) {
                if (req.has_file("file")) {
                    const auto f = req.get_file_value("file");
                    up.filename = f.filename;
                    up.content = f.content;
                }
                if (req.has_file("hints")) up.hints = req.get_file_value("hints").content;
                for (const char* k : {"seed", "drop", "subsample"})
                    if (req.has_file(k)) up.fields[k] = req.get_file_value(k).content;
            } else {
                up.content = req.body;
                if (req.has_param("hints")) up.hints = req.get_param_value("hints");
            }
            reply(res, service.upload_dataset(up));
        });
        server.Get("/datasets", [this](const httplib::Request&, httplib::Response& res) { reply(res, service.list_datasets()); });
        server.Get(R"(/datasets/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, service.get_dataset(req.matches[1]));
        });
        server.Get(R"(/datasets/([^/]+)/samples)", [this](const httplib::Request& req, httplib::Response& res) {
            std::optional<std::string> filter, limit;
            if (req.has_param("filter")) filter = req.get_param_value("filter");
            if (req.has_param("limit")) limit = req.get_param_value("limit");
            reply(res, service.samples(req.matches[1], filter, limit));
        });
        server.Post(R"(/datasets/([^/]+)/train)", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, service.train(req.matches[1], req.body));
        });
        server.Post(R"(/datasets/([^/]+)/model)", [this](const httplib::Request& req, httplib::Response& res) {
            std::string filename, bytes = req.body;
            if (req.is_multipart_form_data() && req.has_file("file")) {
                const auto f = req.get_file_value("file");
                filename = f.filename;
                bytes = f.content;
            }
            reply(res, service.upload_model(req.matches[1], filename, bytes));
        });
        server.Get(R"(/datasets/([^/]+)/model)", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, service.download_model(req.matches[1]));
        });
        server.Post(R"(/datasets/([^/]+)/queries)", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, service.submit_query(req.matches[1], req.body));
        });
        server.Get("/queries", [this](const httplib::Request&, httplib::Response& res) { reply(res, service.list_jobs()); });
        server.Get(R"(/queries/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, service.get_job(req.matches[1]));
        });
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string message = "internal error";
            try {
                if (ep) std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                message = e.what();
            } catch (...) {
            }
            res.status = 500;
            res.set_content(json{{"error", "Error"}, {"message", message}}.dump(), "application/json");
        });
    }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void HttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

} // namespace compass
