#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "compass/job_store.hpp"
#include "compass/pipeline.hpp"
#include "json.hpp"

namespace compass {

struct ServiceConfig {
    std::filesystem::path data_dir = "compass-data";
    std::uint64_t seed = 0; // ingestion, training and queries without their own seed
    TrainOptions train;
};

/// The HTTP-independent core: datasets, cached surrogates, and the job queue.
/// Each handler returns a status code and a JSON body.
class Service {
public:
    struct Response {
        int status = 200;
        nlohmann::json body;
        std::string raw; // non-JSON payloads (model download)
        std::string content_type = "application/json";
    };

    struct Upload {
        std::string filename;
        std::string content;
        std::string hints;                       // schema-hints JSON text
        std::map<std::string, std::string> fields; // seed, drop, subsample
    };

    explicit Service(ServiceConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    Response upload_dataset(const Upload& upload);
    Response list_datasets();
    Response get_dataset(const std::string& id);
    Response samples(const std::string& id, const std::optional<std::string>& filter, const std::optional<std::string>& limit);
    Response train(const std::string& id, const std::string& body);
    Response upload_model(const std::string& id, const std::string& filename, const std::string& bytes);
    Response download_model(const std::string& id);
    Response submit_query(const std::string& id, const std::string& body);
    Response get_job(const std::string& job_id);
    Response list_jobs();

    /// Blocks until no job is queued or running.
    void wait_idle();

private:
    struct DatasetEntry {
        nlohmann::json meta;
        std::shared_ptr<const DatasetHandle> handle;
        std::shared_ptr<const Session> session;
        std::mutex mu; // serializes loading and training for this dataset
    };

    std::shared_ptr<DatasetEntry> entry(const std::string& id);
    std::shared_ptr<const DatasetHandle> load_handle(DatasetEntry& e);
    std::shared_ptr<const Session> ensure_session(DatasetEntry& e, const std::string& id);
    std::filesystem::path dataset_dir(const std::string& id) const;
    void enqueue(const std::string& job_id);
    void worker_loop();
    void run_job(const std::string& job_id);

    ServiceConfig config_;
    JobStore jobs_;
    std::mutex datasets_mu_;
    std::map<std::string, std::shared_ptr<DatasetEntry>> datasets_;
    std::size_t next_dataset_ = 1;

    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::condition_variable idle_cv_;
    std::deque<std::string> queue_;
    bool busy_ = false;
    bool stop_ = false;
    std::thread worker_;
};

/// HTTP front end over a Service (cpp-httplib).
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    /// Binds (port 0 picks a free port) and serves on a background thread; returns the port.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace compass
