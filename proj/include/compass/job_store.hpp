#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "compass/pipeline.hpp"
#include "json.hpp"

namespace compass {

enum class JobState { queued, running, done, failed, target_unmet };
std::string_view to_string(JobState state);
JobState job_state_from_string(std::string_view text);
/// queued -> running -> {done, failed, target_unmet}; nothing else.
bool can_advance(JobState from, JobState to);

struct JobRecord {
    std::string job_id;
    std::string dataset_id;
    nlohmann::json query;
    JobState state = JobState::queued;
    std::optional<nlohmann::json> result;
    std::optional<std::string> error;
    Timings timings;

    /// Throws Error on a backward or sideways transition.
    void advance(JobState next);

    nlohmann::json to_json() const;
    static JobRecord from_json(const nlohmann::json& j);
};

/// One JSON file per job under `dir`. Thread-safe.
class JobStore {
public:
    /// Loads existing records; jobs found queued or running are reset to queued.
    explicit JobStore(std::filesystem::path dir);

    JobRecord create(const std::string& dataset_id, const nlohmann::json& query);
    std::optional<JobRecord> get(const std::string& job_id) const;
    void put(const JobRecord& record);
    /// Queued job ids in creation order.
    std::vector<std::string> pending() const;
    std::vector<JobRecord> list() const;

private:
    void persist(const JobRecord& record) const;

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, JobRecord> jobs_;
    std::size_t next_ = 1;
};

} // namespace compass
