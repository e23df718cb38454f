#include "compass/job_store.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "compass/error.hpp"

namespace compass {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(JobState state) {
    switch (state) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
    case JobState::target_unmet: return "target_unmet";
    }
    return "queued";
}

JobState job_state_from_string(std::string_view text) {
    for (auto s : {JobState::queued, JobState::running, JobState::done, JobState::failed, JobState::target_unmet})
        if (to_string(s) == text) return s;
    throw Error("unknown job state '" + std::string(text) + "'");
}

bool can_advance(JobState from, JobState to) {
    if (from == JobState::queued) return to == JobState::running;
    if (from == JobState::running) return to == JobState::done || to == JobState::failed || to == JobState::target_unmet;
    return false;
}

void JobRecord::advance(JobState next) {
    if (!can_advance(state, next))
        throw Error("job " + job_id + ": illegal transition " + std::string(to_string(state)) + " -> " +
                    std::string(to_string(next)));
    state = next;
}

json JobRecord::to_json() const {
    json j = {{"job_id", job_id},
              {"dataset_id", dataset_id},
              {"query", query},
              {"state", to_string(state)},
              {"result", result ? *result : json(nullptr)},
              {"error", error ? json(*error) : json(nullptr)},
              {"timings",
               {{"preprocess", timings.preprocess},
                {"train", timings.train},
                {"generate", timings.generate},
                {"assess", timings.assess}}}};
    return j;
}

JobRecord JobRecord::from_json(const json& j) {
    JobRecord r;
    r.job_id = j.at("job_id").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.query = j.at("query");
    r.state = job_state_from_string(j.at("state").get<std::string>());
    if (j.contains("result") && !j["result"].is_null()) r.result = j["result"];
    if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
    if (j.contains("timings")) {
        const auto& t = j["timings"];
        r.timings.preprocess = t.value("preprocess", 0.0);
        r.timings.train = t.value("train", 0.0);
        r.timings.generate = t.value("generate", 0.0);
        r.timings.assess = t.value("assess", 0.0);
    }
    return r;
}

JobStore::JobStore(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (entry.path().extension() != ".json") continue;
        std::ifstream in(entry.path());
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            warn("skipping unreadable job file " + entry.path().string() + ": " + e.what());
            continue;
        }
        JobRecord r = JobRecord::from_json(j);
        if (r.state == JobState::running) {
            // Interrupted by a restart: run it again from the start.
            r.state = JobState::queued;
            persist(r);
        }
        const auto number = std::strtoull(r.job_id.c_str() + r.job_id.find_first_of("0123456789"), nullptr, 10);
        next_ = std::max<std::size_t>(next_, number + 1);
        jobs_[r.job_id] = std::move(r);
    }
}

JobRecord JobStore::create(const std::string& dataset_id, const json& query) {
    std::lock_guard lock(mu_);
    char id[32];
    std::snprintf(id, sizeof id, "job-%06zu", next_++);
    JobRecord r;
    r.job_id = id;
    r.dataset_id = dataset_id;
    r.query = query;
    persist(r);
    jobs_[r.job_id] = r;
    return r;
}

std::optional<JobRecord> JobStore::get(const std::string& job_id) const {
    std::lock_guard lock(mu_);
    const auto it = jobs_.find(job_id);
    if (it == jobs_.end()) return std::nullopt;
    return it->second;
}

void JobStore::put(const JobRecord& record) {
    std::lock_guard lock(mu_);
    persist(record);
    jobs_[record.job_id] = record;
}

std::vector<std::string> JobStore::pending() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, r] : jobs_)
        if (r.state == JobState::queued) out.push_back(id);
    return out;
}

std::vector<JobRecord> JobStore::list() const {
    std::lock_guard lock(mu_);
    std::vector<JobRecord> out;
    for (const auto& [id, r] : jobs_) out.push_back(r);
    return out;
}

void JobStore::persist(const JobRecord& record) const {
    const fs::path target = dir_ / (record.job_id + ".json");
    const fs::path tmp = dir_ / (record.job_id + ".json.tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << record.to_json().dump(2);
        if (!out) throw Error("cannot write job record " + tmp.string());
    }
    fs::rename(tmp, target);
}

} // namespace compass
