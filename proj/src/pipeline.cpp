#include "compass/pipeline.hpp"

#include <chrono>

#include "compass/error.hpp"

namespace compass {

namespace {

template <class F>
double timed(F&& f) {
    const auto start = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

Session open_session(std::shared_ptr<const DatasetHandle> handle, std::shared_ptr<const SurrogateBundle> bundle,
                     const TrustConfig& trust) {
    check_bundle_matches(*bundle, *handle);
    Session s;
    s.handle = std::move(handle);
    s.bundle = std::move(bundle);
    s.timings.assess = timed([&] { s.index = std::make_shared<const TrustIndex>(*s.handle, *s.bundle, trust); });
    return s;
}

Session build_session(std::string_view csv_text, const IngestOptions& ingest_options, const TrainOptions& train) {
    std::shared_ptr<const DatasetHandle> handle;
    std::shared_ptr<const SurrogateBundle> bundle;
    const double t_pre = timed([&] { handle = std::make_shared<const DatasetHandle>(ingest(csv_text, ingest_options)); });
    const double t_train = timed([&] {
        bundle = std::make_shared<const SurrogateBundle>(
            train_select(*handle, train.families, handle->seed(), train.surrogate));
    });
    Session s = open_session(handle, bundle, train.trust);
    s.timings.preprocess = t_pre;
    s.timings.train = t_train;
    return s;
}

QueryOutcome run_query(const Query& query, const Session& session) {
    QueryOutcome out;
    out.timings.generate = timed([&] { out.result = generate(query, *session.handle, *session.bundle); });
    out.timings.assess = timed([&] { attach_trust(out.result, query, *session.index, *session.bundle); });
    return out;
}

void check_bundle_matches(const SurrogateBundle& bundle, const DatasetHandle& handle) {
    const auto& schema = handle.schema();
    if (bundle.primary.feature_order() != schema.feature_names())
        throw FormatError("surrogate feature order does not match the dataset schema");
    std::vector<std::string> targets;
    for (auto c : schema.target_columns()) targets.push_back(schema.column(c).name);
    if (bundle.primary.target_names() != targets)
        throw FormatError("surrogate targets do not match the dataset schema");
}

} // namespace compass
