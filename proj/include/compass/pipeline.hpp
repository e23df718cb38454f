#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "compass/data.hpp"
#include "compass/generator.hpp"
#include "compass/surrogate.hpp"
#include "compass/trust.hpp"

namespace compass {

struct Timings {
    double preprocess = 0.0; // seconds
    double train = 0.0;
    double generate = 0.0;
    double assess = 0.0;
};

struct TrainOptions {
    std::vector<Family> families = default_families();
    SurrogateConfig surrogate;
    TrustConfig trust;
};

/// Dataset, surrogate and trust index for one dataset; all immutable.
struct Session {
    std::shared_ptr<const DatasetHandle> handle;
    std::shared_ptr<const SurrogateBundle> bundle;
    std::shared_ptr<const TrustIndex> index;
    Timings timings;
};

/// Builds the trust index over an existing bundle.
Session open_session(std::shared_ptr<const DatasetHandle> handle, std::shared_ptr<const SurrogateBundle> bundle,
                     const TrustConfig& trust = {});

/// Ingests, trains (seeded by the ingest seed) and indexes.
Session build_session(std::string_view csv_text, const IngestOptions& ingest_options, const TrainOptions& train = {});

struct QueryOutcome {
    CandidateSet result;
    Timings timings;
};

QueryOutcome run_query(const Query& query, const Session& session);

/// Throws FormatError when the bundle's feature order or targets differ from the handle's.
void check_bundle_matches(const SurrogateBundle& bundle, const DatasetHandle& handle);

} // namespace compass
