#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace compass {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Ingestion / schema
class DatasetEmpty : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class ParseError : public Error { using Error::Error; };
class UnknownCategory : public Error { using Error::Error; };
class UnknownCode : public Error { using Error::Error; };

// Models
class ShapeError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class TrainingFailed : public Error { using Error::Error; };

// Queries, trust, evaluation
class QueryError : public Error { using Error::Error; };
class IndexUnavailable : public Error { using Error::Error; };
class UnknownModel : public Error { using Error::Error; };
class MetricUndefined : public Error { using Error::Error; };

/// Non-fatal diagnostics (excluded model families, degenerate folds, clamped k).
/// The default sink writes to stderr; tests swap it to capture messages.
/// An empty function restores the default.
void warn(std::string_view message);
void set_warning_sink(std::function<void(std::string_view)> sink);

} // namespace compass
