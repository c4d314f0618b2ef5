#pragma once

#include <stdexcept>

namespace nmt {

// Error taxonomy used across the library. Every failure mode maps to one of
// these so callers (and tests) can react to the category, not message text.

struct DimensionError : std::runtime_error { using std::runtime_error::runtime_error; };
struct IndexError : std::runtime_error { using std::runtime_error::runtime_error; };
struct LengthError : std::runtime_error { using std::runtime_error::runtime_error; };
struct StateError : std::runtime_error { using std::runtime_error::runtime_error; };
struct NumericError : std::runtime_error { using std::runtime_error::runtime_error; };
struct DataError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };
struct FormatError : std::runtime_error { using std::runtime_error::runtime_error; };
struct CompatibilityError : std::runtime_error { using std::runtime_error::runtime_error; };
struct LookupError : std::runtime_error { using std::runtime_error::runtime_error; };

}  // namespace nmt
