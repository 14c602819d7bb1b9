#pragma once

#include <stdexcept>
#include <string>

namespace patch_actor {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A caller passed a value that violates an operation's preconditions.
struct InvalidArgument : Error {
    using Error::Error;
};

/// A grounding record whose bbox covers no patch; it cannot supervise.
struct EmptySupervision : Error {
    using Error::Error;
};

/// Procedural screen generation could not satisfy its constraints.
struct GenerationFailed : Error {
    using Error::Error;
};

/// Verifier training data contains only one label class.
struct DegenerateLabels : Error {
    using Error::Error;
};

/// A versioned file carries a schema this build does not read.
struct UnsupportedVersion : Error {
    using Error::Error;
};

/// A file parsed but does not match the expected schema, or failed to parse.
struct SchemaError : Error {
    using Error::Error;
};

/// A non-finite value surfaced where the math requires finite inputs.
struct NumericalError : Error {
    using Error::Error;
};

/// A referenced file is missing or unreadable.
struct FileError : Error {
    using Error::Error;
};

} // namespace patch_actor
