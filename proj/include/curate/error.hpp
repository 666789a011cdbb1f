#pragma once

#include <stdexcept>
#include <string>

namespace curate {

/// Fatal error raised by toolkit operations (bad input files, broken
/// preconditions, ambiguous joins). Per-record problems are reported as
/// diagnostics instead.
class CurateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A statistic that is mathematically undefined for the given input
/// (e.g. correlation against a constant vector).
class UndefinedResult : public CurateError {
 public:
  using CurateError::CurateError;
};

}  // namespace curate
