// SPDX-License-Identifier: Apache-2.0
//
// Error types shared across the library. File-format problems map to
// distinct exception types so callers can tell corruption, truncation,
// extent and version mismatches apart.

#pragma once

#include <stdexcept>
#include <string>

namespace seistcn {

// Malformed container: bad magic, corrupted length field, trailing bytes.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File ends before the declared payload does.
class TruncationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Declared grid extents are unusable or inconsistent with the payload.
class ExtentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Recognized container, unsupported version.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value where the numeric contracts forbid one. Carries the
// training epoch / trace index when raised from the training loop.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, long epoch = -1, long trace = -1)
      : std::runtime_error(what), epoch_(epoch), trace_(trace) {}

  long epoch() const noexcept { return epoch_; }
  long trace() const noexcept { return trace_; }

 private:
  long epoch_;
  long trace_;
};

}  // namespace seistcn
