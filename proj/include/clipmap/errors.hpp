/* Copyright 2026 The Clipmap Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef CLIPMAP_ERRORS_HPP
#define CLIPMAP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace clipmap {

/// Broad failure class. Maps one-to-one onto CLI exit codes and HTTP statuses.
enum class ErrorKind {
  validation,  // bad parameters, malformed input, precondition violations
  not_found,
  io,
  numeric,     // optimization diverged or produced non-finite values
  conflict,    // e.g. a background job is already running
  budget_exhausted,
  cancelled,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::io: return "io";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::budget_exhausted: return "budget_exhausted";
    case ErrorKind::cancelled: return "cancelled";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

/// Input file does not match its declared layout (sizes, JSON schema).
struct FormatError : Error {
  explicit FormatError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

/// A new feature round is incompatible with the current dataset.
struct RefreshError : Error {
  explicit RefreshError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

struct NotFoundError : Error {
  explicit NotFoundError(const std::string& what)
      : Error(ErrorKind::not_found, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::numeric, what) {}
};

struct ConflictError : Error {
  explicit ConflictError(const std::string& what)
      : Error(ErrorKind::conflict, what) {}
};

struct CancelledError : Error {
  CancelledError() : Error(ErrorKind::cancelled, "operation cancelled") {}
};

}  // namespace clipmap

#endif  // CLIPMAP_ERRORS_HPP
