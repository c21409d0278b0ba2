// Copyright 2026 the drselect authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace drselect {

/// Failure category. Maps one-to-one onto the CLI exit codes.
enum class ErrorKind {
  config,   // exit 2
  data,     // exit 3
  numeric,  // exit 4
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Input violates a declared type invariant or a file is malformed.
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }

inline Error config_error(const std::string& what) { return Error(ErrorKind::config, what); }

inline Error numeric_error(const std::string& what) { return Error(ErrorKind::numeric, what); }

/// Prefixes an error message with context while keeping its kind.
inline Error with_context(const Error& e, const std::string& context) {
  return Error(e.kind(), context + ": " + e.what());
}

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return 2;
    case ErrorKind::data:
      return 3;
    case ErrorKind::numeric:
      return 4;
  }
  return 1;
}

}  // namespace drselect
