// Copyright 2026 The vcm-postproc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vcm {

enum class ErrorKind {
  kConfig,
  kShape,
  kCapability,
  kUsage,
  kDimension,
  kFormat,
  kParse,
  kValidation,
  kIngestion,
  kEnvironment,
  kCodec,
  kTemplate,
  kAlignment,
  kInternal,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kCapability: return "capability error";
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kIngestion: return "ingestion error";
    case ErrorKind::kEnvironment: return "environment error";
    case ErrorKind::kCodec: return "codec error";
    case ErrorKind::kTemplate: return "template error";
    case ErrorKind::kAlignment: return "alignment error";
    case ErrorKind::kInternal: return "internal error";
  }
  return "error";
}

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace vcm
