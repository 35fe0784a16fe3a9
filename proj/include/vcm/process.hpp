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

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <string_view>

#include "vcm/error.hpp"

namespace vcm {

struct ProcessResult {
  int exit_code = 0;
  std::string output;  // stdout and stderr, interleaved
};

/// Runs a shell command line through /bin/sh and captures its output.
inline ProcessResult run_command(const std::string& command) {
  const std::string line = "(" + command + ") 2>&1";
  FILE* pipe = ::popen(line.c_str(), "r");
  if (pipe == nullptr) fail(ErrorKind::kEnvironment, "cannot spawn shell for: " + command);
  ProcessResult result;
  std::array<char, 4096> buffer{};
  std::size_t got = 0;
  while ((got = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0) {
    result.output.append(buffer.data(), got);
  }
  const int status = ::pclose(pipe);
  if (status == -1) {
    result.exit_code = -1;
  } else if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else {
    result.exit_code = 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  }
  return result;
}

/// Quotes a string for safe inclusion in a /bin/sh command line.
inline std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'') out += "'\\''";
    else out += ch;
  }
  out += "'";
  return out;
}

/// First whitespace-delimited word of a command line.
inline std::string command_program(std::string_view command) {
  const auto begin = command.find_first_not_of(" \t");
  if (begin == std::string_view::npos) return {};
  const auto end = command.find_first_of(" \t;|&", begin);
  return std::string(command.substr(begin, end - begin));
}

/// True when `program` is a shell builtin-free executable path or is on PATH.
inline bool executable_exists(const std::string& program) {
  if (program.empty()) return false;
  if (program.find('/') != std::string::npos) {
    return ::access(program.c_str(), X_OK) == 0;
  }
  const char* path_env = std::getenv("PATH");
  std::string_view paths = path_env != nullptr ? path_env : "/usr/bin:/bin";
  while (!paths.empty()) {
    const auto sep = paths.find(':');
    const std::string dir(paths.substr(0, sep));
    if (!dir.empty()) {
      const auto candidate = std::filesystem::path(dir) / program;
      if (::access(candidate.c_str(), X_OK) == 0) return true;
    }
    if (sep == std::string_view::npos) break;
    paths.remove_prefix(sep + 1);
  }
  return false;
}

/// Replaces every `{key}` in a template.
inline std::string substitute(std::string text, std::string_view key, std::string_view value) {
  const std::string token = "{" + std::string(key) + "}";
  std::size_t pos = 0;
  while ((pos = text.find(token, pos)) != std::string::npos) {
    text.replace(pos, token.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace vcm
