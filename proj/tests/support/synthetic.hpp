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

// Scratch copies of the bundled synthetic benchmark and a CLI runner.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "drselect/detail/text.hpp"
#include "oracles.hpp"

namespace fixture {

namespace fs = std::filesystem;

/// Copies data/synthetic into a fresh temp dir with output_dir set to `out`.
/// `edit` may rewrite the parsed config before it is saved.
template <typename Edit>
fs::path synthetic_copy(const std::string& name, Edit&& edit) {
  const auto dir = oracle::temp_dir(name);
  fs::copy(fs::path(DRSELECT_DATA_DIR) / "synthetic", dir, fs::copy_options::recursive);
  auto cfg = nlohmann::json::parse(drselect::detail::read_file((dir / "config.json").string()));
  cfg["output_dir"] = "out";
  edit(cfg);
  std::ofstream(dir / "config.json") << cfg.dump(2) << "\n";
  return dir;
}

inline fs::path synthetic_copy(const std::string& name) {
  return synthetic_copy(name, [](nlohmann::json&) {});
}

struct CliResult {
  int exit_code = -1;
  std::string output;
};

/// Runs the drselect binary with `args`, capturing stdout and stderr.
inline CliResult run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + DRSELECT_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = drselect::detail::read_file(log.string());
  return r;
}

/// Every regular file under `root`, keyed by relative path.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = drselect::detail::read_file(e.path().string());
  }
  return out;
}

}  // namespace fixture
