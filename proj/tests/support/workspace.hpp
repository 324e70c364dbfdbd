#pragma once

// A private copy of the bundled fixture plus an in-process CLI driver.

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "recat/cli.hpp"
#include "support/scratch.hpp"

namespace recat_test {

inline std::filesystem::path fixture_dir() {
  if (const char* env = std::getenv("RECAT_FIXTURE_DIR"); env && *env) return env;
  return std::filesystem::path(RECAT_SOURCE_DIR) / "data" / "fixture";
}

struct CliResult {
  int status = 0;
  std::string err;
};

class Workspace {
 public:
  Workspace() {
    std::filesystem::copy(fixture_dir(), scratch_.path() / "in", std::filesystem::copy_options::recursive);
  }

  const std::filesystem::path& root() const { return scratch_.path(); }
  std::filesystem::path input(const std::string& name) const { return root() / "in" / name; }
  std::filesystem::path config() const { return input("recat.conf"); }
  std::filesystem::path run_dir(const std::string& name = "run") const { return root() / name; }

  /// Runs `recat --config <fixture conf> --run-dir <run> args...`.
  CliResult run(std::vector<std::string> args, const std::string& run = "run") const {
    std::vector<std::string> full{"recat", "--config", config().string(), "--run-dir", run_dir(run).string()};
    full.insert(full.end(), args.begin(), args.end());
    return raw(full);
  }

  static CliResult raw(const std::vector<std::string>& argv) {
    std::vector<const char*> ptrs;
    for (const auto& a : argv) ptrs.push_back(a.c_str());
    std::ostringstream err;
    CliResult r;
    r.status = recat::cli::run(static_cast<int>(ptrs.size()), ptrs.data(), err);
    r.err = err.str();
    return r;
  }

 private:
  Scratch scratch_;
};

}  // namespace recat_test
