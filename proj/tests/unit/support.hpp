#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dopbc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

inline std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

// Complete graph of two agents, four short horizons, grid comparator.
inline std::string minimal_config_text(const std::string& extra = "") {
  return "topology.kind = complete\n"
         "topology.n = 2\n"
         "mixing.scheme = lazy-metropolis\n"
         "problem.kind = coupled-quadratic\n"
         "problem.d_i = 1\n"
         "problem.m = 1\n"
         "problem.drift = 0.5\n"
         "problem.seed = 1\n"
         "algo.kind = dopbc\n"
         "algo.c = 0.5\n"
         "algo.lambda_max = auto\n"
         "horizons = 64, 128, 256, 512\n"
         "comparator.method = grid\n"
         "output.timing = false\n"
         "seed = 1\n" +
         extra;
}

inline std::string separable_config_text() {
  return "topology.kind = ring\n"
         "topology.n = 4\n"
         "mixing.scheme = lazy-metropolis\n"
         "problem.kind = separable-quadratic\n"
         "problem.d_i = 1\n"
         "problem.m = 1\n"
         "problem.drift = 0.5\n"
         "problem.seed = 3\n"
         "algo.kind = dopbc\n"
         "algo.c = 0.5\n"
         "algo.lambda_max = auto\n"
         "horizons = 256, 512, 1024, 2048, 4096\n"
         "comparator.method = analytic\n"
         "output.timing = false\n"
         "seed = 5\n";
}

}  // namespace testing_support
