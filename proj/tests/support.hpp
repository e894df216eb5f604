#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace testsupport {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("ragutil-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline fs::path toy_dir() { return RAGUTIL_TOY_DIR; }
inline fs::path fixture_dir() { return RAGUTIL_FIXTURE_DIR; }

// Copies the bundled toy dataset (without any work/ artifacts) into `dest`.
inline void copy_toy(const fs::path& dest) {
  for (const auto& entry : fs::directory_iterator(toy_dir())) {
    if (entry.is_regular_file()) fs::copy_file(entry.path(), dest / entry.path().filename());
  }
}

}  // namespace testsupport
