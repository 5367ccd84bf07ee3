#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "nes/corpus.hpp"

namespace testing_support {

// Directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("nes-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline nes::Corpus conll(const std::string& text) {
  std::istringstream in(text);
  return nes::read_conll(in, "inline");
}

// Owns a bool buffer so std::span<const bool> can point at it.
class Bits {
 public:
  explicit Bits(const std::vector<bool>& v) : n_(v.size()), data_(new bool[v.size() ? v.size() : 1]) {
    for (std::size_t i = 0; i < n_; ++i) data_[i] = v[i];
  }
  std::span<const bool> span() const { return {data_.get(), n_}; }

 private:
  std::size_t n_;
  std::unique_ptr<bool[]> data_;
};

}  // namespace testing_support
