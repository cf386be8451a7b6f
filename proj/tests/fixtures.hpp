#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <random>
#include <vector>

#include "protoicl/net.hpp"
#include "protoicl/prototypes.hpp"
#include "protoicl/rng.hpp"

namespace protoicl::testing {

/// Glorot weights plus small random biases, so no pre-activation sits at 0.
inline Network random_net(std::uint64_t seed, Eigen::Index in = 6, Eigen::Index hidden = 5, Eigen::Index code = 4) {
  Network net = Network::symmetric(in, {hidden}, code);
  auto rng = make_rng(seed, RngStream::Init);
  net.init_glorot(rng);
  std::normal_distribution<double> g(0.0, 0.1);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = g(rng);
  }
  return net;
}

inline Matrix random_batch(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols, double stddev = 1.0) {
  auto rng = make_rng(seed, RngStream::Check);
  std::normal_distribution<double> g(0.0, stddev);
  Matrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

inline std::vector<ClassId> cyclic_labels(std::size_t n, int classes) {
  std::vector<ClassId> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<ClassId>(i % static_cast<std::size_t>(classes));
  return y;
}

/// Fresh, empty directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("protoicl_" + name + "_" + std::to_string(std::random_device{}()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace protoicl::testing
