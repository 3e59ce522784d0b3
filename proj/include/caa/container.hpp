#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "caa/tensor.hpp"

// Tensor container file:
//   bytes 0..3  magic "CAAT"
//   u32 LE      format version (kContainerVersion)
//   u8          dtype tag (0 = float32, 1 = float64)
//   u32 LE      rank
//   u32 LE      dims[rank]
//   payload     row-major little-endian IEEE-754 values
namespace caa::container {

inline constexpr std::uint32_t kContainerVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Named tensors stored as one container file per tensor plus a sidecar
/// `manifest.txt` listing metadata and the tensor names in order:
///
///   # caa-manifest v1
///   meta <key> <value>
///   tensor <name>
struct Bundle {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;
};

void save_bundle(const std::filesystem::path& dir, const Bundle& bundle);
Bundle load_bundle(const std::filesystem::path& dir);

}  // namespace caa::container
