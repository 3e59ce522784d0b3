#include "caa/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace caa::container {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'A', 'T'};

template <typename U>
void put_le(std::ostream& out, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  }
  out.write(bytes, sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (!in) throw FormatError("truncated tensor container");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  if (t.dtype() == DType::Float32) {
    for (float v : t.data<float>()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  } else {
    for (double v : t.data<double>()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw FormatError("failed to write tensor container");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic: not a CAAT container");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const auto tag = get_le<std::uint8_t>(in);
  if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag));
  const auto rank = get_le<std::uint32_t>(in);
  Shape shape(rank);
  for (auto& d : shape) {
    d = get_le<std::uint32_t>(in);
    if (d == 0) throw FormatError("container has a zero-sized dimension");
  }
  const std::size_t n = shape_numel(shape);
  if (tag == 0) {
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
    return Tensor::from_vector(std::move(shape), std::move(values));
  }
  std::vector<double> values(n);
  for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
  return Tensor::from_vector(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensor(in);
}

const Tensor& Bundle::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("bundle has no tensor named '" + name + "'");
}

bool Bundle::has(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

const std::string& Bundle::meta_value(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw FormatError("bundle manifest has no '" + key + "' entry");
  return it->second;
}

void save_bundle(const std::filesystem::path& dir, const Bundle& bundle) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw FormatError("cannot write manifest in " + dir.string());
  manifest << "# caa-manifest v1\n";
  for (const auto& [k, v] : bundle.meta) manifest << "meta " << k << ' ' << v << '\n';
  for (const auto& [name, t] : bundle.tensors) {
    manifest << "tensor " << name << '\n';
    save_tensor(dir / (name + ".caat"), t);
  }
}

Bundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError("no manifest.txt in " + dir.string());
  Bundle bundle;
  std::string line;
  std::getline(manifest, line);
  if (line != "# caa-manifest v1") throw FormatError("unrecognised manifest header in " + dir.string());
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string kind, key;
    fields >> kind >> key;
    if (kind == "meta") {
      std::string value;
      std::getline(fields >> std::ws, value);
      bundle.meta[key] = value;
    } else if (kind == "tensor") {
      bundle.add(key, load_tensor(dir / (key + ".caat")));
    } else {
      throw FormatError("bad manifest line: " + line);
    }
  }
  return bundle;
}

}  // namespace caa::container
