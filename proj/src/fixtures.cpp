#include "caa/fixtures.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace caa::fixtures {

namespace {

std::string activation_string(const Activation& a) {
  if (a.kind == Activation::Kind::Relu) return "relu";
  std::ostringstream s;
  s.precision(17);
  s << "leaky_relu:" << a.slope;
  return s.str();
}

Activation parse_activation(const std::string& text) {
  if (text == "relu") return Activation::relu();
  const std::string prefix = "leaky_relu:";
  if (text.rfind(prefix, 0) == 0) return Activation::leaky(std::stod(text.substr(prefix.size())));
  throw container::FormatError("unknown activation '" + text + "'");
}

std::size_t meta_size(const container::Bundle& b, const std::string& key) {
  const std::string& v = b.meta_value(key);
  std::size_t pos = 0;
  const unsigned long long n = std::stoull(v, &pos);
  if (pos != v.size()) throw container::FormatError("meta " + key + " is not an integer: " + v);
  return static_cast<std::size_t>(n);
}

void add_gate(container::Bundle& b, const std::string& name, const GateParams& g) {
  for (std::size_t k = 0; k < g.layers.size(); ++k) {
    b.add(name + ".w" + std::to_string(k), g.layers[k]);
  }
}

GateParams read_gate(const container::Bundle& b, const std::string& name, GateStage stage,
                     const GateConfig& cfg) {
  GateParams g;
  g.stage = stage;
  g.layer_count = cfg.layer_count;
  g.hidden_width = cfg.hidden_width;
  g.activation = cfg.activation;
  for (std::size_t k = 0; k <= cfg.layer_count; ++k) {
    g.layers.push_back(b.get(name + ".w" + std::to_string(k)));
  }
  g.validate();
  return g;
}

}  // namespace

Model make_model(const AttnDims& dims, const GateConfig& gates, std::uint64_t seed, DType dtype) {
  const Rng rng(seed);
  Model m;
  m.x = rng.uniform("x", {dims.C, dims.H, dims.W}, -1.0, 1.0, dtype);
  m.attn = AttnParams::random(dims, rng, dtype, "attn");
  m.column = GateParams::random(GateStage::Column, dims.Cv, gates.layer_count, gates.hidden_width,
                                gates.activation, rng, dtype, "column");
  m.row = GateParams::random(GateStage::Row, dims.Cv, gates.layer_count, gates.hidden_width,
                             gates.activation, rng, dtype, "row");
  m.self = GateParams::random(GateStage::Self, dims.Cv, gates.layer_count, gates.hidden_width,
                              gates.activation, rng, dtype, "self");
  return m;
}

std::string fixture_name(const FixtureSize& size) {
  return "caa_h" + std::to_string(size.H) + "_w" + std::to_string(size.W) + "_c" +
         std::to_string(size.C);
}

container::Bundle make_fixture(const FixtureSize& size, const FixtureConfig& config,
                               const oracle::OracleCaps& caps) {
  const AttnDims dims = AttnDims::square(size.H, size.W, size.C);
  const Model m = make_model(dims, config.gates, config.seed);

  container::Bundle b;
  b.meta["format"] = "caa-fixture";
  b.meta["seed"] = std::to_string(config.seed);
  b.meta["H"] = std::to_string(dims.H);
  b.meta["W"] = std::to_string(dims.W);
  b.meta["C"] = std::to_string(dims.C);
  b.meta["Cq"] = std::to_string(dims.Cq);
  b.meta["Cv"] = std::to_string(dims.Cv);
  b.meta["layer_count"] = std::to_string(config.gates.layer_count);
  b.meta["hidden_width"] = std::to_string(config.gates.hidden_width);
  b.meta["activation"] = activation_string(config.gates.activation);
  b.meta["dtype"] = "float64";

  b.add("x", m.x);
  b.add("attn.theta", m.attn.theta);
  b.add("attn.phi", m.attn.phi);
  b.add("attn.g", m.attn.g);
  add_gate(b, "column", m.column);
  add_gate(b, "row", m.row);
  b.add("expected.caa", oracle::caa(m.x, m.attn, m.column, m.row, caps));
  b.add("expected.axial", oracle::axial_attention(m.x, m.attn));
  b.add("expected.self", oracle::self_attention(m.x, m.attn, caps));
  return b;
}

Model model_from_bundle(const container::Bundle& b) {
  if (!b.meta.count("format") || b.meta_value("format") != "caa-fixture") {
    throw container::FormatError("bundle is not a caa fixture");
  }
  AttnDims dims{meta_size(b, "H"), meta_size(b, "W"), meta_size(b, "C"), meta_size(b, "Cq"),
                meta_size(b, "Cv")};
  GateConfig cfg{meta_size(b, "layer_count"), meta_size(b, "hidden_width"),
                 parse_activation(b.meta_value("activation"))};
  Model m;
  m.x = b.get("x");
  m.attn.theta = b.get("attn.theta");
  m.attn.phi = b.get("attn.phi");
  m.attn.g = b.get("attn.g");
  m.attn.dims = dims;
  m.attn.validate();
  m.attn.check_input(m.x);
  m.column = read_gate(b, "column", GateStage::Column, cfg);
  m.row = read_gate(b, "row", GateStage::Row, cfg);
  return m;
}

std::vector<std::string> write_fixtures(const std::filesystem::path& dir,
                                        const FixtureConfig& config,
                                        const oracle::OracleCaps& caps) {
  // Build everything first so a refused size leaves no partial output.
  std::vector<std::pair<std::string, container::Bundle>> bundles;
  for (const auto& size : config.sizes) {
    bundles.emplace_back(fixture_name(size), make_fixture(size, config, caps));
  }
  std::filesystem::create_directories(dir);
  std::vector<std::string> names;
  for (const auto& [name, bundle] : bundles) {
    container::save_bundle(dir / name, bundle);
    names.push_back(name);
  }
  std::ofstream index(dir / "index.txt", std::ios::binary | std::ios::trunc);
  if (!index) throw std::runtime_error("cannot write " + (dir / "index.txt").string());
  index << "# caa-fixtures v1\n";
  for (const auto& name : names) index << name << '\n';
  if (!index.flush()) throw std::runtime_error("write failed: " + (dir / "index.txt").string());
  return names;
}

std::vector<ReplayResult> replay_fixtures(const std::filesystem::path& dir,
                                          const oracle::OracleCaps& caps) {
  std::ifstream index(dir / "index.txt");
  if (!index) throw std::runtime_error("cannot read " + (dir / "index.txt").string());
  std::vector<ReplayResult> out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty() || line[0] == '#') continue;
    const container::Bundle b = container::load_bundle(dir / line);
    const Model m = model_from_bundle(b);
    const Tensor& caa_ref = b.get("expected.caa");
    const Tensor& axial_ref = b.get("expected.axial");
    const Tensor& self_ref = b.get("expected.self");

    ReplayResult r;
    r.name = line;
    r.oracle_bitwise = bitwise_equal(oracle::caa(m.x, m.attn, m.column, m.row, caps), caa_ref) &&
                       bitwise_equal(oracle::axial_attention(m.x, m.attn), axial_ref) &&
                       bitwise_equal(oracle::self_attention(m.x, m.attn, caps), self_ref);
    r.efficient_error = std::max({max_relative_error(caa_forward(m.x, m.attn, m.column, m.row), caa_ref),
                                  max_relative_error(axial_attention(m.x, m.attn), axial_ref),
                                  max_relative_error(self_attention(m.x, m.attn), self_ref)});
    out.push_back(r);
  }
  if (out.empty()) throw std::runtime_error("no fixtures listed in " + (dir / "index.txt").string());
  return out;
}

}  // namespace caa::fixtures
