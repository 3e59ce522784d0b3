#include "caa/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "caa/autodiff.hpp"
#include "caa/fixtures.hpp"
#include "caa/groupexec.hpp"
#include "caa/ops.hpp"

namespace caa::verify {

namespace {

using fixtures::GateConfig;
using fixtures::Model;

std::string activation_label(const Activation& a) {
  return a.kind == Activation::Kind::Relu ? "relu" : "leaky_relu";
}

auto size_key(const CaseResult& c) {
  return std::make_tuple(c.H * c.W * c.C * c.Cv, c.H, c.W, c.C, c.Cv, c.depth, c.seed);
}

class Suite {
 public:
  Suite(std::string name, double tolerance) {
    result_.name = std::move(name);
    result_.tolerance = tolerance;
  }

  void record(CaseResult c) {
    c.suite = result_.name;
    c.tolerance = result_.tolerance;
    ++result_.cases;
    if (!(c.error <= result_.worst_error)) result_.worst_error = c.error;
    if (!c.passed) {
      ++result_.failures;
      if (!result_.first_failure || size_key(c) < size_key(*result_.first_failure)) {
        result_.first_failure = std::move(c);
      }
    }
  }

  /// Passes iff error <= tolerance (NaN fails).
  void check(CaseResult c, double error) {
    c.error = error;
    c.passed = error <= result_.tolerance;
    record(std::move(c));
  }

  void check_bitwise(CaseResult c, const Tensor& a, const Tensor& b) {
    c.passed = bitwise_equal(a, b);
    c.error = c.passed ? 0.0 : max_abs_difference(a, b);
    if (!c.passed) c.detail = "outputs differ bitwise";
    record(std::move(c));
  }

  SuiteResult take() { return std::move(result_); }

 private:
  SuiteResult result_;
};

GateParams mutated(const GateParams& g) {
  GateParams out = g;
  Tensor& w = out.layers.back();
  std::vector<double> v = w.to_doubles();
  v[0] += 0.5;
  w = Tensor::from_values(w.shape(), v, w.dtype());
  return out;
}

// out[..., k, ...] = t[..., perm[k], ...]
Tensor permute_axis(const Tensor& t, std::size_t axis, const std::vector<std::size_t>& perm) {
  const Shape& s = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t n = s[axis];
  const std::vector<double> v = t.to_doubles();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < inner; ++i)
        out[(o * n + k) * inner + i] = v[(o * n + perm[k]) * inner + i];
  return Tensor::from_values(s, out, t.dtype());
}

// Largest |sum - 1| over the slices of `t` along `axis`, and entry extremes.
struct MapCheck {
  double sum_error = 0;
  double min_entry = 1;
  double max_entry = 0;
};

MapCheck check_map(const Tensor& t, std::size_t axis) {
  const Shape& s = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  const std::size_t n = s[axis];
  const std::vector<double> v = t.to_doubles();
  MapCheck r;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      double total = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = v[(o * n + k) * inner + i];
        total += e;
        r.min_entry = std::min(r.min_entry, e);
        r.max_entry = std::max(r.max_entry, e);
      }
      r.sum_error = std::max(r.sum_error, std::abs(total - 1.0));
    }
  return r;
}

bool strictly_unit(const Tensor& t) {
  for (double v : t.to_doubles()) {
    if (!(v > 0.0 && v < 1.0)) return false;
  }
  return true;
}

void grid_suites(const VerifyOptions& o, const Tolerances& tol, std::vector<SuiteResult>& out) {
  Suite oracle_suite("oracle", tol.oracle);
  Suite norm_suite("normalization", tol.normalization);
  Suite range_suite("gate-range", 0.0);
  Suite bypass_suite("bypass", 0.0);
  Suite equiv_suite("equivariance", tol.equivariance);
  const oracle::OracleCaps caps = oracle::OracleCaps::from_env();
  const Activation activations[] = {Activation::relu(), Activation::leaky()};

  for (std::size_t H : o.heights)
    for (std::size_t W : o.widths)
      for (std::size_t C : o.channels)
        for (std::size_t Cv : o.value_channels)
          for (std::size_t s = 0; s < o.seed_count; ++s) {
            const std::uint64_t seed = o.seed + s;
            const AttnDims dims{H, W, C, C, Cv};
            bool first_depth = true;
            for (std::size_t depth : o.depths)
              for (const Activation& act : activations) {
                const Model m = fixtures::make_model(dims, GateConfig{depth, o.hidden_width, act},
                                                     seed, o.dtype);
                CaseResult base;
                base.H = H, base.W = W, base.C = C, base.Cv = Cv;
                base.depth = depth;
                base.activation = activation_label(act);
                base.seed = seed;
                auto with_kernel = [&](const char* kernel) {
                  CaseResult c = base;
                  c.kernel = kernel;
                  return c;
                };

                const GateParams column = o.mutate ? mutated(m.column) : m.column;
                const Tensor y = caa_forward(m.x, m.attn, column, m.row);
                oracle_suite.check(with_kernel("caa"),
                                   max_relative_error(y, oracle::caa(m.x, m.attn, m.column, m.row, caps)));
                oracle_suite.check(
                    with_kernel("channelized_self"),
                    max_relative_error(channelized_self_attention(m.x, m.attn, m.self),
                                       oracle::channelized_self_attention(m.x, m.attn, m.self, caps)));

                // Gate fields computed by the efficient path.
                const AttentionMaps maps = attention_maps(m.x, m.attn);
                const Breakdown parts = breakdown(m.x, maps, m.attn);
                const GateField gc = column_gate(parts, m.x, m.column);
                const Tensor beta = detail::channelized_beta(maps.a_col, maps.a_row,
                                                             project(m.x, m.attn.g), m.column, H, W);
                const GateField gr = row_gate(beta, m.row);
                {
                  CaseResult c = with_kernel("column_gate");
                  c.passed = strictly_unit(gc.values);
                  range_suite.record(c);
                  c = with_kernel("row_gate");
                  c.passed = strictly_unit(gr.values);
                  range_suite.record(c);
                }

                // Row and column permutations.
                {
                  const Rng rng(seed);
                  const auto pr = rng.permutation("perm.rows", H);
                  const auto pc = rng.permutation("perm.cols", W);
                  const Tensor xr = permute_axis(m.x, 1, pr), xc = permute_axis(m.x, 2, pc);
                  equiv_suite.check(with_kernel("caa/rows"),
                                    max_relative_error(caa_forward(xr, m.attn, column, m.row),
                                                       permute_axis(y, 1, pr)));
                  equiv_suite.check(with_kernel("caa/cols"),
                                    max_relative_error(caa_forward(xc, m.attn, column, m.row),
                                                       permute_axis(y, 2, pc)));
                }

                if (!first_depth) continue;
                first_depth = false;
                // Gate-independent checks, once per (dims, seed).
                const Tensor axial = axial_attention(m.x, m.attn);
                const Tensor self = self_attention(m.x, m.attn);
                oracle_suite.check(with_kernel("axial"),
                                   max_relative_error(axial, oracle::axial_attention(m.x, m.attn)));
                oracle_suite.check(with_kernel("self"),
                                   max_relative_error(self, oracle::self_attention(m.x, m.attn, caps)));

                const MapCheck col = check_map(maps.a_col, 1), row = check_map(maps.a_row, 2);
                {
                  CaseResult c = with_kernel("a_col");
                  c.detail = "slice sum or entry range";
                  c.error = col.sum_error;
                  c.passed = col.sum_error <= tol.normalization && col.min_entry > 0 &&
                             col.max_entry <= 1;
                  norm_suite.record(c);
                  c = with_kernel("a_row");
                  c.error = row.sum_error;
                  c.passed = row.sum_error <= tol.normalization && row.min_entry > 0 &&
                             row.max_entry <= 1;
                  norm_suite.record(c);
                  norm_suite.check(with_kernel("beta_recompose"),
                                   max_relative_error(detail::to_channel_first(reduce(parts.beta, {2})),
                                                      axial));
                }

                bypass_suite.check_bitwise(
                    with_kernel("caa"),
                    caa_forward(m.x, m.attn, GateParams::bypassed(GateStage::Column),
                                GateParams::bypassed(GateStage::Row)),
                    axial);
                bypass_suite.check_bitwise(
                    with_kernel("channelized_self"),
                    channelized_self_attention(m.x, m.attn, GateParams::bypassed(GateStage::Self)),
                    self);

                const Rng rng(seed);
                const auto pr = rng.permutation("perm.rows", H);
                const auto pc = rng.permutation("perm.cols", W);
                equiv_suite.check(with_kernel("axial/rows"),
                                  max_relative_error(axial_attention(permute_axis(m.x, 1, pr), m.attn),
                                                     permute_axis(axial, 1, pr)));
                equiv_suite.check(with_kernel("axial/cols"),
                                  max_relative_error(axial_attention(permute_axis(m.x, 2, pc), m.attn),
                                                     permute_axis(axial, 2, pc)));
              }
          }
  out.push_back(oracle_suite.take());
  out.push_back(norm_suite.take());
  out.push_back(range_suite.take());
  out.push_back(bypass_suite.take());
  out.push_back(equiv_suite.take());
}

SuiteResult group_suite(const VerifyOptions& o) {
  Suite suite("group-invariance", 0.0);
  std::set<std::size_t> heights(o.group_heights.begin(), o.group_heights.end());
  heights.insert(o.heights.begin(), o.heights.end());
  const std::size_t W = 4, C = 2;
  for (std::size_t H : heights) {
    const AttnDims dims = AttnDims::square(H, W, C);
    const Model m = fixtures::make_model(dims, GateConfig{3, o.hidden_width, Activation::leaky()},
                                         o.seed, o.dtype);
    const Tensor x = Rng(o.seed).uniform("batch", {2, C, H, W}, -1.0, 1.0, o.dtype);
    const Tensor ref = grouped_caa(x, m.attn, m.column, m.row, plan(H, 1));
    std::set<std::size_t> groups{2, 3, 4, 7, H};
    for (std::size_t G : groups) {
      if (G > H) continue;
      CaseResult c;
      c.kernel = "G=" + std::to_string(G);
      c.H = H, c.W = W, c.C = C, c.Cv = C, c.depth = 3, c.seed = o.seed;
      c.activation = "leaky_relu";
      suite.check_bitwise(c, grouped_caa(x, m.attn, m.column, m.row, plan(H, G)), ref);
    }
  }
  return suite.take();
}

SuiteResult gradient_suite(const VerifyOptions& o, const Tolerances& tol) {
  Suite suite("gradient", tol.gradient);
  const AttnDims dims = AttnDims::square(4, 4, 3);
  Model m = fixtures::make_model(dims, GateConfig{3, o.hidden_width, Activation::leaky()}, o.seed,
                                 DType::Float64);

  // Every differentiable slot of the model, addressed by name.
  std::vector<std::pair<std::string, std::function<Tensor&(Model&)>>> slots{
      {"theta", [](Model& k) -> Tensor& { return k.attn.theta; }},
      {"phi", [](Model& k) -> Tensor& { return k.attn.phi; }},
      {"g", [](Model& k) -> Tensor& { return k.attn.g; }}};
  for (std::size_t l = 0; l < m.column.layers.size(); ++l) {
    slots.emplace_back("column.w" + std::to_string(l),
                       [l](Model& k) -> Tensor& { return k.column.layers[l]; });
    slots.emplace_back("row.w" + std::to_string(l),
                       [l](Model& k) -> Tensor& { return k.row.layers[l]; });
  }

  Tape tape;
  Model watched = m;
  for (auto& [name, get] : slots) get(watched) = tape.watch(get(m));
  const Tensor total = sum_all(caa_forward(watched.x, watched.attn, watched.column, watched.row));
  const Gradients grads = backward(tape, total);

  for (auto& [name, get] : slots) {
    auto f = [&, get = get](const Tensor& value) {
      Model probe = m;
      get(probe) = value;
      return sum_all(caa_forward(probe.x, probe.attn, probe.column, probe.row)).item();
    };
    CaseResult c;
    c.kernel = name;
    c.H = 4, c.W = 4, c.C = 3, c.Cv = 3, c.depth = 3, c.seed = o.seed;
    c.activation = "leaky_relu";
    suite.check(c, max_relative_error(grads.of(get(watched)), finite_diff(f, get(m), 1e-5)));
  }
  return suite.take();
}

SuiteResult fixture_suite(const VerifyOptions& o, const Tolerances& tol) {
  Suite suite("fixtures", tol.fixture_efficient);
  if (o.fixtures.empty()) {
    SuiteResult r = suite.take();
    r.skipped = true;
    return r;
  }
  for (const auto& r : fixtures::replay_fixtures(o.fixtures, oracle::OracleCaps::from_env())) {
    CaseResult c;
    c.kernel = r.name;
    c.error = r.efficient_error;
    c.passed = r.oracle_bitwise && r.efficient_error <= tol.fixture_efficient;
    if (!r.oracle_bitwise) c.detail = "oracle replay differs from stored output";
    suite.record(c);
  }
  return suite.take();
}

std::string format_error(double e) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << e;
  return s.str();
}

}  // namespace

Tolerances Tolerances::for_dtype(DType dtype) {
  Tolerances t{};
  if (dtype == DType::Float64) {
    t.oracle = 1e-10;
    t.equivariance = 1e-12;
    t.fixture_efficient = 1e-10;
  } else {
    t.oracle = 1e-4;
    t.equivariance = 1e-4;
    t.fixture_efficient = 1e-10;  // fixtures are float64
    t.normalization = 1e-5;
  }
  return t;
}

bool Report::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed(); });
}

Report run(const VerifyOptions& options) {
  if (options.seed_count == 0) throw std::invalid_argument("verify: seed_count must be positive");
  const Tolerances tol = Tolerances::for_dtype(options.dtype);
  Report report;
  grid_suites(options, tol, report.suites);
  report.suites.push_back(group_suite(options));
  report.suites.push_back(gradient_suite(options, tol));
  report.suites.push_back(fixture_suite(options, tol));
  return report;
}

void print(std::ostream& out, const Report& report) {
  out << std::left << std::setw(18) << "suite" << std::right << std::setw(8) << "cases"
      << std::setw(8) << "failed" << std::setw(12) << "worst" << std::setw(12) << "tolerance"
      << "  status\n";
  for (const auto& s : report.suites) {
    out << std::left << std::setw(18) << s.name << std::right << std::setw(8) << s.cases
        << std::setw(8) << s.failures << std::setw(12) << format_error(s.worst_error)
        << std::setw(12) << (s.tolerance == 0.0 ? std::string("exact") : format_error(s.tolerance))
        << "  " << (s.skipped ? "SKIP" : s.passed() ? "PASS" : "FAIL") << '\n';
  }
  for (const auto& s : report.suites) {
    if (!s.first_failure) continue;
    const CaseResult& c = *s.first_failure;
    out << "first failure [" << s.name << "] " << c.kernel;
    if (c.H != 0) out << " H=" << c.H << " W=" << c.W << " C=" << c.C << " Cv=" << c.Cv;
    if (c.depth != 0) out << " depth=" << c.depth << " activation=" << c.activation;
    if (c.H != 0) out << " seed=" << c.seed;
    out << " error=" << format_error(c.error);
    if (!c.detail.empty()) out << " (" << c.detail << ")";
    out << '\n';
  }
  out << "verify: " << (report.passed() ? "PASS" : "FAIL") << '\n';
}

}  // namespace caa::verify
