// caa: verification, benchmarking, FLOP reporting and fixture generation for
// channelized axial attention.

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

#include "caa/fixtures.hpp"
#include "caa/groupexec.hpp"
#include "caa/ops.hpp"
#include "caa/verify.hpp"

namespace {

struct Common {
  std::uint64_t seed = 42;
  std::string dtype;  // empty: float64 for verify and fixtures, float32 for bench

  caa::DType dtype_or(caa::DType fallback) const {
    return dtype.empty() ? fallback : caa::parse_dtype(dtype);
  }
};

std::vector<std::size_t> or_default(const std::vector<std::size_t>& v,
                                    std::vector<std::size_t> fallback) {
  return v.empty() ? fallback : v;
}

int cmd_verify(const Common& common, caa::verify::VerifyOptions opts) {
  opts.seed = common.seed;
  opts.dtype = common.dtype_or(caa::DType::Float64);
  const caa::verify::Report report = caa::verify::run(opts);
  caa::verify::print(std::cout, report);
  return report.passed() ? 0 : 1;
}

struct BenchArgs {
  std::vector<std::size_t> heights, widths, channels, groups;
  std::size_t repeats = 5;
  std::size_t gate_depth = 5, gate_width = 128;
  std::string out;
};

int cmd_bench(const Common& common, const BenchArgs& a) {
  const caa::DType dtype = common.dtype_or(caa::DType::Float32);
  const auto heights = or_default(a.heights, {17, 33, 49});
  const auto channels = or_default(a.channels, {16});
  const auto groups = or_default(a.groups, {1, 2, 4, 8, 16});

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open " + a.out + " for writing");
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  caa::write_bench_header(out);

  for (std::size_t H : heights) {
    for (std::size_t W : a.widths.empty() ? std::vector<std::size_t>{H} : a.widths) {
      for (std::size_t C : channels) {
        const caa::AttnDims dims = caa::AttnDims::square(H, W, C);
        std::vector<std::size_t> valid;
        for (std::size_t G : groups) {
          if (G == 0 || G > H) {
            std::cerr << "skip G=" << G << " at H=" << H << ": group count must be in [1, H]\n";
            continue;
          }
          valid.push_back(G);
        }
        if (valid.empty()) continue;
        const auto m = caa::fixtures::make_model(
            dims, {a.gate_depth, a.gate_width, caa::Activation::leaky()}, common.seed, dtype);
        const caa::Tensor x = caa::reshape(m.x, {1, C, H, W});
        for (const auto& s : caa::measure(x, m.attn, m.column, m.row, valid, a.repeats)) {
          caa::write_bench_row(out, s, dims);
        }
        out.flush();
      }
    }
  }
  if (!out) throw std::runtime_error("write failed");
  return 0;
}

struct FlopArgs {
  std::vector<std::size_t> heights, widths, channels;
  std::size_t cq = 0, cv = 0;
  std::size_t gate_depth = 5, gate_width = 128;
};

int cmd_flops(const FlopArgs& a) {
  const auto heights = or_default(a.heights, {33});
  const auto channels = or_default(a.channels, {512});
  const caa::GateShape gate{a.gate_depth, a.gate_width};
  std::cout << "# cost model: multiply-accumulates, 1 MAC = 2 FLOPs\n";
  std::cout << "H,W,C,Cq,Cv,kind,projection_macs,map_macs,apply_macs,gate_macs,total_macs,"
               "total_flops\n";
  for (std::size_t H : heights) {
    for (std::size_t W : a.widths.empty() ? std::vector<std::size_t>{H} : a.widths) {
      for (std::size_t C : channels) {
        const caa::AttnDims dims{H, W, C, a.cq ? a.cq : C, a.cv ? a.cv : C};
        const caa::FlopReport self = caa::flops(caa::AttentionKind::Self, dims, gate);
        const caa::FlopReport axial = caa::flops(caa::AttentionKind::Axial, dims, gate);
        const caa::FlopReport chan = caa::flops(caa::AttentionKind::Channelized, dims, gate);
        for (const auto* r : {&self, &axial, &chan}) {
          std::cout << H << ',' << W << ',' << C << ',' << dims.Cq << ',' << dims.Cv << ','
                    << caa::attention_kind_name(r->kind) << ',' << r->projection_macs << ','
                    << r->map_macs << ',' << r->apply_macs << ',' << r->gate_macs << ','
                    << r->total_macs() << ',' << r->total_flops() << '\n';
        }
        std::cout << std::setprecision(6)
                  << "# axial/self map+apply ratio "
                  << static_cast<double>(axial.attention_core_macs()) /
                         static_cast<double>(self.attention_core_macs())
                  << " ((H+W)/(HW) = " << static_cast<double>(H + W) / static_cast<double>(H * W)
                  << ")\n"
                  << "# gate overhead " << chan.gate_overhead() << " of attention MACs; "
                  << "evaluated at every gate site: " << chan.gate_macs_all_sites << " MACs\n";
      }
    }
  }
  return 0;
}

struct FixtureArgs {
  std::vector<std::size_t> heights, widths, channels;
  std::size_t gate_depth = 5, gate_width = 4;
  std::string out = "fixtures";
};

int cmd_fixtures(const Common& common, const FixtureArgs& a) {
  if (common.dtype_or(caa::DType::Float64) != caa::DType::Float64) {
    throw std::invalid_argument("fixtures are always float64");
  }
  caa::fixtures::FixtureConfig cfg;
  cfg.seed = common.seed;
  cfg.gates = {a.gate_depth, a.gate_width, caa::Activation::leaky()};
  if (!a.heights.empty() || !a.widths.empty() || !a.channels.empty()) {
    if (a.heights.size() != a.channels.size() ||
        (!a.widths.empty() && a.widths.size() != a.heights.size())) {
      throw std::invalid_argument(
          "fixtures: --heights, --widths and --channels are zipped and must have equal lengths");
    }
    cfg.sizes.clear();
    for (std::size_t k = 0; k < a.heights.size(); ++k) {
      const std::size_t W = a.widths.empty() ? a.heights[k] : a.widths[k];
      cfg.sizes.push_back({a.heights[k], W, a.channels[k]});
    }
  }
  for (const auto& name :
       caa::fixtures::write_fixtures(a.out, cfg, caa::oracle::OracleCaps::from_env())) {
    std::cout << "wrote " << name << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channelized axial attention toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--seed", common.seed, "Global seed")->capture_default_str();
  app.add_option("--dtype", common.dtype,
                 "float32 or float64 (default: float64, bench uses float32)")
      ->check(CLI::IsMember({"float32", "float64"}));

  caa::verify::VerifyOptions vopts;
  auto* verify = app.add_subcommand("verify", "Run the invariant suites against the oracles");
  verify->add_option("--heights", vopts.heights, "Grid heights")->delimiter(',');
  verify->add_option("--widths", vopts.widths, "Grid widths")->delimiter(',');
  verify->add_option("--channels", vopts.channels, "Grid input channels")->delimiter(',');
  verify->add_option("--value-channels", vopts.value_channels, "Grid value channels")
      ->delimiter(',');
  verify->add_option("--depths", vopts.depths, "Gate hidden-layer counts")->delimiter(',');
  verify->add_option("--seeds", vopts.seed_count, "Seeds per grid point")->capture_default_str();
  verify->add_option("--fixtures", vopts.fixtures, "Fixture directory to replay");
  verify->add_flag("--mutate", vopts.mutate, "Perturb a gate weight in the efficient path");

  BenchArgs bargs;
  auto* bench = app.add_subcommand("bench", "Time grouped execution and record peak memory");
  bench->add_option("--heights", bargs.heights, "Heights (default 17,33,49)")->delimiter(',');
  bench->add_option("--widths", bargs.widths, "Widths (default: equal to height)")->delimiter(',');
  bench->add_option("--channels", bargs.channels, "Channels (default 16)")->delimiter(',');
  bench->add_option("--groups", bargs.groups, "Group counts (default 1,2,4,8,16)")->delimiter(',');
  bench->add_option("--repeats", bargs.repeats, "Repetitions per point")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_option("--gate-depth", bargs.gate_depth)->capture_default_str();
  bench->add_option("--gate-width", bargs.gate_width)->capture_default_str();
  bench->add_option("--out", bargs.out, "CSV path (default stdout)");

  FlopArgs fargs;
  auto* flops = app.add_subcommand("flops", "Print analytic MAC counts");
  flops->add_option("--heights", fargs.heights, "Heights (default 33)")->delimiter(',');
  flops->add_option("--widths", fargs.widths, "Widths (default: equal to height)")->delimiter(',');
  flops->add_option("--channels", fargs.channels, "Channels (default 512)")->delimiter(',');
  flops->add_option("--cq", fargs.cq, "Query/key channels (default C)");
  flops->add_option("--cv", fargs.cv, "Value channels (default C)");
  flops->add_option("--gate-depth", fargs.gate_depth)->capture_default_str();
  flops->add_option("--gate-width", fargs.gate_width)->capture_default_str();

  FixtureArgs xargs;
  auto* fixtures = app.add_subcommand("fixtures", "Write oracle fixtures for replay");
  fixtures->add_option("--heights", xargs.heights, "Fixture heights (zipped)")->delimiter(',');
  fixtures->add_option("--widths", xargs.widths, "Fixture widths (zipped)")->delimiter(',');
  fixtures->add_option("--channels", xargs.channels, "Fixture channels (zipped)")->delimiter(',');
  fixtures->add_option("--gate-depth", xargs.gate_depth)->capture_default_str();
  fixtures->add_option("--gate-width", xargs.gate_width)->capture_default_str();
  fixtures->add_option("--out", xargs.out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*verify) return cmd_verify(common, vopts);
    if (*bench) return cmd_bench(common, bargs);
    if (*flops) return cmd_flops(fargs);
    if (*fixtures) return cmd_fixtures(common, xargs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
