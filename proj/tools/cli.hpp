#pragma once

#include <npinfer/bandwidth.hpp>
#include <npinfer/serialize.hpp>
#include <npinfer/simulate.hpp>
#include <npinfer/table_io.hpp>
#include <npinfer/version.hpp>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace npinfer::cli {

//! A bad flag value detected after parsing; exit code 2.
class UsageError : public std::runtime_error
{
public:
  UsageError(std::string flag, const std::string& what)
    : std::runtime_error(what)
    , flag_(std::move(flag))
  {
  }
  const std::string& flag() const { return flag_; }

private:
  std::string flag_;
};

inline std::string sha256_hex(const std::string& bytes)
{
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

inline std::string utc_timestamp()
{
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
    std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return s.str();
}

//! Worker count when --workers is absent: RBC_NPINFER_WORKERS if set to a
//! positive integer, otherwise the machine's hardware concurrency.
inline int default_workers()
{
  if (const char* env = std::getenv("RBC_NPINFER_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 4096)
      return static_cast<int>(v);
    throw UsageError("RBC_NPINFER_WORKERS", "RBC_NPINFER_WORKERS must be a positive integer");
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

//! Everything recorded in the run manifest.
struct RunContext
{
  std::vector<std::string> command_line;
  std::string started_at;
  json config = json::object();
  std::optional<std::uint64_t> seed;
  json inputs = json::array();
  json outputs = json::array();
  std::string manifest_path;
  bool manifest_enabled = true;

  //! Reads an input file and records its digest.
  std::string read_input(const std::string& path)
  {
    std::string bytes = read_file_bytes(path);
    inputs.push_back({ { "path", path }, { "bytes", bytes.size() }, { "sha256", sha256_hex(bytes) } });
    return bytes;
  }

  //! Writes text to a file, or to `out` when path is empty.
  void write_output(const std::string& path, const std::string& text, std::ostream& out)
  {
    if (path.empty()) {
      out << text;
      outputs.push_back({ { "path", "-" }, { "sha256", sha256_hex(text) } });
      return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f)
      throw std::runtime_error("cannot write '" + path + "'");
    f << text;
    if (!f)
      throw std::runtime_error("failed writing '" + path + "'");
    outputs.push_back({ { "path", path }, { "sha256", sha256_hex(text) } });
  }

  void write_manifest(const std::string& primary_output) const
  {
    if (!manifest_enabled)
      return;
    std::string path = manifest_path;
    if (path.empty())
      path = primary_output.empty() ? "npinfer-run.manifest.json" : primary_output + ".manifest.json";
    json m = { { "tool", "npinfer" },
               { "version", kVersion },
               { "command_line", command_line },
               { "config", config },
               { "seed", seed ? json(*seed) : json(nullptr) },
               { "started_at", started_at },
               { "finished_at", utc_timestamp() },
               { "inputs", inputs },
               { "outputs", outputs } };
    std::ofstream f(path, std::ios::binary);
    if (!f)
      throw std::runtime_error("cannot write manifest '" + path + "'");
    f << m.dump(2) << '\n';
  }
};

namespace detail {

inline std::string flag_in(const std::string& message)
{
  static const std::regex flag_re("--[A-Za-z0-9][A-Za-z0-9-]*");
  std::smatch m;
  return std::regex_search(message, m, flag_re) ? m.str() : std::string();
}

inline void error_line(std::ostream& err, json j)
{
  err << j.dump() << '\n';
}

inline KernelSpec kernel_flag(const std::string& name, const std::string& flag)
{
  try {
    return KernelSpec::from_name(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(flag, e.what());
  }
}

inline VarianceMethod vce_flag(const std::string& name, int neighbors)
{
  try {
    return VarianceMethod::from_name(name, neighbors);
  } catch (const std::invalid_argument& e) {
    throw UsageError("--vce", e.what());
  }
}

inline void require_alpha(double alpha)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw UsageError("--alpha", "--alpha must lie in (0, 1)");
}

inline bool boundary_point(const std::string& mode, double x, const RegressionSample& s)
{
  if (mode == "interior")
    return false;
  if (mode == "boundary")
    return true;
  if (mode != "auto")
    throw UsageError("--boundary", "--boundary must be auto, interior or boundary");
  const auto [lo, hi] = std::minmax_element(s.x().begin(), s.x().end());
  return x <= *lo || x >= *hi;
}

inline BandwidthChoice select_density_bandwidth(const std::string& rule,
                                                const DensitySample& s,
                                                double x,
                                                const KernelSpec& K,
                                                const KernelSpec& L,
                                                int kappa,
                                                double alpha)
{
  if (rule == "dpi")
    return dpi_bandwidth_density(s, x, K, L, kappa, alpha);
  if (rule == "mse")
    return mse_bandwidth_density_normal_ref(s, x, kappa, K);
  if (rule == "rot")
    return rot_bandwidth(mse_bandwidth_density_normal_ref(s, x, kappa, K).value, { RotKind::Density, kappa }, s.n());
  if (rule == "silverman")
    return silverman_rot_density(s, kappa);
  throw UsageError("--bw", "density bandwidth rule must be dpi, mse, rot or silverman");
}

inline BandwidthChoice select_lp_bandwidth(const std::string& rule,
                                           const RegressionSample& s,
                                           double x,
                                           int p,
                                           bool boundary,
                                           const KernelSpec& K,
                                           double alpha,
                                           const VarianceMethod& vce)
{
  if (rule == "dpi")
    return dpi_bandwidth_lp(s, x, p, boundary, K, alpha, vce);
  if (rule == "mse")
    return mse_bandwidth_lp(s, x, p, K);
  if (rule == "rot")
    return rot_bandwidth(mse_bandwidth_lp(s, x, p, K).value,
                         { boundary ? RotKind::LpBoundary : RotKind::LpInterior, p },
                         s.n());
  throw UsageError("--bw", "local polynomial bandwidth rule must be dpi, mse or rot");
}

inline BandwidthChoice fixed_choice(double h)
{
  BandwidthChoice c;
  c.value = h;
  c.rule = BandwidthRule::Fixed;
  return c;
}

inline std::vector<SweepRow> report_rows(const McReport& report)
{
  std::vector<SweepRow> rows;
  const std::array<Flavor, 3> flavors = { Flavor::US, Flavor::BC, Flavor::RBC };
  for (const auto& pt : report.points)
    for (int k = 0; k < 3; ++k)
      rows.push_back({ pt.bandwidth.mean, pt.x, flavors[k], pt.methods[k].coverage, pt.methods[k].mean_length,
                       pt.methods[k].mean_bias });
  return rows;
}

} // namespace detail

//! Flags shared by the `sim` subcommands.
struct SimFlags
{
  int model = 0;
  std::size_t n = 500;
  std::size_t reps = 2000;
  std::vector<double> x;
  double alpha = 0.05;
  int p = 1;
  int q = -1;
  int kappa = 2;
  double rho = 1.0;
  std::string kernel = "epanechnikov";
  std::string bias_kernel = "mseopt-deriv2";
  std::string vce = "hc3";
  int nn = 3;
  std::string bw = "dpi";
  double h = 0.0;
  double x_lower = -1.0;
  double x_upper = 1.0;
  std::uint64_t seed = 1;
  int workers = 0;
  std::string out;
  std::string curves;
  std::string estimator = "lpreg";
  std::vector<double> grid;
};

inline void add_sim_flags(CLI::App* cmd, SimFlags& f, bool sweep)
{
  cmd->add_option("--model", f.model, "Model id (density 1-4, regression 1-6)");
  cmd->add_option("--n", f.n, "Sample size")->capture_default_str();
  cmd->add_option("--reps", f.reps, "Replications")->capture_default_str();
  cmd->add_option("--x", f.x, "Evaluation points")->delimiter(',');
  cmd->add_option("--alpha", f.alpha, "Nominal level is 1 - alpha")->capture_default_str();
  cmd->add_option("--p", f.p, "Local polynomial degree")->capture_default_str();
  cmd->add_option("--q", f.q, "Bias-fit degree (default p + 1)");
  cmd->add_option("--kappa", f.kappa, "Density kernel order")->capture_default_str();
  cmd->add_option("--rho", f.rho, "Ratio h / b")->capture_default_str();
  cmd->add_option("--kernel", f.kernel, "Kernel name")->capture_default_str();
  cmd->add_option("--bias-kernel", f.bias_kernel, "Density bias kernel name")->capture_default_str();
  cmd->add_option("--vce", f.vce, "hc0|hc1|hc2|hc3|nn")->capture_default_str();
  cmd->add_option("--nn", f.nn, "Neighbors for the nn variance estimator")->capture_default_str();
  cmd->add_option("--x-lower", f.x_lower, "Regression design lower end")->capture_default_str();
  cmd->add_option("--x-upper", f.x_upper, "Regression design upper end")->capture_default_str();
  cmd->add_option("--seed", f.seed, "64-bit seed")->capture_default_str();
  cmd->add_option("--workers", f.workers, "Worker threads (default: RBC_NPINFER_WORKERS or all cores)");
  if (sweep) {
    cmd->add_option("--estimator", f.estimator, "density|lpreg")->capture_default_str();
    cmd->add_option("--grid", f.grid, "Strictly increasing bandwidth grid")->required()->delimiter(',');
    cmd->add_option("--out", f.out, "Curves CSV (default stdout)");
  } else {
    cmd->add_option("--bw", f.bw, "fixed|mse-population|mse|silverman|rot|dpi")->capture_default_str();
    cmd->add_option("--h", f.h, "Bandwidth for --bw fixed (implies fixed when --bw is absent)");
    cmd->add_option("--out", f.out, "Report JSON (default stdout)");
    cmd->add_option("--curves", f.curves, "Per point and method CSV summary");
  }
}

inline McConfig sim_config(const SimFlags& f, Estimator estimator, bool h_given, bool bw_given)
{
  McConfig c;
  c.estimator = estimator;
  c.model = f.model != 0 ? f.model : (estimator == Estimator::Density ? 1 : 5);
  c.x_lower = f.x_lower;
  c.x_upper = f.x_upper;
  c.n = f.n;
  c.replications = f.reps;
  c.evaluation_points = f.x.empty() ? McConfig::default_points(estimator) : f.x;
  detail::require_alpha(f.alpha);
  c.alpha = f.alpha;
  c.p = f.p;
  c.q = f.q < 0 ? f.p + 1 : f.q;
  c.kappa = f.kappa;
  c.rho = f.rho;
  detail::kernel_flag(f.kernel, "--kernel");
  detail::kernel_flag(f.bias_kernel, "--bias-kernel");
  c.kernel = f.kernel;
  c.bias_kernel = f.bias_kernel;
  c.vce = detail::vce_flag(f.vce, f.nn);
  try {
    c.bandwidth = (h_given && !bw_given) ? McBandwidth::Fixed : mc_bandwidth_from_name(f.bw);
  } catch (const std::invalid_argument& e) {
    throw UsageError("--bw", e.what());
  }
  if (c.bandwidth == McBandwidth::Fixed && !(f.h > 0.0))
    throw UsageError("--h", "--bw fixed needs a positive --h");
  c.fixed_h = f.h;
  c.seed = f.seed;
  c.workers = f.workers > 0 ? f.workers : default_workers();
  return c;
}

//! Runs one command line. Writes results to `out` (unless redirected to
//! files) and one-line JSON errors to `err`. Returns 0 on success, 2 on a
//! usage error and 1 on an estimation, input or runtime error.
inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
  RunContext ctx;
  ctx.started_at = utc_timestamp();
  for (int i = 0; i < argc; ++i)
    ctx.command_line.emplace_back(argv[i]);

  CLI::App app{ "Nonparametric density and regression inference with robust bias correction", "npinfer" };
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", std::string(kVersion));
  std::string manifest;
  bool no_manifest = false;
  app.add_option("--manifest", manifest, "Manifest path (default: <out>.manifest.json)");
  app.add_flag("--no-manifest", no_manifest, "Skip writing the run manifest");

  // density infer
  auto* density = app.add_subcommand("density", "Kernel density estimation")->require_subcommand(1);
  auto* dinfer = density->add_subcommand("infer", "US, BC and RBC intervals for f(x)");
  std::string d_data, d_out, d_kernel = "epanechnikov", d_bias = "mseopt-deriv2", d_bw = "dpi";
  std::vector<double> d_x;
  double d_h = 0.0, d_b = 0.0, d_rho = 1.0, d_alpha = 0.05;
  int d_kappa = 2;
  dinfer->add_option("--data", d_data, "CSV with header x")->required();
  dinfer->add_option("--x", d_x, "Evaluation points")->required()->delimiter(',');
  dinfer->add_option("--h", d_h, "Bandwidth (default: selected by --bw)");
  dinfer->add_option("--b", d_b, "Bias bandwidth (default h / rho)");
  dinfer->add_option("--rho", d_rho, "Ratio h / b")->capture_default_str();
  dinfer->add_option("--kappa", d_kappa, "Order of the kernel K")->capture_default_str();
  dinfer->add_option("--kernel", d_kernel, "Kernel K")->capture_default_str();
  dinfer->add_option("--bias-kernel", d_bias, "Bias kernel L")->capture_default_str();
  dinfer->add_option("--bw", d_bw, "dpi|mse|rot|silverman")->capture_default_str();
  dinfer->add_option("--alpha", d_alpha, "Nominal level is 1 - alpha")->capture_default_str();
  dinfer->add_option("--out", d_out, "Output JSON (default stdout)");

  // lpreg infer
  auto* lpreg = app.add_subcommand("lpreg", "Local polynomial regression")->require_subcommand(1);
  auto* linfer = lpreg->add_subcommand("infer", "US, BC and RBC intervals for m(x)");
  std::string l_data, l_out, l_kernel = "epanechnikov", l_bias, l_bw = "dpi", l_vce = "hc3",
                             l_boundary = "auto";
  std::vector<double> l_x;
  double l_h = 0.0, l_b = 0.0, l_rho = 1.0, l_alpha = 0.05;
  int l_p = 1, l_q = -1, l_nn = 3;
  linfer->add_option("--data", l_data, "CSV with header x,y")->required();
  linfer->add_option("--x", l_x, "Evaluation points")->required()->delimiter(',');
  linfer->add_option("--p", l_p, "Degree of the point estimate")->capture_default_str();
  linfer->add_option("--q", l_q, "Degree of the bias fit (default p + 1)");
  linfer->add_option("--h", l_h, "Bandwidth (default: selected by --bw)");
  linfer->add_option("--b", l_b, "Bias bandwidth (default h / rho)");
  linfer->add_option("--rho", l_rho, "Ratio h / b")->capture_default_str();
  linfer->add_option("--kernel", l_kernel, "Kernel K")->capture_default_str();
  linfer->add_option("--bias-kernel", l_bias, "Kernel L (default K)");
  linfer->add_option("--vce", l_vce, "hc0|hc1|hc2|hc3|nn")->capture_default_str();
  linfer->add_option("--nn", l_nn, "Neighbors for --vce nn")->capture_default_str();
  linfer->add_option("--bw", l_bw, "dpi|mse|rot")->capture_default_str();
  linfer->add_option("--boundary", l_boundary, "auto|interior|boundary")->capture_default_str();
  linfer->add_option("--alpha", l_alpha, "Nominal level is 1 - alpha")->capture_default_str();
  linfer->add_option("--out", l_out, "Output JSON (default stdout)");

  // bw
  auto* bw = app.add_subcommand("bw", "Bandwidth selection");
  std::string b_data, b_out, b_method = "dpi", b_estimator = "density", b_kernel = "epanechnikov",
                         b_bias = "mseopt-deriv2", b_vce = "hc3", b_boundary = "auto";
  std::vector<double> b_x;
  double b_alpha = 0.05;
  int b_p = 1, b_kappa = 2, b_nn = 3;
  bw->add_option("--data", b_data, "CSV (x for density, x,y for lpreg)")->required();
  bw->add_option("--x", b_x, "Evaluation points")->required()->delimiter(',');
  bw->add_option("--method", b_method, "dpi|rot|mse|silverman")->capture_default_str();
  bw->add_option("--estimator", b_estimator, "density|lpreg")->capture_default_str();
  bw->add_option("--p", b_p, "Local polynomial degree")->capture_default_str();
  bw->add_option("--kappa", b_kappa, "Density kernel order")->capture_default_str();
  bw->add_option("--kernel", b_kernel, "Kernel K")->capture_default_str();
  bw->add_option("--bias-kernel", b_bias, "Density bias kernel L")->capture_default_str();
  bw->add_option("--vce", b_vce, "hc0|hc1|hc2|hc3|nn")->capture_default_str();
  bw->add_option("--nn", b_nn, "Neighbors for --vce nn")->capture_default_str();
  bw->add_option("--boundary", b_boundary, "auto|interior|boundary")->capture_default_str();
  bw->add_option("--alpha", b_alpha, "Nominal level is 1 - alpha")->capture_default_str();
  bw->add_option("--out", b_out, "Output JSON (default stdout)");

  // sim
  auto* sim = app.add_subcommand("sim", "Monte Carlo coverage studies")->require_subcommand(1);
  SimFlags s_density, s_lpreg, s_sweep;
  s_density.model = 1;
  auto* sdensity = sim->add_subcommand("density", "Density coverage study");
  add_sim_flags(sdensity, s_density, false);
  auto* slpreg = sim->add_subcommand("lpreg", "Local polynomial coverage study");
  add_sim_flags(slpreg, s_lpreg, false);
  auto* ssweep = sim->add_subcommand("sweep", "Coverage and length over a bandwidth grid");
  add_sim_flags(ssweep, s_sweep, true);

  // kernels show
  auto* kernels = app.add_subcommand("kernels", "Kernel constants")->require_subcommand(1);
  auto* kshow = kernels->add_subcommand("show", "Print kernel moments");
  std::string k_name, k_moment;
  std::optional<double> k_lo, k_hi;
  kshow->add_option("--kernel", k_name, "Kernel name")->required();
  kshow->add_option("--moment", k_moment, "muK, rawK or thetaK; prints one number");
  kshow->add_option("--lower", k_lo, "Truncated support lower end");
  kshow->add_option("--upper", k_hi, "Truncated support upper end");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::CallForVersion&) {
      out << kVersion << '\n';
      return 0;
    } catch (const CLI::ParseError& e) {
      const std::string msg = e.what();
      detail::error_line(err, { { "error", "usage" }, { "flag", detail::flag_in(msg) }, { "message", msg } });
      return 2;
    }
    ctx.manifest_path = manifest;
    ctx.manifest_enabled = !no_manifest;

    if (dinfer->parsed()) {
      detail::require_alpha(d_alpha);
      const KernelSpec K = detail::kernel_flag(d_kernel, "--kernel");
      const KernelSpec L = detail::kernel_flag(d_bias, "--bias-kernel");
      if (d_h < 0.0 || d_b < 0.0 || !(d_rho > 0.0))
        throw UsageError(d_rho > 0.0 ? "--h" : "--rho", "bandwidths and rho must be positive");
      const DensitySample sample = parse_density_table(ctx.read_input(d_data));
      ctx.config = { { "command", "density infer" }, { "data", d_data }, { "x", d_x },
                     { "h", d_h > 0.0 ? json(d_h) : json(nullptr) },
                     { "b", d_b > 0.0 ? json(d_b) : json(nullptr) }, { "rho", d_rho },
                     { "kappa", d_kappa }, { "kernel", d_kernel }, { "bias_kernel", d_bias },
                     { "bw", d_h > 0.0 ? "fixed" : d_bw }, { "alpha", d_alpha } };
      json results = json::array();
      for (double x : d_x) {
        const BandwidthChoice h = d_h > 0.0 ? detail::fixed_choice(d_h)
                                            : detail::select_density_bandwidth(d_bw, sample, x, K, L, d_kappa, d_alpha);
        const double b = d_b > 0.0 ? d_b : h.value / d_rho;
        json r = to_json(density_infer(sample, x, h.value, b, K, L, d_kappa, d_alpha));
        r["bandwidth"] = to_json(h);
        results.push_back(r);
      }
      ctx.write_output(d_out, json{ { "results", results } }.dump(2) + "\n", out);
      ctx.write_manifest(d_out);
      return 0;
    }

    if (linfer->parsed()) {
      detail::require_alpha(l_alpha);
      const KernelSpec K = detail::kernel_flag(l_kernel, "--kernel");
      const KernelSpec L = l_bias.empty() ? K : detail::kernel_flag(l_bias, "--bias-kernel");
      const VarianceMethod vce = detail::vce_flag(l_vce, l_nn);
      const int q = l_q < 0 ? l_p + 1 : l_q;
      if (l_p < 0)
        throw UsageError("--p", "--p must be nonnegative");
      if (q <= l_p)
        throw UsageError("--q", "--q must exceed --p");
      if (l_h < 0.0 || l_b < 0.0 || !(l_rho > 0.0))
        throw UsageError(l_rho > 0.0 ? "--h" : "--rho", "bandwidths and rho must be positive");
      const RegressionSample sample = parse_regression_table(ctx.read_input(l_data));
      ctx.config = { { "command", "lpreg infer" }, { "data", l_data }, { "x", l_x }, { "p", l_p }, { "q", q },
                     { "h", l_h > 0.0 ? json(l_h) : json(nullptr) },
                     { "b", l_b > 0.0 ? json(l_b) : json(nullptr) }, { "rho", l_rho },
                     { "kernel", l_kernel }, { "bias_kernel", L.label() }, { "vce", l_vce },
                     { "nn", l_nn }, { "bw", l_h > 0.0 ? "fixed" : l_bw }, { "boundary", l_boundary },
                     { "alpha", l_alpha } };
      json results = json::array();
      for (double x : l_x) {
        const bool boundary = detail::boundary_point(l_boundary, x, sample);
        const BandwidthChoice h =
          l_h > 0.0 ? detail::fixed_choice(l_h)
                    : detail::select_lp_bandwidth(l_bw, sample, x, l_p, boundary, K, l_alpha, vce);
        const double b = l_b > 0.0 ? l_b : h.value / l_rho;
        json r = to_json(lp_infer(sample, x, l_p, q, h.value, b, K, L, l_alpha, vce));
        r["bandwidth"] = to_json(h);
        results.push_back(r);
      }
      ctx.write_output(l_out, json{ { "results", results } }.dump(2) + "\n", out);
      ctx.write_manifest(l_out);
      return 0;
    }

    if (bw->parsed()) {
      detail::require_alpha(b_alpha);
      const KernelSpec K = detail::kernel_flag(b_kernel, "--kernel");
      ctx.config = { { "command", "bw" }, { "data", b_data }, { "x", b_x }, { "method", b_method },
                     { "estimator", b_estimator }, { "alpha", b_alpha }, { "kernel", b_kernel } };
      json results = json::array();
      if (b_estimator == "density") {
        const KernelSpec L = detail::kernel_flag(b_bias, "--bias-kernel");
        ctx.config["kappa"] = b_kappa;
        ctx.config["bias_kernel"] = b_bias;
        const DensitySample sample = parse_density_table(ctx.read_input(b_data));
        for (double x : b_x) {
          json r = to_json(detail::select_density_bandwidth(b_method, sample, x, K, L, b_kappa, b_alpha));
          r["x"] = x;
          results.push_back(r);
        }
      } else if (b_estimator == "lpreg") {
        const VarianceMethod vce = detail::vce_flag(b_vce, b_nn);
        if (b_p < 0)
          throw UsageError("--p", "--p must be nonnegative");
        ctx.config["p"] = b_p;
        ctx.config["vce"] = b_vce;
        ctx.config["nn"] = b_nn;
        ctx.config["boundary"] = b_boundary;
        const RegressionSample sample = parse_regression_table(ctx.read_input(b_data));
        for (double x : b_x) {
          const bool boundary = detail::boundary_point(b_boundary, x, sample);
          json r = to_json(detail::select_lp_bandwidth(b_method, sample, x, b_p, boundary, K, b_alpha, vce));
          r["x"] = x;
          results.push_back(r);
        }
      } else {
        throw UsageError("--estimator", "--estimator must be density or lpreg");
      }
      ctx.write_output(b_out, json{ { "results", results } }.dump(2) + "\n", out);
      ctx.write_manifest(b_out);
      return 0;
    }

    if (sdensity->parsed() || slpreg->parsed()) {
      const bool is_density = sdensity->parsed();
      CLI::App* cmd = is_density ? sdensity : slpreg;
      const SimFlags& f = is_density ? s_density : s_lpreg;
      const McConfig config = sim_config(f, is_density ? Estimator::Density : Estimator::LpReg,
                                         cmd->count("--h") > 0, cmd->count("--bw") > 0);
      ctx.seed = config.seed;
      ctx.config = to_json(config);
      ctx.config["workers"] = config.workers;
      const McReport report = run_mc(config);
      ctx.write_output(f.out, to_json(report).dump(2) + "\n", out);
      if (!f.curves.empty())
        ctx.write_output(f.curves, sweep_csv(detail::report_rows(report)), out);
      ctx.write_manifest(f.out);
      return 0;
    }

    if (ssweep->parsed()) {
      Estimator e;
      if (s_sweep.estimator == "density")
        e = Estimator::Density;
      else if (s_sweep.estimator == "lpreg")
        e = Estimator::LpReg;
      else
        throw UsageError("--estimator", "--estimator must be density or lpreg");
      McConfig config = sim_config(s_sweep, e, false, false);
      config.bandwidth = McBandwidth::Fixed;
      config.fixed_h = s_sweep.grid.empty() ? 0.0 : s_sweep.grid.front();
      ctx.seed = config.seed;
      ctx.config = to_json(config);
      ctx.config["workers"] = config.workers;
      ctx.config["grid"] = s_sweep.grid;
      std::vector<SweepRow> rows;
      try {
        rows = bandwidth_grid_sweep(config, s_sweep.grid);
      } catch (const std::invalid_argument& e) {
        throw UsageError("--grid", e.what());
      }
      ctx.write_output(s_sweep.out, sweep_csv(rows), out);
      ctx.write_manifest(s_sweep.out);
      return 0;
    }

    if (kshow->parsed()) {
      const KernelSpec K = detail::kernel_flag(k_name, "--kernel");
      TruncatedSupport t = whole_support(K);
      if (k_lo || k_hi)
        t = TruncatedSupport::make(k_lo.value_or(t.lower), k_hi.value_or(t.upper));
      if (!k_moment.empty()) {
        static const std::regex moment_re("(mu|raw|theta)([0-9]+)");
        std::smatch m;
        if (!std::regex_match(k_moment, m, moment_re))
          throw UsageError("--moment", "--moment must look like mu2, raw3 or theta2");
        const int k = std::stoi(m[2].str());
        double v = 0.0;
        if (m[1] == "mu")
          v = kernel_moment_mu(K, k, t);
        else if (m[1] == "raw")
          v = kernel_raw_moment(K, k, t);
        else
          v = kernel_moment_theta(K, k, t);
        std::ostringstream s;
        s << std::setprecision(15) << v << '\n';
        out << s.str();
        return 0;
      }
      json mu = json::array(), raw = json::array();
      for (int k = 0; k <= 6; ++k) {
        mu.push_back(kernel_moment_mu(K, k, t));
        raw.push_back(kernel_raw_moment(K, k, t));
      }
      json j = { { "kernel", K.label() },
                 { "derivative_target", K.derivative_target() },
                 { "order", K.order() },
                 { "support", { K.support_lower(), K.support_upper() } },
                 { "integration_range", { t.lower, t.upper } },
                 { "mu", mu },
                 { "raw", raw },
                 { "theta",
                   { { "2", kernel_moment_theta(K, 2, t) },
                     { "3", kernel_moment_theta(K, 3, t) },
                     { "4", kernel_moment_theta(K, 4, t) } } } };
      out << j.dump(2) << '\n';
      return 0;
    }
    return 0;
  } catch (const UsageError& e) {
    detail::error_line(err, { { "error", "usage" }, { "flag", e.flag() }, { "message", e.what() } });
    return 2;
  } catch (const EstimationError& e) {
    detail::error_line(err, { { "error", "estimation" }, { "kind", e.kind() }, { "message", e.what() } });
    return 1;
  } catch (const ParseError& e) {
    detail::error_line(err, { { "error", "parse" },
                              { "line", e.line() },
                              { "column", e.column() },
                              { "message", e.what() } });
    return 1;
  } catch (const SchemaError& e) {
    detail::error_line(err, { { "error", "schema" }, { "message", e.what() } });
    return 1;
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    detail::error_line(err, { { "error", "usage" }, { "flag", detail::flag_in(msg) }, { "message", msg } });
    return 2;
  } catch (const std::exception& e) {
    detail::error_line(err, { { "error", "runtime" }, { "message", e.what() } });
    return 1;
  }
}

} // namespace npinfer::cli
