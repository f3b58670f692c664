#pragma once

#include "bandwidth.hpp"
#include "density.hpp"
#include "locpoly.hpp"
#include "normal.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace npinfer {

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

//! Counter-based generator: draw k of stream `key` is a pure function of
//! (key, k), so streams can be split by key without shared state.
class CounterRng
{
public:
  explicit CounterRng(std::uint64_t key)
    : key_(key)
  {}

  //! Independent stream for replication r of a run seeded with `seed`.
  static CounterRng substream(std::uint64_t seed, std::uint64_t r)
  {
    return CounterRng(splitmix64(seed ^ splitmix64(r ^ 0x632BE59BD9B4E019ULL)));
  }

  std::uint64_t next_u64() { return splitmix64(key_ + 0xD1B54A32D192ED03ULL * counter_++); }

  //! Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_quantile(uniform()); }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct MixtureComponent
{
  double weight;
  double mean;
  double sd;
};

struct DensityModel
{
  int id = 1;
  std::vector<MixtureComponent> mixture;

  double derivative(double x, int k) const
  {
    double s = 0.0;
    for (const auto& c : mixture)
      s += c.weight * normal_density_derivative(x, c.mean, c.sd, k);
    return s;
  }
  double density(double x) const { return derivative(x, 0); }
  double mean() const
  {
    double s = 0.0;
    for (const auto& c : mixture)
      s += c.weight * c.mean;
    return s;
  }
};

inline DensityModel density_model(int id)
{
  switch (id) {
    case 1:
      return { 1, { { 1.0, 0.0, 1.0 } } };
    case 2:
      return { 2,
               { { 0.2, 0.0, 1.0 }, { 0.2, 0.5, 2.0 / 3.0 }, { 0.6, 13.0 / 12.0, 5.0 / 9.0 } } };
    case 3:
      return { 3, { { 0.5, -1.0, 2.0 / 3.0 }, { 0.5, 1.0, 2.0 / 3.0 } } };
    case 4:
      return { 4, { { 0.75, 0.0, 1.0 }, { 0.25, 1.5, 1.0 / 3.0 } } };
    default:
      throw std::invalid_argument("density model id must be 1-4");
  }
}

inline DensitySample gen_density_sample(const DensityModel& model, std::size_t n, CounterRng& rng)
{
  std::vector<double> x(n);
  for (auto& xi : x) {
    const double pick = rng.uniform();
    double acc = 0.0;
    const MixtureComponent* comp = &model.mixture.back();
    for (const auto& c : model.mixture) {
      acc += c.weight;
      if (pick < acc) {
        comp = &c;
        break;
      }
    }
    xi = comp->mean + comp->sd * rng.normal();
  }
  return DensitySample(std::move(x));
}

struct RegressionModel
{
  int id = 5;
  std::function<double(double)> m;
  double noise_sd = 1.0;
  double x_lower = -1.0;
  double x_upper = 1.0;
};

//! Regression models 1-6 with X ~ U[x_lower, x_upper] and N(0, 1) noise.
inline RegressionModel regression_model(int id, double x_lower = -1.0, double x_upper = 1.0)
{
  using std::numbers::pi;
  auto sgn = [](double x) { return static_cast<double>((x > 0) - (x < 0)); };
  RegressionModel model;
  model.id = id;
  model.x_lower = x_lower;
  model.x_upper = x_upper;
  switch (id) {
    case 1:
      model.m = [](double x) { return std::sin(4 * x) + 2 * std::exp(-64 * x * x); };
      break;
    case 2:
      model.m = [](double x) { return 2 * x + 2 * std::exp(-64 * x * x); };
      break;
    case 3:
      model.m = [](double x) {
        return 0.3 * std::exp(-4 * (2 * x + 1) * (2 * x + 1)) +
               0.7 * std::exp(-16 * (2 * x - 1) * (2 * x - 1));
      };
      break;
    case 4:
      model.m = [](double x) { return x + 5 * normal_pdf(10 * x); };
      break;
    case 5:
      model.m = [sgn](double x) {
        return std::sin(3 * pi * x / 2) / (1 + 18 * x * x * (sgn(x) + 1));
      };
      break;
    case 6:
      model.m = [sgn](double x) {
        return std::sin(pi * x / 2) / (1 + 2 * x * x * (sgn(x) + 1));
      };
      break;
    default:
      throw std::invalid_argument("regression model id must be 1-6");
  }
  return model;
}

inline RegressionSample gen_regression_sample(const RegressionModel& model,
                                              std::size_t n,
                                              CounterRng& rng)
{
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = model.x_lower + (model.x_upper - model.x_lower) * rng.uniform();
    y[i] = model.m(x[i]) + model.noise_sd * rng.normal();
  }
  return RegressionSample(std::move(x), std::move(y));
}

enum class Estimator
{
  Density,
  LpReg
};

enum class McBandwidth
{
  Fixed,
  MsePopulation, //!< density only: MSE-optimal bandwidth from the true density
  Mse,           //!< data-driven MSE pilot (normal reference / global polynomial)
  Silverman,     //!< density only
  Rot,
  Dpi
};

inline std::string to_string(McBandwidth b)
{
  switch (b) {
    case McBandwidth::Fixed:
      return "fixed";
    case McBandwidth::MsePopulation:
      return "mse-population";
    case McBandwidth::Mse:
      return "mse";
    case McBandwidth::Silverman:
      return "silverman";
    case McBandwidth::Rot:
      return "rot";
    case McBandwidth::Dpi:
      return "dpi";
  }
  return "?";
}

inline McBandwidth mc_bandwidth_from_name(const std::string& s)
{
  for (auto b : { McBandwidth::Fixed,
                  McBandwidth::MsePopulation,
                  McBandwidth::Mse,
                  McBandwidth::Silverman,
                  McBandwidth::Rot,
                  McBandwidth::Dpi })
    if (to_string(b) == s)
      return b;
  throw std::invalid_argument("unknown bandwidth rule '" + s + "'");
}

struct McConfig
{
  Estimator estimator = Estimator::LpReg;
  int model = 5;
  double x_lower = -1.0; //!< regression design support
  double x_upper = 1.0;
  std::size_t n = 500;
  std::size_t replications = 2000;
  std::vector<double> evaluation_points;
  double alpha = 0.05;
  int p = 1;
  int q = 2;
  int kappa = 2;
  double rho = 1.0;
  std::string kernel = "epanechnikov";
  std::string bias_kernel = "mseopt-deriv2"; //!< density only; regression uses kernel
  VarianceMethod vce;
  McBandwidth bandwidth = McBandwidth::Dpi;
  double fixed_h = 0.0;
  std::uint64_t seed = 1;
  int workers = 1;

  //! Default evaluation points of each study.
  static std::vector<double> default_points(Estimator e)
  {
    if (e == Estimator::Density)
      return { -2.0, -1.0, 0.0, 1.0, 2.0 };
    return { -2.0 / 3.0, -1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0 };
  }

  void validate() const
  {
    if (replications < 1)
      throw std::invalid_argument("replications must be at least 1");
    if (n < 2)
      throw std::invalid_argument("n must be at least 2");
    if (workers < 1)
      throw std::invalid_argument("workers must be at least 1");
    if (evaluation_points.empty())
      throw std::invalid_argument("at least one evaluation point is required");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(rho > 0.0))
      throw std::invalid_argument("rho must be positive");
    if (bandwidth == McBandwidth::Fixed && !(fixed_h > 0.0))
      throw std::invalid_argument("fixed bandwidth must be positive");
    if (estimator == Estimator::LpReg) {
      if (q <= p)
        throw std::invalid_argument("q must exceed p");
      for (double x : evaluation_points)
        if (x < x_lower || x > x_upper)
          throw std::invalid_argument("evaluation point outside the design support");
      if (bandwidth == McBandwidth::MsePopulation || bandwidth == McBandwidth::Silverman)
        throw std::invalid_argument("bandwidth rule not available for local polynomial runs");
    } else {
      density_model(model);
    }
    if (estimator == Estimator::LpReg)
      regression_model(model, x_lower, x_upper);
  }
};

//! One replication's outcome at one evaluation point.
struct PointOutcome
{
  bool ok = false;
  std::string failure; //!< error kind when !ok
  double h = 0.0;
  std::array<bool, 3> covered{};
  std::array<double, 3> length{};
  std::array<double, 3> offset{}; //!< interval center minus truth
  bool degenerate = false;
  bool fallback = false;
};

struct MethodSummary
{
  double coverage = 0.0;
  double mean_length = 0.0;
  double mean_bias = 0.0;
};

struct BandwidthSummary
{
  double mean = 0.0, sd = 0.0, min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

struct PointReport
{
  double x = 0.0;
  double truth = 0.0;
  std::size_t successes = 0;
  std::map<std::string, std::size_t> failures;
  std::size_t degenerate = 0;
  std::size_t fallbacks = 0;
  std::array<MethodSummary, 3> methods{}; //!< US, BC, RBC
  BandwidthSummary bandwidth;
};

struct McReport
{
  McConfig config;
  std::vector<PointReport> points;
};

//! Sample drawn for one replication; exactly one member is set.
struct McDraw
{
  std::optional<DensitySample> density;
  std::optional<RegressionSample> regression;
};

using PointEvaluator = std::function<PointOutcome(const McDraw&, double x, double truth)>;

namespace detail {

inline double quantile_sorted(const std::vector<double>& s, double p)
{
  const double pos = p * (static_cast<double>(s.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline BandwidthSummary summarize_bandwidths(std::vector<double> h)
{
  BandwidthSummary b;
  if (h.empty())
    return b;
  double s = 0.0;
  for (double v : h)
    s += v;
  b.mean = s / static_cast<double>(h.size());
  double ss = 0.0;
  for (double v : h)
    ss += (v - b.mean) * (v - b.mean);
  b.sd = h.size() > 1 ? std::sqrt(ss / static_cast<double>(h.size() - 1)) : 0.0;
  std::sort(h.begin(), h.end());
  b.min = h.front();
  b.max = h.back();
  b.q1 = quantile_sorted(h, 0.25);
  b.median = quantile_sorted(h, 0.5);
  b.q3 = quantile_sorted(h, 0.75);
  return b;
}

inline PointOutcome outcome_from_intervals(const IntervalSet& set, double truth, double h, bool degenerate)
{
  PointOutcome o;
  o.ok = true;
  o.h = h;
  o.degenerate = degenerate;
  const double slack = 1e-12 * (1.0 + std::abs(truth));
  const std::array<Flavor, 3> flavors = { Flavor::US, Flavor::BC, Flavor::RBC };
  for (int k = 0; k < 3; ++k) {
    const ConfidenceInterval& ci = set.get(flavors[k]);
    o.covered[k] = ci.covers(truth, slack);
    o.length[k] = ci.length();
    o.offset[k] = ci.center - truth;
  }
  return o;
}

} // namespace detail

//! Default evaluator: select the bandwidth per the configured rule and run
//! the configured inference.
inline PointEvaluator standard_evaluator(const McConfig& config)
{
  const KernelSpec K = KernelSpec::from_name(config.kernel);
  if (config.estimator == Estimator::Density) {
    const KernelSpec L = KernelSpec::from_name(config.bias_kernel);
    const DensityModel model = density_model(config.model);
    return [config, K, L, model](const McDraw& draw, double x, double truth) {
      const DensitySample& s = *draw.density;
      bool fallback = false;
      double h = config.fixed_h;
      switch (config.bandwidth) {
        case McBandwidth::Fixed:
          break;
        case McBandwidth::MsePopulation:
          h = mse_bandwidth_density(model.density(x), model.derivative(x, config.kappa), s.n(), K, config.kappa);
          break;
        case McBandwidth::Mse:
          h = mse_bandwidth_density_normal_ref(s, x, config.kappa, K).value;
          break;
        case McBandwidth::Silverman:
          h = silverman_rot_density(s, config.kappa).value;
          break;
        case McBandwidth::Rot:
          h = rot_bandwidth(mse_bandwidth_density_normal_ref(s, x, config.kappa, K).value,
                            { RotKind::Density, config.kappa },
                            s.n())
                .value;
          break;
        case McBandwidth::Dpi: {
          const BandwidthChoice c = dpi_bandwidth_density(s, x, K, L, config.kappa, config.alpha);
          h = c.value;
          fallback = c.diagnostics.has_flag("dpi_fallback");
          break;
        }
      }
      const DensityInference r = density_infer(s, x, h, h / config.rho, K, L, config.kappa, config.alpha);
      PointOutcome o = detail::outcome_from_intervals(r.intervals, truth, h, r.degenerate);
      o.fallback = fallback;
      return o;
    };
  }
  return [config, K](const McDraw& draw, double x, double truth) {
    const RegressionSample& s = *draw.regression;
    bool fallback = false;
    double h = config.fixed_h;
    const bool boundary = x <= config.x_lower || x >= config.x_upper;
    switch (config.bandwidth) {
      case McBandwidth::Fixed:
        break;
      case McBandwidth::Mse:
        h = mse_bandwidth_lp(s, x, config.p, K).value;
        break;
      case McBandwidth::Rot:
        h = rot_bandwidth(mse_bandwidth_lp(s, x, config.p, K).value,
                          { boundary ? RotKind::LpBoundary : RotKind::LpInterior, config.p },
                          s.n())
              .value;
        break;
      case McBandwidth::Dpi: {
        const BandwidthChoice c =
          dpi_bandwidth_lp(s, x, config.p, boundary, K, config.alpha, config.vce);
        h = c.value;
        fallback = c.diagnostics.has_flag("dpi_fallback");
        break;
      }
      default:
        throw std::invalid_argument("bandwidth rule not available for local polynomial runs");
    }
    const LocPolyInference r =
      lp_infer(s, x, config.p, config.q, h, h / config.rho, K, K, config.alpha, config.vce);
    PointOutcome o = detail::outcome_from_intervals(r.intervals, truth, h, r.degenerate);
    o.fallback = fallback;
    return o;
  };
}

//! Monte Carlo driver with a caller-supplied per-point evaluator. Replication
//! r always draws from substream (seed, r) and results are aggregated in
//! replication order, so the report does not depend on the worker count.
inline McReport run_mc_with(const McConfig& config, const PointEvaluator& evaluate)
{
  config.validate();
  const std::size_t R = config.replications;
  const std::size_t P = config.evaluation_points.size();

  std::vector<double> truth(P);
  std::optional<DensityModel> dmodel;
  std::optional<RegressionModel> rmodel;
  if (config.estimator == Estimator::Density) {
    dmodel = density_model(config.model);
    for (std::size_t j = 0; j < P; ++j)
      truth[j] = dmodel->density(config.evaluation_points[j]);
  } else {
    rmodel = regression_model(config.model, config.x_lower, config.x_upper);
    for (std::size_t j = 0; j < P; ++j)
      truth[j] = rmodel->m(config.evaluation_points[j]);
  }

  std::vector<std::vector<PointOutcome>> results(R, std::vector<PointOutcome>(P));
  std::atomic<std::size_t> next{ 0 };
  auto work = [&] {
    for (std::size_t r = next++; r < R; r = next++) {
      CounterRng rng = CounterRng::substream(config.seed, r);
      McDraw draw;
      if (dmodel)
        draw.density = gen_density_sample(*dmodel, config.n, rng);
      else
        draw.regression = gen_regression_sample(*rmodel, config.n, rng);
      for (std::size_t j = 0; j < P; ++j) {
        try {
          results[r][j] = evaluate(draw, config.evaluation_points[j], truth[j]);
        } catch (const EstimationError& e) {
          results[r][j].ok = false;
          results[r][j].failure = e.kind();
        } catch (const std::invalid_argument&) {
          results[r][j].ok = false;
          results[r][j].failure = "invalid_bandwidth";
        }
      }
    }
  };
  const int nthreads = static_cast<int>(std::min<std::size_t>(config.workers, R));
  if (nthreads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back(work);
    for (auto& t : pool)
      t.join();
  }

  McReport report;
  report.config = config;
  for (std::size_t j = 0; j < P; ++j) {
    PointReport pr;
    pr.x = config.evaluation_points[j];
    pr.truth = truth[j];
    std::array<double, 3> cover{}, length{}, offset{};
    std::vector<double> hs;
    for (std::size_t r = 0; r < R; ++r) {
      const PointOutcome& o = results[r][j];
      if (!o.ok) {
        ++pr.failures[o.failure];
        continue;
      }
      ++pr.successes;
      pr.degenerate += o.degenerate;
      pr.fallbacks += o.fallback;
      hs.push_back(o.h);
      for (int k = 0; k < 3; ++k) {
        cover[k] += o.covered[k];
        length[k] += o.length[k];
        offset[k] += o.offset[k];
      }
    }
    if (pr.successes > 0) {
      const double s = static_cast<double>(pr.successes);
      for (int k = 0; k < 3; ++k)
        pr.methods[k] = { cover[k] / s, length[k] / s, offset[k] / s };
    }
    pr.bandwidth = detail::summarize_bandwidths(std::move(hs));
    report.points.push_back(std::move(pr));
  }
  return report;
}

inline McReport run_mc(const McConfig& config)
{
  config.validate();
  return run_mc_with(config, standard_evaluator(config));
}

struct SweepRow
{
  double h = 0.0;
  double x = 0.0;
  Flavor method = Flavor::US;
  double coverage = 0.0;
  double mean_length = 0.0;
  double mean_bias = 0.0;
};

//! Runs the Monte Carlo at each fixed bandwidth of the grid.
inline std::vector<SweepRow> bandwidth_grid_sweep(const McConfig& config, const std::vector<double>& grid)
{
  if (grid.empty())
    throw std::invalid_argument("bandwidth grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0))
      throw std::invalid_argument("bandwidth grid must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw std::invalid_argument("bandwidth grid must be strictly increasing");
  }
  std::vector<SweepRow> rows;
  for (double h : grid) {
    McConfig c = config;
    c.bandwidth = McBandwidth::Fixed;
    c.fixed_h = h;
    const McReport rep = run_mc(c);
    for (const auto& pt : rep.points) {
      const std::array<Flavor, 3> flavors = { Flavor::US, Flavor::BC, Flavor::RBC };
      for (int k = 0; k < 3; ++k)
        rows.push_back({ h, pt.x, flavors[k], pt.methods[k].coverage, pt.methods[k].mean_length,
                         pt.methods[k].mean_bias });
    }
  }
  return rows;
}

} // namespace npinfer
