#include "dklab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <omp.h>

#include "dklab/dkspde.hpp"
#include "dklab/duality.hpp"
#include "dklab/error.hpp"
#include "dklab/parallel.hpp"
#include "dklab/rng.hpp"

namespace dklab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCodeVersion = "dk_lab 1.0.0";
constexpr std::uint32_t kDkInitOffset = 1u << 20;
constexpr std::uint32_t kParticleBOffset = 2u << 20;

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<TestFunctionSpec> tests_or_default(const ExperimentConfig& cfg) {
  if (!cfg.tests.empty()) return cfg.tests;
  std::vector<int> e1(static_cast<std::size_t>(cfg.d), 0), e2(e1);
  e1[0] = 1;
  e2[0] = 2;
  return {{e1, false, 0.5 * cfg.T, -1}, {e2, false, cfg.T, -1}};
}

std::vector<SmoothFunction> species_functions(const TestFunctionSpec& t, int nS) {
  std::vector<SmoothFunction> out;
  for (int a = 0; a < nS; ++a) {
    if (t.species < 0 || t.species == a)
      out.emplace_back([t](std::span<const double> x) { return t(x); });
    else
      out.emplace_back([](std::span<const double>) { return 0.0; });
  }
  return out;
}

SpeciesFields interpolate_all(const std::vector<SmoothFunction>& f, const PeriodicGrid& g) {
  SpeciesFields out;
  for (const auto& fi : f) out.push_back(interpolate_Ih(fi, g));
  return out;
}

double pairing(const SpeciesFields& a, const SpeciesFields& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += inner_product_h(a[i], b[i]);
  return s;
}

std::vector<int> mark_steps(const std::vector<double>& marks, double dt) {
  std::vector<int> out;
  for (double m : marks) out.push_back(static_cast<int>(std::llround(m / dt)));
  return out;
}

double fine_dt(const ExperimentConfig& cfg) {
  return cfg.dt_fine > 0.0 ? cfg.dt_fine : cfg.meanfield_dt(cfg.L_fine);
}

double coarse_mf_dt(const ExperimentConfig& cfg, int L) {
  return cfg.dt_meanfield > 0.0 ? cfg.dt_meanfield : cfg.meanfield_dt(L);
}

ParticleEnsemble sample(const ExperimentConfig& cfg, int N, std::uint32_t replica) {
  return sample_initial_iid(cfg.d, N, cfg.sigma, cfg.initial_densities(), cfg.initial_sup_bounds(), cfg.seed,
                            replica);
}

StoppingMonitor make_monitor(const ExperimentConfig& cfg, double N) {
  return StoppingMonitor(N, cfg.d, cfg.monitor_eps(), cfg.monitor_delta());
}

json audit_for(const ExperimentConfig& cfg, double N, int L) {
  return scaling_audit(N, kTwoPi / L, cfg.d, cfg.r_I, cfg.T, cfg.delta0);
}

std::string samples_csv(const SampleSet& s) {
  std::ostringstream os;
  write_samples_csv(os, s);
  return os.str();
}

std::string field_csv(const GridField& u) {
  std::ostringstream os;
  write_field_csv(os, u);
  return os.str();
}

std::string field_bin(const GridField& u) {
  std::ostringstream os;
  write_field(os, u);
  return os.str();
}

}  // namespace

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DK_LAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    throw ConfigError("DK_LAB_THREADS must be a positive integer");
  }
  return std::max(1, omp_get_max_threads());
}

// ---------------------------------------------------------------------------

std::string Table::csv() const {
  std::ostringstream os;
  for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << fmt(r[c]);
    os << '\n';
  }
  return os.str();
}

std::string Table::dat() const {
  std::ostringstream os;
  os << '#';
  for (const auto& c : columns) os << ' ' << c;
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? " " : "") << fmt(r[c]);
    os << '\n';
  }
  return os.str();
}

std::vector<double> Table::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::out_of_range("no column " + name);
  const auto c = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

json SlopeFit::to_json() const {
  return {{"slope", slope}, {"intercept", intercept}, {"se", se}, {"ci95", {ci_low, ci_high}}, {"points", n}};
}

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_loglog: size mismatch");
  if (x.size() < 3) throw ConfigError("a convergence study needs at least 3 sweep points");
  const int n = static_cast<int>(x.size());
  std::vector<double> lx, ly;
  for (int i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw NumericalError("fit", "log-log fit needs positive values");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  SlopeFit f;
  f.n = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = ly[i] - f.intercept - f.slope * lx[i];
    rss += r * r;
  }
  f.se = n > 2 ? std::sqrt(rss / (n - 2) / sxx) : 0.0;
  const double q = n > 2 ? boost::math::quantile(boost::math::students_t(n - 2), 0.975) : 0.0;
  f.ci_low = f.slope - q * f.se;
  f.ci_high = f.slope + q * f.se;
  return f;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = cfg.to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

json StudyReport::to_json(const ExperimentConfig& cfg, bool with_timestamp) const {
  json tj = json::object();
  for (const auto& [name, t] : tables)
    tj[name] = {{"csv", "tables/" + name + ".csv"}, {"dat", "tables/" + name + ".dat"}, {"columns", t.columns}};
  json rj = json::array();
  for (const auto& [name, _] : raw) rj.push_back("raw/" + name);
  json j = {
      {"study", study},
      {"summary", summary},
      {"tables", tj},
      {"raw", rj},
      {"scaling_audit", audit},
      {"warnings", warnings},
      {"config", cfg.to_json()},
      {"provenance", {{"config_hash", config_hash(cfg)}, {"code_version", kCodeVersion}, {"seed", cfg.seed}}},
  };
  if (with_timestamp) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    j["generated_at"] = os.str();
  }
  return j;
}

void StudyReport::write(const std::string& dir, const ExperimentConfig& cfg) const {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "raw", ec);
  fs::create_directories(root / "tables", ec);
  if (ec) throw ConfigError("run.output: cannot create directory " + dir);
  auto put = [](const fs::path& p, const std::string& content) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("run.output: cannot write " + p.string());
    os << content;
  };
  for (const auto& [name, t] : tables) {
    put(root / "tables" / (name + ".csv"), t.csv());
    put(root / "tables" / (name + ".dat"), t.dat());
  }
  for (const auto& [name, content] : raw) put(root / "raw" / name, content);
  put(root / "report.json", to_json(cfg).dump(2) + "\n");
}

int aligned_steps(double T, double dt_max, const std::vector<double>& marks) {
  if (!(dt_max > 0.0) || !(T > 0.0)) throw ConfigError("time step and horizon must be positive");
  const int n0 = std::max(1, static_cast<int>(std::ceil(T / dt_max - 1e-9)));
  for (int n = n0; n <= 64 * n0; ++n) {
    bool ok = true;
    for (double m : marks) {
      const double k = m * n / T;
      if (std::abs(k - std::round(k)) > 1e-7) ok = false;
    }
    if (ok) return n;
  }
  throw ConfigError("tests.functions[].T: test times are not commensurate with meanfield.T");
}

// ---------------------------------------------------------------------------

OperatorOrderResult operator_order_study(int p, const std::vector<int>& Ls) {
  OperatorOrderResult r;
  r.table.columns = {"L", "h", "err_partial", "err_second", "err_sbp"};
  for (int L : Ls) {
    const PeriodicGrid g(1, L);
    const DiscreteOperatorSet ops(g, p);
    const auto u = interpolate_Ih([](std::span<const double> x) { return std::sin(x[0]); }, g);
    const auto du = ops.partial(u, 0), d2u = ops.second(u, 0), Du = ops.sbp(u, 0);
    double e1 = 0.0, e2 = 0.0, e3 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = g.coordinate(static_cast<int>(i));
      e1 = std::max(e1, std::abs(du[i] - std::cos(x)));
      e2 = std::max(e2, std::abs(d2u[i] + std::sin(x)));
      // the companion difference is centred between nodes for p = 1
      const double xs = p == 1 ? x + 0.5 * g.h() : x;
      e3 = std::max(e3, std::abs(Du[i] - std::cos(xs)));
    }
    r.table.rows.push_back({double(L), g.h(), e1, e2, e3});
  }
  r.first = fit_loglog(r.table.column("h"), r.table.column("err_partial"));
  r.second = fit_loglog(r.table.column("h"), r.table.column("err_second"));
  return r;
}

ConsistencyResult mfl_consistency_study(const ExperimentConfig& cfg, const std::vector<int>& Ls, double t) {
  for (int L : Ls)
    if (cfg.L_fine % L != 0) throw ConfigError("grid.L_fine must be a multiple of every study.L_values entry");
  const auto rho0 = cfg.initial_densities();
  const FineReference ref = fine_reference(cfg.model(cfg.p_fine), rho0, cfg.d, cfg.L_fine, t, fine_dt(cfg));
  ConsistencyResult r;
  r.table.columns = {"L", "h", "err_l2", "err_h1"};
  for (int L : Ls) {
    const PeriodicGrid g(cfg.d, L);
    const HmflOperator op(g, cfg.model(cfg.p));
    IntegrateOptions opt;
    opt.dt = coarse_mf_dt(cfg, L);
    opt.store_every = std::numeric_limits<int>::max();
    MeanFieldState fin;
    integrate_hmfl(op, interpolate_all(rho0, g), t, opt, &fin);
    const auto exact = ref.at_coarse(t, g);
    double e2 = 0.0, eh = 0.0;
    for (std::size_t a = 0; a < exact.size(); ++a) {
      const GridField e = exact[a] - fin.rho[a];
      e2 = std::max(e2, lp_norm_h(e, Lp::two));
      eh = std::max(eh, one_sided_sobolev_norm_h(e, 1));
    }
    r.table.rows.push_back({double(L), g.h(), e2, eh});
  }
  r.l2 = fit_loglog(r.table.column("h"), r.table.column("err_l2"));
  r.h1 = fit_loglog(r.table.column("h"), r.table.column("err_h1"));
  return r;
}

QuadratureResult quadrature_study(const std::vector<int>& Ls) {
  // Analytic periodic integrand against a dense reference, and the constant function.
  auto f = [](std::span<const double> x) { return std::exp(std::sin(x[0])) * std::cos(2.0 * x[0]); };
  const double ref = quadrature_h(interpolate_Ih(f, PeriodicGrid(1, 4096)));
  QuadratureResult r;
  r.table.columns = {"L", "h", "err_smooth", "err_constant", "err_trig_poly"};
  for (int L : Ls) {
    const PeriodicGrid g(1, L);
    const double q1 = quadrature_h(GridField(g, 1.0));
    const double qf = quadrature_h(interpolate_Ih(f, g));
    // cos^2(3x) integrates exactly once L > 6
    const double qt = quadrature_h(
        interpolate_Ih([](std::span<const double> x) { return std::pow(std::cos(3.0 * x[0]), 2); }, g));
    r.table.rows.push_back({double(L), g.h(), std::abs(qf - ref), std::abs(q1 - kTwoPi), std::abs(qt - kPi)});
  }
  return r;
}

RateResult meanfield_rate_study(const ExperimentConfig& cfg, const std::vector<int>& Ns, int replicas,
                                int M_cut, double t, int threads) {
  if (2 * M_cut >= cfg.L_fine) throw ConfigError("study.M_cut must be below grid.L_fine / 2");
  const auto rho0 = cfg.initial_densities();
  const FineReference ref = fine_reference(cfg.model(cfg.p_fine), rho0, cfg.d, cfg.L_fine, t, fine_dt(cfg));
  const SpeciesFields rho_t = ref.at(t);
  const auto pot = cfg.potentials();
  const double s = -0.5 * cfg.d - 2.0;
  const int steps = aligned_steps(t, cfg.dt_particles, {});
  const double dt = t / steps;
  RateResult r;
  r.table.columns = {"N", "median", "mean", "q25", "q75"};
  for (int N : Ns) {
    std::vector<double> dist(static_cast<std::size_t>(replicas));
    for_each_replica(replicas, threads, [&](int k) {
      auto ens = sample(cfg, N, static_cast<std::uint32_t>(k));
      for (int n = 0; n < steps; ++n) step_interacting(ens, pot, dt, cfg.drift());
      dist[static_cast<std::size_t>(k)] = empirical_neg_sobolev(ens, rho_t, s, M_cut);
    });
    auto sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    auto quant = [&](double q) {
      const double pos = q * (sorted.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, sorted.size() - 1);
      return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
    };
    const double mean = std::accumulate(dist.begin(), dist.end(), 0.0) / dist.size();
    r.table.rows.push_back({double(N), quant(0.5), mean, quant(0.25), quant(0.75)});
  }
  r.fit = fit_loglog(r.table.column("N"), r.table.column("median"));
  return r;
}

double deposit_reproduction_error(int d, int p, int n_points, std::uint64_t seed) {
  const PeriodicGrid g(d, 16);
  const LagrangeDepositScheme scheme(d, p);
  RandomStream rng(seed, {0, 0, 0, 0, RngPurpose::test_data});
  // monomials of total degree <= p in coordinates relative to a point near the origin
  std::vector<std::vector<int>> exps;
  std::vector<int> e(static_cast<std::size_t>(d), 0);
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == d) {
      exps.push_back(e);
      return;
    }
    for (int k = 0; k <= left; ++k) {
      e[static_cast<std::size_t>(axis)] = k;
      rec(axis + 1, left - k);
    }
    e[static_cast<std::size_t>(axis)] = 0;
  };
  rec(0, p);
  double worst = 0.0;
  std::vector<double> y(static_cast<std::size_t>(d)), xk(y);
  for (int n = 0; n < n_points; ++n) {
    // stay away from the wrap so node coordinates are unambiguous
    for (auto& v : y) v = -1.0 + 2.0 * rng.uniform();
    GridField f(g);
    scheme.deposit(f, y, 1.0);
    for (const auto& ex : exps) {
      double acc = 0.0, target = 1.0;
      for (int l = 0; l < d; ++l) target *= std::pow(y[l], ex[l]);
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (f[k] == 0.0) continue;
        g.point(k, xk);
        double m = 1.0;
        for (int l = 0; l < d; ++l) m *= std::pow(xk[l], ex[l]);
        acc += f[k] * m;
      }
      worst = std::max(worst, std::abs(acc - target));
    }
  }
  return worst;
}

DepositConsistencyResult deposit_consistency_study(int p, const std::vector<int>& Ls, int N, int replicas,
                                                   std::uint64_t seed, int threads) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  const auto rho0 = cfg.initial_densities();
  const auto phi = [](std::span<const double> x) { return std::cos(x[0]); };
  const PeriodicGrid fine(1, 256);
  const double mean_exact = inner_product_h(interpolate_Ih(phi, fine), interpolate_Ih(rho0[0], fine));
  // particles shared by every h (common random numbers)
  std::vector<ParticleEnsemble> ens(static_cast<std::size_t>(replicas));
  std::vector<double> X(ens.size());
  for_each_replica(replicas, threads, [&](int r) {
    auto& e = ens[static_cast<std::size_t>(r)];
    e = sample(cfg, N, static_cast<std::uint32_t>(r));
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += phi(e.pos(0, i));
    X[static_cast<std::size_t>(r)] = std::sqrt(double(N)) * (s / N - mean_exact);
  });
  DepositConsistencyResult res;
  res.table.columns = {"L", "h", "mean_X2", "mean_Y2", "abs_diff", "se_diff"};
  for (int L : Ls) {
    const PeriodicGrid g(1, L);
    const LagrangeDepositScheme scheme(1, p);
    const auto phi_h = interpolate_Ih(phi, g);
    const double center = inner_product_h(phi_h, deposit_density(rho0[0], g, scheme));
    std::vector<double> diff(ens.size()), y2(ens.size());
    for_each_replica(replicas, threads, [&](int r) {
      const auto rho = deposit_particles(ens[static_cast<std::size_t>(r)], g, scheme);
      const double Y = std::sqrt(double(N)) * (inner_product_h(phi_h, rho[0]) - center);
      y2[static_cast<std::size_t>(r)] = Y * Y;
      diff[static_cast<std::size_t>(r)] = Y * Y - X[static_cast<std::size_t>(r)] * X[static_cast<std::size_t>(r)];
    });
    const double n = double(replicas);
    const double md = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
    double var = 0.0;
    for (double v : diff) var += (v - md) * (v - md);
    var /= (n - 1);
    double mx = 0.0;
    for (double v : X) mx += v * v;
    mx /= n;
    const double my = std::accumulate(y2.begin(), y2.end(), 0.0) / n;
    res.table.rows.push_back({double(L), g.h(), mx, my, std::abs(md), std::sqrt(var / n)});
  }
  res.fit = fit_loglog(res.table.column("h"), res.table.column("abs_diff"));
  res.max_reproduction_error = deposit_reproduction_error(1, p, 1000, seed);
  return res;
}

// ---------------------------------------------------------------------------

LawComparisonResult run_law_comparison(const ExperimentConfig& cfg, int threads) {
  const int R = cfg.replicas;
  if (R < 100) throw ConfigError("study.replicas must be at least 100 for compare-laws");
  const auto tests = tests_or_default(cfg);
  const int K = static_cast<int>(tests.size());
  const int nS = cfg.n_species;
  std::vector<double> marks;
  for (const auto& t : tests) {
    if (!(t.T > 0.0) || t.T > cfg.T + 1e-12) throw ConfigError("tests.functions[].T must lie in (0, meanfield.T]");
    marks.push_back(t.T);
  }
  const auto rho0 = cfg.initial_densities();
  const auto pot = cfg.potentials();
  const PeriodicGrid grid(cfg.d, cfg.L);

  // continuous centring
  const FineReference ref = fine_reference(cfg.model(cfg.p_fine), rho0, cfg.d, cfg.L_fine, cfg.T, fine_dt(cfg));
  std::vector<std::vector<SmoothFunction>> phis;
  std::vector<double> center_fine;
  for (const auto& t : tests) {
    phis.push_back(species_functions(t, nS));
    center_fine.push_back(pairing(interpolate_all(phis.back(), ref.grid), ref.at(t.T)));
  }

  // discrete centring
  auto mfl = [&](const MeanFieldModel& m) {
    const HmflOperator op(grid, m);
    IntegrateOptions opt;
    opt.dt = cfg.T / aligned_steps(cfg.T, coarse_mf_dt(cfg, cfg.L), marks);
    return integrate_hmfl(op, interpolate_all(rho0, grid), cfg.T, opt);
  };
  const MeanFieldModel model = cfg.model(cfg.p);
  MeanFieldModel model2 = model;
  for (auto& s : model2.sigma) s *= 2.0;
  const Trajectory rho_bar_h = mfl(model);
  const Trajectory rho_bar_h2 = mfl(model2);
  const HmflOperator op(grid, model), op2(grid, model2);
  std::vector<SpeciesFields> phi_h;
  for (const auto& f : phis) phi_h.push_back(interpolate_all(f, grid));

  const int p_steps = aligned_steps(cfg.T, cfg.dt_particles, marks);
  const double p_dt = cfg.T / p_steps;
  const auto p_marks = mark_steps(marks, p_dt);
  const int dk_steps = aligned_steps(cfg.T, cfg.dk_dt(cfg.L), marks);
  const double dk_dt = cfg.T / dk_steps;

  LawComparisonResult res;
  for (auto* s : {&res.particles_a, &res.particles_b, &res.dk, &res.dk_sigma2}) {
    s->K = K;
    s->data.assign(static_cast<std::size_t>(R) * K, 0.0);
  }
  std::vector<double> stop_time(static_cast<std::size_t>(R)), clamped(static_cast<std::size_t>(R));
  std::vector<std::string> trigger(static_cast<std::size_t>(R));

  auto particle_run = [&](std::uint32_t replica, double* out) {
    auto ens = sample(cfg, cfg.N, replica);
    for (int n = 0; n <= p_steps; ++n) {
      for (int k = 0; k < K; ++k)
        if (p_marks[static_cast<std::size_t>(k)] == n)
          out[k] = std::sqrt(double(cfg.N)) * (test_empirical(ens, phis[static_cast<std::size_t>(k)]) - center_fine[static_cast<std::size_t>(k)]);
      if (n < p_steps) step_interacting(ens, pot, p_dt, cfg.drift());
    }
  };

  for_each_replica(R, threads, [&](int r) {
    const auto ur = static_cast<std::uint32_t>(r);
    const auto row = static_cast<std::size_t>(r) * K;
    particle_run(ur, res.particles_a.data.data() + row);
    particle_run(kParticleBOffset + ur, res.particles_b.data.data() + row);

    const auto ens0 = sample(cfg, cfg.N, kDkInitOffset + ur);
    const auto dep = deposit_initial_data(ens0, rho0, grid, cfg.p);
    clamped[static_cast<std::size_t>(r)] = std::accumulate(dep.clamped.begin(), dep.clamped.end(), 0.0);

    DKPathOptions opt;
    opt.T = cfg.T;
    opt.dt = dk_dt;
    opt.snapshot_times = marks;
    opt.halt_on_stop = true;
    auto mon = make_monitor(cfg, cfg.N);
    const auto path = run_dk_path(op, dep.rho, cfg.N, cfg.seed, ur, opt, &mon, &rho_bar_h);
    stop_time[static_cast<std::size_t>(r)] = path.stopping_time;
    trigger[static_cast<std::size_t>(r)] = path.trigger;
    for (int k = 0; k < K; ++k) {
      const double Tk = marks[static_cast<std::size_t>(k)];
      const bool stopped = path.stopped_state && path.stopping_time < Tk;
      const auto& state = stopped ? *path.stopped_state : path.snapshots[static_cast<std::size_t>(k)];
      const double tk = stopped ? path.stopping_time : Tk;
      res.dk.data[row + k] = tested_fluctuation_grid(phi_h[static_cast<std::size_t>(k)], state, rho_bar_h.at(tk), cfg.N);
    }

    DKPathOptions opt2 = opt;
    opt2.halt_on_stop = false;
    const auto path2 = run_dk_path(op2, dep.rho, cfg.N, cfg.seed, ur, opt2);
    for (int k = 0; k < K; ++k)
      res.dk_sigma2.data[row + k] = tested_fluctuation_grid(
          phi_h[static_cast<std::size_t>(k)], path2.snapshots[static_cast<std::size_t>(k)],
          rho_bar_h.at(marks[static_cast<std::size_t>(k)]), cfg.N);
  });

  // the doubled-sigma system centred on its own mean-field limit (diagnostic)
  SampleSet self2 = res.dk_sigma2;
  for (int k = 0; k < K; ++k) {
    const double Tk = marks[static_cast<std::size_t>(k)];
    const double shift = std::sqrt(double(cfg.N)) *
                         (pairing(phi_h[static_cast<std::size_t>(k)], rho_bar_h.at(Tk)) -
                          pairing(phi_h[static_cast<std::size_t>(k)], rho_bar_h2.at(Tk)));
    for (int r = 0; r < R; ++r) self2.data[static_cast<std::size_t>(r) * K + k] += shift;
  }

  WeakDistanceConfig wc;
  wc.j = cfg.distance_j;
  wc.n_features = cfg.n_features;
  wc.n_bootstrap = cfg.n_bootstrap;
  wc.feature_scale = cfg.feature_scale;
  wc.dict_seed = cfg.seed * 0x9E3779B97F4A7C15ull + 17;
  res.d_particle_dk = estimate_weak_distance(res.particles_a, res.dk, wc);
  res.d_particle_sigma2 = estimate_weak_distance(res.particles_a, res.dk_sigma2, wc);
  res.d_particle_particle = estimate_weak_distance(res.particles_a, res.particles_b, wc);
  res.d_particle_sigma2_self = estimate_weak_distance(res.particles_a, self2, wc);

  int n_stopped = 0;
  for (double s : stop_time)
    if (s < cfg.T) ++n_stopped;
  res.stopped_fraction = {double(n_stopped) / R};

  const double se_a = std::hypot(res.d_particle_dk.se, res.d_particle_sigma2.se);
  const double se_b = std::hypot(res.d_particle_dk.se, res.d_particle_particle.se);
  const bool discriminates = res.d_particle_dk.value < res.d_particle_sigma2.value - 3.0 * se_a;
  const bool indistinguishable = res.d_particle_dk.value <= res.d_particle_particle.value + 3.0 * se_b;

  auto& rep = res.report;
  rep.study = "compare-laws";
  rep.audit = audit_for(cfg, cfg.N, cfg.L);
  json tj = json::array();
  for (const auto& t : tests) tj.push_back({{"mode", t.mode}, {"kind", t.is_sin ? "sin" : "cos"}, {"T", t.T}});
  rep.summary = {
      {"replicas", R},
      {"K", K},
      {"test_functions", tj},
      {"particle_dt", p_dt},
      {"dk_dt", dk_dt},
      {"distance_particle_dk", res.d_particle_dk.to_json()},
      {"distance_particle_dk_sigma2", res.d_particle_sigma2.to_json()},
      {"distance_particle_particle", res.d_particle_particle.to_json()},
      {"distance_particle_dk_sigma2_selfcentred", res.d_particle_sigma2_self.to_json()},
      {"coupling_cost_particle_dk", coupling_cost(res.particles_a, res.dk)},
      {"coupling_cost_particle_particle", coupling_cost(res.particles_a, res.particles_b)},
      {"dk_stopped_fraction", res.stopped_fraction[0]},
      {"discriminates_sigma2", discriminates},
      {"indistinguishable_from_sampling", indistinguishable},
  };
  Table dist;
  dist.columns = {"comparison", "value", "se"};
  int idx = 0;
  for (const auto* e : {&res.d_particle_dk, &res.d_particle_sigma2, &res.d_particle_particle, &res.d_particle_sigma2_self})
    dist.rows.push_back({double(idx++), e->value, e->se});
  rep.tables["distances"] = dist;
  rep.raw["particles_a.csv"] = samples_csv(res.particles_a);
  rep.raw["particles_b.csv"] = samples_csv(res.particles_b);
  rep.raw["dk.csv"] = samples_csv(res.dk);
  rep.raw["dk_sigma2.csv"] = samples_csv(res.dk_sigma2);
  std::ostringstream st;
  st << "replica,stopping_time,trigger,clamped_mass\n";
  for (int r = 0; r < R; ++r)
    st << r << ',' << fmt(stop_time[static_cast<std::size_t>(r)]) << ',' << trigger[static_cast<std::size_t>(r)] << ','
       << fmt(clamped[static_cast<std::size_t>(r)]) << '\n';
  rep.raw["dk_stopping.csv"] = st.str();
  rep.summary["distance_rows"] = {"particle-dk", "particle-dk_sigma2", "particle-particle", "particle-dk_sigma2_selfcentred"};
  return res;
}

StoppingResult run_stopping_stats(const ExperimentConfig& cfg, const std::vector<int>& Ns, int threads,
                                  const std::string& mode) {
  if (mode != "normal" && mode != "zero-noise" && mode != "hostile")
    throw ConfigError("study.mode must be normal, zero-noise or hostile");
  if (Ns.empty()) throw ConfigError("study.N_values must not be empty");
  const int R = cfg.replicas;
  if (R < 1) throw ConfigError("study.replicas must be positive");
  const auto rho0 = cfg.initial_densities();
  StoppingResult res;
  res.table.columns = {"N", "L", "h", "replicas", "stopped", "fraction", "se", "initial_gate", "linf", "sobolev"};
  auto& rep = res.report;
  rep.study = "stopping-stats";
  std::ostringstream raw;
  raw << "N,replica,stopping_time,trigger\n";
  json audits = json::array();
  for (std::size_t ni = 0; ni < Ns.size(); ++ni) {
    const int N = Ns[ni];
    const int L = cfg.L_values.size() == Ns.size() ? cfg.L_values[ni] : cfg.L;
    const PeriodicGrid grid(cfg.d, L);
    const HmflOperator op(grid, cfg.model(cfg.p));
    IntegrateOptions mo;
    mo.dt = cfg.T / aligned_steps(cfg.T, coarse_mf_dt(cfg, L), {});
    const auto rho_bar0 = interpolate_all(rho0, grid);
    const Trajectory rho_bar_h = integrate_hmfl(op, rho_bar0, cfg.T, mo);
    DKPathOptions opt;
    opt.T = cfg.T;
    opt.dt = cfg.T / aligned_steps(cfg.T, cfg.dk_dt(L), {});
    opt.halt_on_stop = true;
    std::vector<double> stop(static_cast<std::size_t>(R));
    std::vector<std::string> trig(static_cast<std::size_t>(R));
    for_each_replica(R, threads, [&](int r) {
      SpeciesFields init;
      double Npar = N;
      if (mode == "zero-noise") {
        init = rho_bar0;
        Npar = std::numeric_limits<double>::infinity();
      } else {
        const auto ens = sample(cfg, N, static_cast<std::uint32_t>(r));
        init = deposit_initial_data(ens, rho0, grid, cfg.p).rho;
        if (mode == "hostile") {
          const double bump = 1.0 / grid.cell_volume();
          init[0][0] += bump;
          init[0][grid.size() / 2] = std::max(0.0, init[0][grid.size() / 2] - bump);
        }
      }
      auto mon = make_monitor(cfg, N);
      const auto path = run_dk_path(op, init, Npar, cfg.seed, static_cast<std::uint32_t>(r), opt, &mon, &rho_bar_h);
      stop[static_cast<std::size_t>(r)] = path.stopping_time;
      trig[static_cast<std::size_t>(r)] = path.trigger;
    });
    int stopped = 0, gate = 0, linf = 0, sob = 0;
    for (int r = 0; r < R; ++r) {
      const auto& t = trig[static_cast<std::size_t>(r)];
      if (stop[static_cast<std::size_t>(r)] < cfg.T) ++stopped;
      gate += t == "initial-gate";
      linf += t == "linf";
      sob += t == "sobolev";
      raw << N << ',' << r << ',' << fmt(stop[static_cast<std::size_t>(r)]) << ',' << t << '\n';
    }
    const double f = double(stopped) / R;
    res.fractions.push_back(f);
    res.table.rows.push_back({double(N), double(L), grid.h(), double(R), double(stopped), f,
                              std::sqrt(f * (1.0 - f) / R), double(gate), double(linf), double(sob)});
    for (auto a : audit_for(cfg, N, L)) {
      a["N"] = N;
      a["L"] = L;
      audits.push_back(a);
    }
  }
  bool monotone = true;
  for (std::size_t i = 1; i < res.fractions.size(); ++i) monotone = monotone && res.fractions[i] <= res.fractions[i - 1];
  rep.audit = audits;
  rep.summary = {{"mode", mode}, {"fractions", res.fractions}, {"nonincreasing", monotone}, {"T", cfg.T}};
  rep.tables["stopping"] = res.table;
  rep.raw["stopping_times.csv"] = raw.str();
  return res;
}

StudyReport run_convergence_study(const std::string& kind, const ExperimentConfig& cfg, int threads) {
  StudyReport rep;
  rep.study = "convergence/" + kind;
  rep.audit = audit_for(cfg, cfg.N, cfg.L);
  auto Ls = [&](std::vector<int> def) { return cfg.L_values.empty() ? def : cfg.L_values; };
  if (kind == "operator-order") {
    const auto r = operator_order_study(cfg.p, Ls({16, 32, 64, 128}));
    rep.tables["operator_order"] = r.table;
    rep.summary = {{"p", cfg.p}, {"target", cfg.p + 1}, {"fit_partial", r.first.to_json()}, {"fit_second", r.second.to_json()}};
  } else if (kind == "mfl-consistency") {
    const auto r = mfl_consistency_study(cfg, Ls({16, 32, 64}), cfg.T);
    rep.tables["mfl_consistency"] = r.table;
    rep.summary = {{"p", cfg.p}, {"t", cfg.T}, {"target", cfg.p + 1}, {"fit_l2", r.l2.to_json()}, {"fit_h1", r.h1.to_json()}};
  } else if (kind == "quadrature") {
    const auto r = quadrature_study(Ls({8, 16, 32, 64}));
    rep.tables["quadrature"] = r.table;
    const auto c = r.table.column("err_constant");
    rep.summary = {{"max_err_constant", *std::max_element(c.begin(), c.end())}};
  } else if (kind == "meanfield-rate") {
    const auto Ns = cfg.N_values.empty() ? std::vector<int>{250, 1000, 4000} : cfg.N_values;
    const auto r = meanfield_rate_study(cfg, Ns, cfg.replicas, cfg.M_cut, cfg.T, threads);
    rep.tables["meanfield_rate"] = r.table;
    rep.summary = {{"t", cfg.T}, {"M_cut", cfg.M_cut}, {"s", -0.5 * cfg.d - 2.0}, {"target", -0.5}, {"fit", r.fit.to_json()}};
  } else if (kind == "deposit") {
    const int N = cfg.N_values.empty() ? 100 : cfg.N_values.front();
    const auto r = deposit_consistency_study(cfg.p, Ls({16, 32, 64}), N, cfg.replicas, cfg.seed, threads);
    rep.tables["deposit_consistency"] = r.table;
    rep.summary = {{"p", cfg.p}, {"N", N}, {"target", cfg.p + 1}, {"fit", r.fit.to_json()},
                   {"max_reproduction_error", r.max_reproduction_error}};
  } else {
    throw ConfigError("study.kind must be one of operator-order, mfl-consistency, quadrature, meanfield-rate, deposit");
  }
  for (const auto& [name, t] : rep.tables) rep.raw[name + "_points.csv"] = t.csv();
  return rep;
}

// ---------------------------------------------------------------------------

StudyReport simulate_particles(const ExperimentConfig& cfg, bool write_positions) {
  const auto pot = cfg.potentials();
  const auto tests = tests_or_default(cfg);
  const int steps = aligned_steps(cfg.T, cfg.dt_particles, {});
  const double dt = cfg.T / steps;
  auto ens = sample(cfg, cfg.N, 0);
  std::vector<std::vector<SmoothFunction>> phis;
  for (const auto& t : tests) phis.push_back(species_functions(t, cfg.n_species));
  Table obs;
  obs.columns = {"t"};
  for (std::size_t k = 0; k < tests.size(); ++k) obs.columns.push_back("phi" + std::to_string(k));
  const int every = std::max(1, steps / 200);
  for (int n = 0; n <= steps; ++n) {
    if (n % every == 0 || n == steps) {
      std::vector<double> row{ens.t};
      for (const auto& f : phis) row.push_back(test_empirical(ens, f));
      obs.rows.push_back(row);
    }
    if (n < steps) step_interacting(ens, pot, dt, cfg.drift());
  }
  for (double v : ens.x)
    if (!std::isfinite(v)) throw NumericalError("nan", "particle position is not finite");
  StudyReport rep;
  rep.study = "simulate-particles";
  rep.audit = audit_for(cfg, cfg.N, cfg.L);
  rep.summary = {{"N", cfg.N}, {"T", cfg.T}, {"dt", dt}, {"steps", steps}};
  rep.tables["observables"] = obs;
  std::ostringstream bin;
  write_particles_snapshot(bin, ens);
  rep.raw["particles_final.bin"] = bin.str();
  if (write_positions) {
    std::ostringstream csv;
    write_particles_csv(csv, ens);
    rep.raw["particles_final.csv"] = csv.str();
  }
  return rep;
}

StudyReport simulate_dk(const ExperimentConfig& cfg) {
  const auto rho0 = cfg.initial_densities();
  const PeriodicGrid grid(cfg.d, cfg.L);
  const HmflOperator op(grid, cfg.model(cfg.p));
  IntegrateOptions mo;
  mo.dt = cfg.T / aligned_steps(cfg.T, coarse_mf_dt(cfg, cfg.L), {});
  const Trajectory rho_bar = integrate_hmfl(op, interpolate_all(rho0, grid), cfg.T, mo);
  const auto ens = sample(cfg, cfg.N, kDkInitOffset);
  const auto dep = deposit_initial_data(ens, rho0, grid, cfg.p);
  DKPathOptions opt;
  opt.T = cfg.T;
  opt.dt = cfg.T / aligned_steps(cfg.T, cfg.dk_dt(cfg.L), {});
  opt.record_every = std::max(1, static_cast<int>(std::llround(cfg.T / opt.dt)) / 50);
  auto mon = make_monitor(cfg, cfg.N);
  const auto path = run_dk_path(op, dep.rho, cfg.N, cfg.seed, 0, opt, &mon, &rho_bar);
  StudyReport rep;
  rep.study = "simulate-dk";
  rep.audit = audit_for(cfg, cfg.N, cfg.L);
  rep.warnings = dep.warnings;
  Table hist;
  hist.columns = {"t", "linf", "neg_sobolev"};
  for (const auto& h : mon.history()) hist.rows.push_back({h.t, h.linf, h.neg_sobolev});
  rep.tables["monitor"] = hist;
  Table mass;
  mass.columns = {"t", "species", "mass", "min"};
  for (std::size_t i = 0; i < path.recorded.size(); ++i)
    for (std::size_t a = 0; a < path.recorded[i].size(); ++a)
      mass.rows.push_back({path.recorded_times[i], double(a), quadrature_h(path.recorded[i][a]), path.recorded[i][a].min()});
  rep.tables["mass"] = mass;
  double drift = 0.0;
  for (std::size_t a = 0; a < path.final_state.rho.size(); ++a) {
    drift = std::max(drift, std::abs(quadrature_h(path.final_state.rho[a]) - dep.mass[a]));
    rep.raw["rho_final_" + std::to_string(a) + ".bin"] = field_bin(path.final_state.rho[a]);
    if (cfg.d <= 2) rep.raw["rho_final_" + std::to_string(a) + ".csv"] = field_csv(path.final_state.rho[a]);
  }
  rep.summary = {{"N", cfg.N}, {"L", cfg.L}, {"dt", opt.dt}, {"stopping_time", path.stopping_time},
                 {"trigger", path.trigger}, {"max_mass_drift", drift}};
  return rep;
}

StudyReport simulate_mfl(const ExperimentConfig& cfg) {
  const PeriodicGrid grid(cfg.d, cfg.L);
  const HmflOperator op(grid, cfg.model(cfg.p));
  IntegrateOptions opt;
  const int steps = aligned_steps(cfg.T, coarse_mf_dt(cfg, cfg.L), {});
  opt.dt = cfg.T / steps;
  opt.store_every = std::max(1, steps / 100);
  MeanFieldState fin;
  const auto traj = integrate_hmfl(op, interpolate_all(cfg.initial_densities(), grid), cfg.T, opt, &fin);
  StudyReport rep;
  rep.study = "simulate-mfl";
  rep.audit = audit_for(cfg, cfg.N, cfg.L);
  Table tab;
  tab.columns = {"t", "species", "mass", "min", "max"};
  for (std::size_t i = 0; i < traj.size(); ++i)
    for (std::size_t a = 0; a < traj.state(i).size(); ++a) {
      const auto& u = traj.state(i)[a];
      tab.rows.push_back({traj.times()[i], double(a), quadrature_h(u), u.min(), u.max()});
    }
  rep.tables["trajectory"] = tab;
  for (std::size_t a = 0; a < fin.rho.size(); ++a) {
    rep.raw["rho_final_" + std::to_string(a) + ".bin"] = field_bin(fin.rho[a]);
    if (cfg.d <= 2) rep.raw["rho_final_" + std::to_string(a) + ".csv"] = field_csv(fin.rho[a]);
  }
  rep.summary = {{"L", cfg.L}, {"p", cfg.p}, {"dt", opt.dt}, {"steps", steps}, {"min", fin.min_value}, {"max", fin.max_value}};
  return rep;
}

StudyReport simulate_deposit(const ExperimentConfig& cfg) {
  const PeriodicGrid grid(cfg.d, cfg.L);
  const auto ens = sample(cfg, cfg.N, kDkInitOffset);
  const auto dep = deposit_initial_data(ens, cfg.initial_densities(), grid, cfg.p);
  StudyReport rep;
  rep.study = "deposit";
  rep.audit = audit_for(cfg, cfg.N, cfg.L);
  rep.warnings = dep.warnings;
  for (std::size_t a = 0; a < dep.rho.size(); ++a) {
    rep.raw["rho0_" + std::to_string(a) + ".bin"] = field_bin(dep.rho[a]);
    if (cfg.d <= 2) rep.raw["rho0_" + std::to_string(a) + ".csv"] = field_csv(dep.rho[a]);
  }
  rep.summary = {{"N", cfg.N}, {"L", cfg.L}, {"p", cfg.p}, {"mass", dep.mass}, {"clamped", dep.clamped},
                 {"reproduction_error", deposit_reproduction_error(cfg.d, cfg.p, 200, cfg.seed)}};
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<SelftestItem> run_selftest() {
  std::vector<SelftestItem> out;
  auto check = [&](const std::string& name, auto&& fn) {
    try {
      const auto [ok, detail] = fn();
      out.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      out.push_back({name, false, e.what()});
    }
  };
  using R = std::pair<bool, std::string>;

  check("quadrature of 1 is the torus volume", [] {
    const double q = quadrature_h(GridField(PeriodicGrid(2, 8), 1.0));
    return R{std::abs(q - kTwoPi * kTwoPi) < 1e-12, fmt(q)};
  });
  check("convolution with zero kernel", [] {
    const PeriodicGrid g(1, 16);
    const auto u = interpolate_Ih([](std::span<const double> x) { return std::cos(x[0]); }, g);
    return R{lp_norm_h(convolve_h(u, GridField(g)), Lp::inf) == 0.0, ""};
  });
  check("philox known answer", [] {
    const auto r = philox4x32_10({0, 0, 0, 0}, {0, 0});
    return R{r[0] == 0x6627e8d5u && r[1] == 0xe169c58du && r[2] == 0xbc57ac4cu && r[3] == 0x9b00dbd8u, ""};
  });
  check("sbp identity", [] {
    const PeriodicGrid g(1, 32);
    for (int p : {1, 3}) {
      const DiscreteOperatorSet ops(g, p);
      const auto u = interpolate_Ih([](std::span<const double> x) { return std::exp(std::sin(x[0])); }, g);
      const auto v = interpolate_Ih([](std::span<const double> x) { return std::cos(3 * x[0]) + x[0] * 0.0; }, g);
      const double lhs = inner_product_h(ops.second(u, 0), v);
      const double rhs = -inner_product_h(ops.sbp(u, 0), ops.sbp(v, 0));
      if (std::abs(lhs - rhs) > 1e-12) return R{false, "p=" + std::to_string(p)};
    }
    return R{true, ""};
  });
  check("zero potential gives zero drift", [] {
    const PotentialMatrix pot(1, 1, PotentialFamily::zero, 4.0, 1.0, {0.0});
    ParticleEnsemble e;
    e.N = 4;
    e.sigma = {1.0};
    e.x = {-1.0, 0.0, 0.5, 2.0};
    std::vector<double> d;
    interaction_drift(e, pot, DriftMethod::direct, d);
    return R{std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; }), ""};
  });
  check("dk step conserves mass", [] {
    ExperimentConfig cfg;
    const PeriodicGrid g(1, 16);
    const HmflOperator op(g, cfg.model(1));
    DKState st;
    st.rho = interpolate_all(cfg.initial_densities(), g);
    st.N = 100;
    st.seed = 3;
    const double m0 = quadrature_h(st.rho[0]);
    step_dk(op, st, 1e-3);
    return R{std::abs(quadrature_h(st.rho[0]) - m0) < 1e-12, ""};
  });
  check("identical sample sets are at distance 0", [] {
    SampleSet s;
    s.K = 2;
    RandomStream rng(5, {0, 0, 0, 0, RngPurpose::test_data});
    for (int i = 0; i < 200; ++i) s.data.push_back(rng.normal());
    WeakDistanceConfig wc;
    wc.n_features = 32;
    wc.n_bootstrap = 10;
    return R{estimate_weak_distance(s, s, wc).value == 0.0, ""};
  });
  check("hostile initial data trips the gate", [] {
    const PeriodicGrid g(1, 16);
    SpeciesFields f{GridField(g)};
    f[0][0] = 10.0;
    auto mon = StoppingMonitor::with_defaults(1000, 1, 0.12);
    mon.initialise(f);
    return R{mon.trigger_name() == "initial-gate" && mon.stopping_time() == 0.0, ""};
  });
  check("deposit weights sum to one", [] {
    for (int p : {1, 3}) {
      const LagrangeDepositScheme s(2, p);
      const std::vector<double> xi{0.3, 0.7};
      const auto w = s.weights(xi);
      if (std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) > 1e-12) return R{false, ""};
    }
    return R{true, ""};
  });
  check("deterministic fluctuation without noise", [] {
    ExperimentConfig cfg;
    const PeriodicGrid g(1, 16);
    const HmflOperator op(g, cfg.model(1));
    DKState st;
    st.rho = interpolate_all(cfg.initial_densities(), g);
    const auto inc = noise_increment(op, st, 1e-3);
    return R{lp_norm_h(inc[0], Lp::inf) == 0.0, ""};
  });
  return out;
}

}  // namespace dklab
