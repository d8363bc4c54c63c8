#include "dklab/fluctuation_lab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include "dklab/error.hpp"
#include "dklab/rng.hpp"

namespace dklab {

namespace {

void cone_points(int d, int p, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == d) {
    out.push_back(cur);
    return;
  }
  const int used = std::accumulate(cur.begin(), cur.end(), 0);
  for (int k = 0; k + used <= p; ++k) {
    cur.push_back(k);
    cone_points(d, p, cur, out);
    cur.pop_back();
  }
}

double monomial(std::span<const double> x, const std::vector<int>& e) {
  double v = 1.0;
  for (std::size_t l = 0; l < e.size(); ++l) v *= std::pow(x[l], e[l]);
  return v;
}

}  // namespace

LagrangeDepositScheme::LagrangeDepositScheme(int d, int p) : d_(d), p_(p) {
  if (d < 1 || p < 0) throw std::invalid_argument("LagrangeDepositScheme: need d >= 1, p >= 0");
  std::vector<int> cur;
  cone_points(d, p, cur, points_);
  const auto n = static_cast<Eigen::Index>(points_.size());
  // V(i, k) = monomial_k(point_i); the exponents coincide with the cone points.
  Eigen::MatrixXd V(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> x(points_[static_cast<std::size_t>(i)].begin(), points_[static_cast<std::size_t>(i)].end());
    for (Eigen::Index k = 0; k < n; ++k) V(i, k) = monomial(x, points_[static_cast<std::size_t>(k)]);
  }
  const Eigen::MatrixXd inv = V.transpose().fullPivLu().inverse();
  inv_vt_.resize(static_cast<std::size_t>(n * n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < n; ++k) inv_vt_[static_cast<std::size_t>(i * n + k)] = inv(i, k);
}

std::vector<double> LagrangeDepositScheme::weights(std::span<const double> xi) const {
  const std::size_t n = points_.size();
  std::vector<double> m(n), w(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) m[k] = monomial(xi, points_[k]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) w[i] += inv_vt_[i * n + k] * m[k];
  return w;
}

void LagrangeDepositScheme::deposit(GridField& field, std::span<const double> y, double amount) const {
  const auto& g = field.grid();
  std::vector<int> base(static_cast<std::size_t>(d_)), idx(base);
  std::vector<double> xi(static_cast<std::size_t>(d_));
  for (int l = 0; l < d_; ++l) {
    const double s = (wrap_coordinate(y[l]) + kPi) / g.h();
    base[l] = static_cast<int>(std::floor(s));
    xi[l] = s - base[l];
  }
  const auto w = weights(xi);
  for (std::size_t q = 0; q < points_.size(); ++q) {
    for (int l = 0; l < d_; ++l) idx[l] = base[l] + points_[q][static_cast<std::size_t>(l)];
    field[g.ravel(idx)] += amount * w[q];
  }
}

SpeciesFields deposit_particles(const ParticleEnsemble& ens, const PeriodicGrid& grid,
                                const LagrangeDepositScheme& scheme) {
  SpeciesFields out;
  const double amount = 1.0 / (ens.N * grid.cell_volume());
  for (int a = 0; a < ens.n_species; ++a) {
    GridField f(grid);
    f.species = a;
    for (int i = 0; i < ens.N; ++i) scheme.deposit(f, ens.pos(a, i), amount);
    out.push_back(std::move(f));
  }
  return out;
}

GridField deposit_density(const SmoothFunction& f, const PeriodicGrid& grid,
                          const LagrangeDepositScheme& scheme) {
  using Gauss = boost::math::quadrature::gauss<double, 8>;
  std::vector<double> nodes, wts;
  for (std::size_t k = 0; k < Gauss::abscissa().size(); ++k) {
    const double x = Gauss::abscissa()[k], w = Gauss::weights()[k];
    nodes.push_back(0.5 * (1.0 - x));
    wts.push_back(0.5 * w);
    nodes.push_back(0.5 * (1.0 + x));
    wts.push_back(0.5 * w);
  }
  const int d = grid.dim();
  const int q = static_cast<int>(nodes.size());
  long nq = 1;
  for (int l = 0; l < d; ++l) nq *= q;
  GridField out(grid);
  std::vector<int> cell(static_cast<std::size_t>(d));
  std::vector<double> y(static_cast<std::size_t>(d));
  for (std::size_t c = 0; c < grid.size(); ++c) {
    grid.unravel(c, cell);
    for (long k = 0; k < nq; ++k) {
      long r = k;
      double w = 1.0;
      for (int l = d - 1; l >= 0; --l) {
        const int i = static_cast<int>(r % q);
        r /= q;
        y[l] = grid.coordinate(cell[l]) + nodes[static_cast<std::size_t>(i)] * grid.h();
        w *= wts[static_cast<std::size_t>(i)];
      }
      // sum of w over the cell is 1, i.e. h^{-d} times the cell integral.
      scheme.deposit(out, y, w * f(y));
    }
  }
  return out;
}

DepositResult deposit_initial_data(const ParticleEnsemble& ens, const std::vector<SmoothFunction>& rho_bar0,
                                   const PeriodicGrid& grid, int p, bool clamp) {
  const LagrangeDepositScheme scheme(grid.dim(), p);
  DepositResult res;
  res.rho = deposit_particles(ens, grid, scheme);
  for (int a = 0; a < ens.n_species; ++a) {
    auto& r = res.rho[static_cast<std::size_t>(a)];
    r -= deposit_density(rho_bar0[static_cast<std::size_t>(a)], grid, scheme);
    r += interpolate_Ih(rho_bar0[static_cast<std::size_t>(a)], grid);
    const double mass = quadrature_h(r);
    double neg = 0.0;
    if (clamp && r.min() < 0.0) {
      for (double& v : r.values()) {
        if (v < 0.0) {
          neg += -v * grid.cell_volume();
          v = 0.0;
        }
      }
      r *= mass / quadrature_h(r);
      res.warnings.push_back("species " + std::to_string(a) + ": clamped negative mass " + std::to_string(neg));
    }
    res.mass.push_back(quadrature_h(r));
    res.clamped.push_back(neg);
  }
  return res;
}

// ---------------------------------------------------------------------------

StoppingMonitor::StoppingMonitor(double N, int d, double eps, double delta)
    : N_(N), d_(d), l_(d / 2 + 1), eps_(eps), delta_(delta) {
  if (!(N > 0.0)) throw ConfigError("monitor: N must be positive");
  if (!(eps > 0.0) || !(delta > 0.0)) throw ConfigError("monitor: eps and delta must be positive");
}

StoppingMonitor StoppingMonitor::with_defaults(double N, int d, double delta0) {
  const double eps = delta0 / 8.0;
  return StoppingMonitor(N, d, eps, eps / 2.0);
}

double StoppingMonitor::linf_threshold() const { return std::pow(N_, -eps_); }
double StoppingMonitor::sobolev_threshold() const { return std::pow(N_, -0.5 + eps_); }
double StoppingMonitor::initial_linf_threshold() const { return std::pow(N_, -eps_ - delta_); }
double StoppingMonitor::initial_sobolev_threshold() const { return std::pow(N_, -0.5 + eps_ - delta_); }

namespace {

double max_norm(const SpeciesFields& f) {
  double m = 0.0;
  for (const auto& g : f) m = std::max(m, lp_norm_h(g, Lp::inf));
  return m;
}

double max_sobolev(const SpeciesFields& f, int s) {
  double m = 0.0;
  for (const auto& g : f) m = std::max(m, sobolev_norm_h(g, s));
  return m;
}

}  // namespace

void StoppingMonitor::initialise(const SpeciesFields& fluct0) {
  history_.clear();
  const double linf = max_norm(fluct0);
  const double hl = max_sobolev(fluct0, -l_);
  history_.push_back({0.0, linf, max_sobolev(fluct0, -2 * l_)});
  if (linf > initial_linf_threshold() || hl > initial_sobolev_threshold()) {
    status_ = Status::zeroed;
    stop_ = 0.0;
    trigger_ = "initial-gate";
    return;
  }
  status_ = Status::armed;
  trigger_ = "none";
}

void StoppingMonitor::observe(double t, const SpeciesFields& fluct) {
  if (status_ != Status::armed) return;
  const double linf = max_norm(fluct);
  const double hneg = max_sobolev(fluct, -2 * l_);
  history_.push_back({t, linf, hneg});
  if (linf >= linf_threshold()) {
    status_ = Status::triggered;
    stop_ = t;
    trigger_ = "linf";
  } else if (hneg >= sobolev_threshold()) {
    status_ = Status::triggered;
    stop_ = t;
    trigger_ = "sobolev";
  }
}

void StoppingMonitor::finish(double T) {
  if (status_ == Status::armed) {
    status_ = Status::finished;
    stop_ = T;
  }
}

// ---------------------------------------------------------------------------

double tested_fluctuation_grid(const SpeciesFields& phi, const SpeciesFields& rho,
                               const SpeciesFields& rho_bar, double N) {
  double s = 0.0;
  for (std::size_t a = 0; a < phi.size(); ++a) s += inner_product_h(phi[a], rho[a] - rho_bar[a]);
  return std::sqrt(N) * s;
}

double tested_fluctuation_particles(const ParticleEnsemble& ens, const std::vector<SmoothFunction>& phi,
                                    const SpeciesFields& rho_bar_fine) {
  double s = 0.0;
  for (int a = 0; a < ens.n_species; ++a) {
    const auto& f = phi[static_cast<std::size_t>(a)];
    double acc = 0.0;
    for (int i = 0; i < ens.N; ++i) acc += f(ens.pos(a, i));
    const auto& rb = rho_bar_fine[static_cast<std::size_t>(a)];
    s += acc / ens.N - inner_product_h(interpolate_Ih(f, rb.grid()), rb);
  }
  return std::sqrt(static_cast<double>(ens.N)) * s;
}

void write_samples_csv(std::ostream& os, const SampleSet& s) {
  os << "replica,k,value\n";
  os.precision(17);
  for (std::size_t r = 0; r < s.size(); ++r)
    for (int k = 0; k < s.K; ++k) os << r << ',' << k << ',' << s.row(r)[k] << '\n';
}

nlohmann::json WeakDistanceEstimate::to_json() const {
  return {{"value", value}, {"se", se}, {"j", j}, {"dict_seed", dict_seed},
          {"n_samples", {n_x, n_y}}, {"dictionary_size", dictionary_size}};
}

namespace {

struct Feature {
  std::vector<double> w;
  double b;
  double scale;
};

std::vector<double> sorted_rows(const SampleSet& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = s.row(a), rb = s.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  std::vector<double> out;
  out.reserve(s.data.size());
  for (auto i : idx) {
    const auto r = s.row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return out;
}

std::vector<Feature> build_dictionary(int K, const WeakDistanceConfig& cfg) {
  std::vector<Feature> dict;
  for (int f = 0; f < cfg.n_features; ++f) {
    RandomStream rng(cfg.dict_seed, {0, 0, static_cast<std::uint32_t>(f), 0, RngPurpose::features});
    Feature ft;
    double n2 = 0.0;
    for (int k = 0; k < K; ++k) {
      ft.w.push_back(cfg.feature_scale * rng.normal());
      n2 += ft.w.back() * ft.w.back();
    }
    ft.b = kTwoPi * rng.uniform();
    ft.scale = 1.0 / std::max(1.0, std::pow(std::sqrt(n2), cfg.j));
    dict.push_back(std::move(ft));
  }
  for (int k = 0; k < K; ++k)
    for (double a : cfg.ridge_frequencies)
      for (double b : {0.0, 0.5 * kPi}) {
        Feature ft;
        ft.w.assign(static_cast<std::size_t>(K), 0.0);
        ft.w[static_cast<std::size_t>(k)] = a;
        ft.b = b;
        ft.scale = 1.0 / std::max(1.0, std::pow(std::abs(a), cfg.j));
        dict.push_back(std::move(ft));
      }
  return dict;
}

// F[f * n + i] = psi_f(row i)
std::vector<double> feature_matrix(const std::vector<Feature>& dict, const std::vector<double>& rows, int K) {
  const std::size_t n = rows.size() / static_cast<std::size_t>(K);
  std::vector<double> F(dict.size() * n);
  const long nf = static_cast<long>(dict.size());
#pragma omp parallel for schedule(static)
  for (long f = 0; f < nf; ++f) {
    const auto& ft = dict[static_cast<std::size_t>(f)];
    for (std::size_t i = 0; i < n; ++i) {
      double ph = ft.b;
      for (int k = 0; k < K; ++k) ph += ft.w[static_cast<std::size_t>(k)] * rows[i * K + k];
      F[static_cast<std::size_t>(f) * n + i] = ft.scale * std::cos(ph);
    }
  }
  return F;
}

}  // namespace

WeakDistanceEstimate estimate_weak_distance(const SampleSet& X, const SampleSet& Y,
                                            const WeakDistanceConfig& cfg) {
  if (X.size() == 0 || Y.size() == 0) throw std::invalid_argument("estimate_weak_distance: empty samples");
  if (X.K != Y.K) throw std::invalid_argument("estimate_weak_distance: dimension mismatch");
  if (cfg.j < 0) throw std::invalid_argument("estimate_weak_distance: j must be >= 0");
  const int K = X.K;
  const auto dict = build_dictionary(K, cfg);
  const auto rx = sorted_rows(X), ry = sorted_rows(Y);
  const std::size_t nx = X.size(), ny = Y.size(), nf = dict.size();
  const auto FX = feature_matrix(dict, rx, K);
  const auto FY = feature_matrix(dict, ry, K);

  WeakDistanceEstimate est;
  est.j = cfg.j;
  est.dict_seed = cfg.dict_seed;
  est.n_x = nx;
  est.n_y = ny;
  est.dictionary_size = nf;
  for (std::size_t f = 0; f < nf; ++f) {
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < nx; ++i) sx += FX[f * nx + i];
    for (std::size_t i = 0; i < ny; ++i) sy += FY[f * ny + i];
    est.value = std::max(est.value, std::abs(sx / nx - sy / ny));
  }

  const int B = cfg.n_bootstrap;
  if (B > 1) {
    std::vector<double> stats(static_cast<std::size_t>(B));
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < B; ++b) {
      std::vector<double> cx(nx, 0.0), cy(ny, 0.0);
      RandomStream gx(cfg.dict_seed, {static_cast<std::uint32_t>(b), 1, 0, 0, RngPurpose::bootstrap});
      RandomStream gy(cfg.dict_seed, {static_cast<std::uint32_t>(b), 2, 0, 0, RngPurpose::bootstrap});
      for (std::size_t i = 0; i < nx; ++i) cx[std::min(nx - 1, static_cast<std::size_t>(gx.uniform() * nx))] += 1.0;
      for (std::size_t i = 0; i < ny; ++i) cy[std::min(ny - 1, static_cast<std::size_t>(gy.uniform() * ny))] += 1.0;
      double best = 0.0;
      for (std::size_t f = 0; f < nf; ++f) {
        double sx = 0.0, sy = 0.0;
        for (std::size_t i = 0; i < nx; ++i) sx += cx[i] * FX[f * nx + i];
        for (std::size_t i = 0; i < ny; ++i) sy += cy[i] * FY[f * ny + i];
        best = std::max(best, std::abs(sx / nx - sy / ny));
      }
      stats[static_cast<std::size_t>(b)] = best;
    }
    const double mean = std::accumulate(stats.begin(), stats.end(), 0.0) / B;
    double var = 0.0;
    for (double s : stats) var += (s - mean) * (s - mean);
    est.se = std::sqrt(var / (B - 1));
  }
  return est;
}

double coupling_cost(const SampleSet& X, const SampleSet& Y) {
  if (X.size() != Y.size() || X.K != Y.K) throw std::invalid_argument("coupling_cost: equal sizes required");
  const auto rx = sorted_rows(X), ry = sorted_rows(Y);
  const std::size_t n = X.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (int k = 0; k < X.K; ++k) {
      const double z = rx[i * X.K + k] - ry[i * X.K + k];
      d2 += z * z;
    }
    s += std::sqrt(d2);
  }
  return s / static_cast<double>(n);
}

}  // namespace dklab
