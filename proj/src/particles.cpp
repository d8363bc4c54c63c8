#include "dklab/particles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dklab/error.hpp"
#include "dklab/rng.hpp"

namespace dklab {

double CosineDensity::operator()(std::span<const double> x) const {
  double v = 1.0;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    double ph = 0.0;
    for (int l = 0; l < d; ++l) ph += modes[k][static_cast<std::size_t>(l)] * x[l];
    v += amps[k] * std::cos(ph);
  }
  return v * std::pow(kTwoPi, -d);
}

double CosineDensity::sup_bound() const {
  double s = 1.0;
  for (double a : amps) s += std::abs(a);
  return s * std::pow(kTwoPi, -d);
}

double CosineDensity::min_bound() const {
  double s = 1.0;
  for (double a : amps) s -= std::abs(a);
  return s * std::pow(kTwoPi, -d);
}

ParticleEnsemble sample_initial_iid(int d, int N, const std::vector<double>& sigma,
                                    const std::vector<SmoothFunction>& rho0,
                                    const std::vector<double>& sup_bounds, std::uint64_t seed,
                                    std::uint32_t replica) {
  if (N < 1) throw ConfigError("particles.N must be >= 1");
  if (rho0.size() != sigma.size() || sup_bounds.size() != sigma.size()) {
    throw ConfigError("sample_initial_iid: one density, bound and sigma per species");
  }
  ParticleEnsemble ens;
  ens.d = d;
  ens.n_species = static_cast<int>(sigma.size());
  ens.N = N;
  ens.sigma = sigma;
  ens.seed = seed;
  ens.replica = replica;
  ens.x.resize(static_cast<std::size_t>(ens.n_species) * N * d);
  std::vector<double> y(static_cast<std::size_t>(d));
  for (int a = 0; a < ens.n_species; ++a) {
    const double sup = sup_bounds[static_cast<std::size_t>(a)];
    for (int i = 0; i < N; ++i) {
      RandomStream rng(seed, {replica, static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(i), 0,
                              RngPurpose::initial_positions});
      for (;;) {
        for (int l = 0; l < d; ++l) y[l] = -kPi + kTwoPi * rng.uniform();
        const double p = rho0[static_cast<std::size_t>(a)](y);
        if (p < 0.0) throw ConfigError("initial density is negative somewhere");
        if (p > sup * (1.0 + 1e-12)) throw ConfigError("initial density exceeds its sup bound");
        if (rng.uniform() * sup < p) break;
      }
      std::copy(y.begin(), y.end(), ens.pos(a, i).begin());
    }
  }
  return ens;
}

// ---------------------------------------------------------------------------

namespace {

inline double min_image(double z) {
  if (z >= kPi) return z - kTwoPi;
  if (z < -kPi) return z + kTwoPi;
  return z;
}

void drift_direct(const ParticleEnsemble& e, const PotentialMatrix& pot, std::vector<double>& out,
                  bool parallel) {
  const int d = e.d, N = e.N, nS = e.n_species;
  const double invN = 1.0 / N;
  const long total = static_cast<long>(nS) * N;
#pragma omp parallel for schedule(static) if (parallel)
  for (long ai = 0; ai < total; ++ai) {
    const int a = static_cast<int>(ai / N);
    const int i = static_cast<int>(ai % N);
    double z[8], acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    const auto xi = e.pos(a, i);
    for (int b = 0; b < nS; ++b) {
      if (pot.is_zero(a, b)) continue;
      for (int j = 0; j < N; ++j) {
        const auto xj = e.pos(b, j);
        for (int l = 0; l < d; ++l) z[l] = min_image(xi[l] - xj[l]);
        for (int l = 0; l < d; ++l) acc[l] += pot.dV(a, b, l, {z, static_cast<std::size_t>(d)});
      }
    }
    for (int l = 0; l < d; ++l) out[static_cast<std::size_t>(ai * d + l)] = -invN * acc[l];
  }
}

void drift_spectral(const ParticleEnsemble& e, const PotentialMatrix& pot, std::vector<double>& out) {
  // d_l V(z) = -c sin(z_l): sum_j sin(x_l - X_jl) = sin x_l C_l - cos x_l S_l.
  const int d = e.d, N = e.N, nS = e.n_species;
  std::vector<double> C(static_cast<std::size_t>(nS * d), 0.0), S(C);
  for (int b = 0; b < nS; ++b)
    for (int j = 0; j < N; ++j)
      for (int l = 0; l < d; ++l) {
        const double v = e.pos(b, j)[l];
        C[static_cast<std::size_t>(b * d + l)] += std::cos(v);
        S[static_cast<std::size_t>(b * d + l)] += std::sin(v);
      }
  for (int a = 0; a < nS; ++a)
    for (int i = 0; i < N; ++i)
      for (int l = 0; l < d; ++l) {
        const double v = e.pos(a, i)[l];
        double acc = 0.0;
        for (int b = 0; b < nS; ++b) {
          const double c = pot.amplitude(a, b);
          if (c == 0.0) continue;
          acc += -c * (std::sin(v) * C[static_cast<std::size_t>(b * d + l)] -
                       std::cos(v) * S[static_cast<std::size_t>(b * d + l)]);
        }
        out[(static_cast<std::size_t>(a) * N + i) * d + l] = -acc / N;
      }
}

int bin_count(const PotentialMatrix& pot) {
  const double R = pot.support_radius();
  if (!(R > 0.0) || !std::isfinite(R)) return 0;
  return static_cast<int>(std::floor(kTwoPi / R));
}

void drift_binned(const ParticleEnsemble& e, const PotentialMatrix& pot, std::vector<double>& out,
                  bool parallel) {
  const int d = e.d, N = e.N, nS = e.n_species;
  const int nc = bin_count(pot);
  const double cw = kTwoPi / nc;
  std::size_t ncell = 1;
  for (int l = 0; l < d; ++l) ncell *= static_cast<std::size_t>(nc);
  auto cell_coord = [&](double v) { return std::min(nc - 1, static_cast<int>((v + kPi) / cw)); };
  auto cell_of = [&](std::span<const double> p) {
    std::size_t c = 0;
    for (int l = 0; l < d; ++l) c = c * nc + static_cast<std::size_t>(cell_coord(p[l]));
    return c;
  };
  // Counting sort of particles into cells, per species.
  std::vector<std::vector<std::size_t>> start(static_cast<std::size_t>(nS)), order(static_cast<std::size_t>(nS));
  for (int b = 0; b < nS; ++b) {
    auto& st = start[static_cast<std::size_t>(b)];
    auto& od = order[static_cast<std::size_t>(b)];
    st.assign(ncell + 1, 0);
    std::vector<std::size_t> cells(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j) {
      cells[static_cast<std::size_t>(j)] = cell_of(e.pos(b, j));
      ++st[cells[static_cast<std::size_t>(j)] + 1];
    }
    for (std::size_t c = 0; c < ncell; ++c) st[c + 1] += st[c];
    od.resize(static_cast<std::size_t>(N));
    std::vector<std::size_t> fill(st.begin(), st.end() - 1);
    for (int j = 0; j < N; ++j) od[fill[cells[static_cast<std::size_t>(j)]]++] = static_cast<std::size_t>(j);
  }
  int nb = 1;
  for (int l = 0; l < d; ++l) nb *= 3;
  const double invN = 1.0 / N;
  const long total = static_cast<long>(nS) * N;
#pragma omp parallel for schedule(static) if (parallel)
  for (long ai = 0; ai < total; ++ai) {
    const int a = static_cast<int>(ai / N);
    const int i = static_cast<int>(ai % N);
    const auto xi = e.pos(a, i);
    int home[8];
    for (int l = 0; l < d; ++l) home[l] = cell_coord(xi[l]);
    double z[8], acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (int b = 0; b < nS; ++b) {
      if (pot.is_zero(a, b)) continue;
      const auto& st = start[static_cast<std::size_t>(b)];
      const auto& od = order[static_cast<std::size_t>(b)];
      for (int n = 0; n < nb; ++n) {
        int r = n;
        std::size_t c = 0;
        for (int l = 0; l < d; ++l) {
          int k = home[l] + (r % 3) - 1;
          r /= 3;
          k = (k + nc) % nc;
          c = c * nc + static_cast<std::size_t>(k);
        }
        for (std::size_t q = st[c]; q < st[c + 1]; ++q) {
          const auto xj = e.pos(b, static_cast<int>(od[q]));
          for (int l = 0; l < d; ++l) z[l] = min_image(xi[l] - xj[l]);
          for (int l = 0; l < d; ++l) acc[l] += pot.dV(a, b, l, {z, static_cast<std::size_t>(d)});
        }
      }
    }
    for (int l = 0; l < d; ++l) out[static_cast<std::size_t>(ai * d + l)] = -invN * acc[l];
  }
}

void add_noise_and_wrap(ParticleEnsemble& ens, const std::vector<double>& drift, double dt) {
  const int d = ens.d;
  for (int a = 0; a < ens.n_species; ++a) {
    const double amp = std::sqrt(2.0 * ens.sigma[static_cast<std::size_t>(a)] * dt);
    for (int i = 0; i < ens.N; ++i) {
      auto p = ens.pos(a, i);
      const std::size_t off = (static_cast<std::size_t>(a) * ens.N + i) * d;
      if (amp > 0.0) {
        RandomStream rng(ens.seed, {ens.replica, static_cast<std::uint32_t>(a),
                                    static_cast<std::uint32_t>(i), ens.step, RngPurpose::particle_noise});
        for (int l = 0; l < d; ++l) p[l] += drift[off + l] * dt + amp * rng.normal();
      } else {
        for (int l = 0; l < d; ++l) p[l] += drift[off + l] * dt;
      }
      for (int l = 0; l < d; ++l) p[l] = wrap_coordinate(p[l]);
    }
  }
  ens.t += dt;
  ++ens.step;
}

}  // namespace

void interaction_drift(const ParticleEnsemble& ens, const PotentialMatrix& pot, DriftMethod method,
                       std::vector<double>& out, bool parallel) {
  out.assign(ens.x.size(), 0.0);
  if (pot.is_zero()) return;
  if (method == DriftMethod::automatic) {
    if (pot.family() == PotentialFamily::cosine) method = DriftMethod::spectral;
    else if (bin_count(pot) >= 3) method = DriftMethod::binned;
    else method = DriftMethod::direct;
  }
  switch (method) {
    case DriftMethod::spectral:
      if (pot.family() != PotentialFamily::cosine) throw ConfigError("spectral drift needs the cosine family");
      drift_spectral(ens, pot, out);
      return;
    case DriftMethod::binned:
      if (bin_count(pot) < 3) throw ConfigError("binned drift needs support radius <= 2 pi / 3");
      drift_binned(ens, pot, out, parallel);
      return;
    default:
      drift_direct(ens, pot, out, parallel);
  }
}

void step_interacting(ParticleEnsemble& ens, const PotentialMatrix& pot, double dt, DriftMethod method) {
  if (!(dt > 0.0)) throw ConfigError("step_interacting: dt must be positive");
  std::vector<double> drift;
  interaction_drift(ens, pot, method, drift);
  add_noise_and_wrap(ens, drift, dt);
}

// ---------------------------------------------------------------------------

MeanFieldForce::MeanFieldForce(const PotentialMatrix& pot, const FineReference& ref)
    : pot_(pot), ref_(&ref), kernels_(pot, ref.grid) {}

void MeanFieldForce::drift(const ParticleEnsemble& ens, double t, std::vector<double>& out) const {
  out.assign(ens.x.size(), 0.0);
  if (pot_.is_zero()) return;
  const SpeciesFields rho = ref_->trajectory.at(t);
  const int d = ens.d, N = ens.N;
  if (pot_.family() == PotentialFamily::cosine) {
    const auto& g = ref_->grid;
    std::vector<double> C(rho.size() * d, 0.0), S(C);
    std::vector<double> y(static_cast<std::size_t>(d));
    for (std::size_t b = 0; b < rho.size(); ++b)
      for (std::size_t k = 0; k < g.size(); ++k) {
        g.point(k, y);
        for (int l = 0; l < d; ++l) {
          C[b * d + l] += g.cell_volume() * rho[b][k] * std::cos(y[l]);
          S[b * d + l] += g.cell_volume() * rho[b][k] * std::sin(y[l]);
        }
      }
    for (int a = 0; a < ens.n_species; ++a)
      for (int i = 0; i < N; ++i)
        for (int l = 0; l < d; ++l) {
          const double v = ens.pos(a, i)[l];
          double acc = 0.0;
          for (std::size_t b = 0; b < rho.size(); ++b) {
            const double c = pot_.amplitude(a, static_cast<int>(b));
            acc += -c * (std::sin(v) * C[b * d + l] - std::cos(v) * S[b * d + l]);
          }
          out[(static_cast<std::size_t>(a) * N + i) * d + l] = -acc;
        }
    return;
  }
  for (int a = 0; a < ens.n_species; ++a) {
    const VectorField U = mean_field_drift_continuous(kernels_, rho, a);
    for (int i = 0; i < N; ++i)
      for (int l = 0; l < d; ++l) {
        out[(static_cast<std::size_t>(a) * N + i) * d + l] = -sample_at(U[static_cast<std::size_t>(l)], ens.pos(a, i));
      }
  }
}

void step_auxiliary(ParticleEnsemble& ens, const MeanFieldForce& force, double dt) {
  if (!(dt > 0.0)) throw ConfigError("step_auxiliary: dt must be positive");
  if (ens.t > force.end_time() + 1e-9) throw std::out_of_range("step_auxiliary: mean-field trajectory ended");
  std::vector<double> drift;
  force.drift(ens, ens.t, drift);
  add_noise_and_wrap(ens, drift, dt);
}

// ---------------------------------------------------------------------------

double test_empirical(const ParticleEnsemble& ens, const std::vector<SmoothFunction>& phi) {
  double s = 0.0;
  for (int a = 0; a < ens.n_species; ++a) {
    double acc = 0.0;
    for (int i = 0; i < ens.N; ++i) acc += phi[static_cast<std::size_t>(a)](ens.pos(a, i));
    s += acc / ens.N;
  }
  return s;
}

double empirical_neg_sobolev(const ParticleEnsemble& ens, const SpeciesFields& rho_bar, double s,
                             int M_cut) {
  if (M_cut < 1) throw std::invalid_argument("empirical_neg_sobolev: M_cut must be >= 1");
  if (static_cast<int>(rho_bar.size()) != ens.n_species) throw GridMismatch("empirical_neg_sobolev: species count");
  const int d = ens.d;
  const int side = 2 * M_cut + 1;
  long total = 1;
  for (int l = 0; l < d; ++l) total *= side;
  const double norm = std::pow(kTwoPi, -0.5 * d);
  double acc = 0.0;
  std::vector<int> m(static_cast<std::size_t>(d));
  for (int a = 0; a < ens.n_species; ++a) {
    const auto& rb = rho_bar[static_cast<std::size_t>(a)];
    if (rb.grid().dim() != d || rb.grid().points_per_axis() / 2 <= M_cut) {
      throw GridMismatch("empirical_neg_sobolev: reference grid must resolve |xi| <= M_cut");
    }
    const auto coef = fourier_coefficients(rb);
    for (long c = 0; c < total; ++c) {
      long r = c;
      double m2 = 0.0;
      for (int l = d - 1; l >= 0; --l) {
        m[static_cast<std::size_t>(l)] = static_cast<int>(r % side) - M_cut;
        r /= side;
        m2 += double(m[static_cast<std::size_t>(l)]) * m[static_cast<std::size_t>(l)];
      }
      std::complex<double> emp = 0.0;
      for (int i = 0; i < ens.N; ++i) {
        const auto p = ens.pos(a, i);
        double ph = 0.0;
        for (int l = 0; l < d; ++l) ph += m[static_cast<std::size_t>(l)] * p[l];
        emp += std::polar(1.0, -ph);
      }
      emp *= norm / ens.N;
      const auto diff = emp - coef[rb.grid().ravel(m)];
      acc += std::pow(1.0 + m2, s) * std::norm(diff);
    }
  }
  return std::sqrt(acc);
}

void write_particles_csv(std::ostream& os, const ParticleEnsemble& ens) {
  os << "species,index";
  for (int l = 0; l < ens.d; ++l) os << ",x" << (l + 1);
  os << '\n';
  os.precision(17);
  for (int a = 0; a < ens.n_species; ++a)
    for (int i = 0; i < ens.N; ++i) {
      os << a << ',' << i;
      for (double v : ens.pos(a, i)) os << ',' << v;
      os << '\n';
    }
}

void write_particles_snapshot(std::ostream& os, const ParticleEnsemble& ens) {
  nlohmann::json h = {{"d", ens.d}, {"n_species", ens.n_species}, {"N", ens.N}, {"t", ens.t}, {"step", ens.step}};
  os << h.dump() << '\n';
  for (double v : ens.x) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
    os.write(bytes, 8);
  }
}

}  // namespace dklab
