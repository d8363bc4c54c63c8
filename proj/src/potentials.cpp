#include "dklab/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "dklab/error.hpp"
#include "dklab/fft.hpp"

namespace dklab {

PotentialFamily parse_potential_family(const std::string& name) {
  if (name == "zero" || name == "none") return PotentialFamily::zero;
  if (name == "bump") return PotentialFamily::bump;
  if (name == "cosine") return PotentialFamily::cosine;
  throw ConfigError("potential.family: unknown family '" + name + "' (expected bump, cosine, zero)");
}

std::string to_string(PotentialFamily f) {
  switch (f) {
    case PotentialFamily::zero: return "zero";
    case PotentialFamily::bump: return "bump";
    case PotentialFamily::cosine: return "cosine";
  }
  return "?";
}

PotentialMatrix::PotentialMatrix(int d, int n_species, PotentialFamily family, double width,
                                 double r_I, std::vector<double> amplitudes)
    : d_(d), n_species_(n_species), family_(family), width_(width), r_I_(r_I),
      amp_(std::move(amplitudes)) {
  if (d < 1) throw ConfigError("potential: d must be >= 1");
  if (n_species < 1) throw ConfigError("potential: n_S must be >= 1");
  if (!(r_I > 0.0 && r_I <= 1.0)) throw ConfigError("potential.r_I must lie in (0, 1]");
  const auto nn = static_cast<std::size_t>(n_species * n_species);
  if (amp_.empty()) amp_.assign(nn, 1.0);
  if (amp_.size() != nn) throw ConfigError("potential.amplitudes must have n_S^2 entries");
  for (int a = 0; a < n_species; ++a)
    for (int b = 0; b < n_species; ++b)
      if (amplitude(a, b) != amplitude(b, a)) throw ConfigError("potential.amplitudes must be symmetric");
  if (family == PotentialFamily::bump) {
    if (!(width > 0.0)) throw ConfigError("potential.width must be positive");
    if (r_I * width >= kPi) throw ConfigError("potential: r_I * width must be < pi for the bump");
  }
  if (family == PotentialFamily::cosine && r_I != 1.0) {
    throw ConfigError("potential: the cosine family requires r_I = 1");
  }
  if (family == PotentialFamily::zero) std::fill(amp_.begin(), amp_.end(), 0.0);
}

PotentialMatrix PotentialMatrix::zero(int d, int n_species) {
  return PotentialMatrix(d, n_species, PotentialFamily::zero, 1.0, 1.0);
}

double PotentialMatrix::amplitude(int a, int b) const {
  return amp_[static_cast<std::size_t>(a * n_species_ + b)];
}

bool PotentialMatrix::is_zero(int a, int b) const {
  return family_ == PotentialFamily::zero || amplitude(a, b) == 0.0;
}

bool PotentialMatrix::is_zero() const {
  for (int a = 0; a < n_species_; ++a)
    for (int b = 0; b < n_species_; ++b)
      if (!is_zero(a, b)) return false;
  return true;
}

double PotentialMatrix::support_radius() const {
  if (family_ == PotentialFamily::bump) return r_I_ * width_;
  if (family_ == PotentialFamily::zero) return 0.0;
  return std::numeric_limits<double>::infinity();
}

double PotentialMatrix::shape(std::span<const double> u) const {
  double v = 1.0;
  for (int l = 0; l < d_; ++l) {
    const double s = u[l] / width_;
    if (std::abs(s) >= 1.0) return 0.0;
    v *= std::exp(-1.0 / (1.0 - s * s));
  }
  return v;
}

double PotentialMatrix::V(int a, int b, std::span<const double> x) const {
  if (is_zero(a, b)) return 0.0;
  const double c = amplitude(a, b);
  if (family_ == PotentialFamily::cosine) {
    double s = 0.0;
    for (int l = 0; l < d_; ++l) s += std::cos(x[l]);
    return c * s;
  }
  double u[8];
  for (int l = 0; l < d_; ++l) u[l] = wrap_coordinate(x[l]) / r_I_;
  return c * std::pow(r_I_, -d_) * shape({u, static_cast<std::size_t>(d_)});
}

double PotentialMatrix::dV(int a, int b, int l, std::span<const double> x) const {
  if (is_zero(a, b)) return 0.0;
  const double c = amplitude(a, b);
  if (family_ == PotentialFamily::cosine) return -c * std::sin(x[l]);
  double u[8];
  for (int k = 0; k < d_; ++k) u[k] = wrap_coordinate(x[k]) / r_I_;
  const double v = shape({u, static_cast<std::size_t>(d_)});
  if (v == 0.0) return 0.0;
  const double s = u[l] / width_;
  const double one = 1.0 - s * s;
  return c * std::pow(r_I_, -d_ - 1) * v * (-2.0 * s / (width_ * one * one));
}

void PotentialMatrix::gradV(int a, int b, std::span<const double> x, std::span<double> g) const {
  for (int l = 0; l < d_; ++l) g[l] = dV(a, b, l, x);
}

GridField PotentialMatrix::sample_V(int a, int b, const PeriodicGrid& grid) const {
  return interpolate_Ih([&](std::span<const double> x) { return V(a, b, x); }, grid);
}

GridField PotentialMatrix::sample_dV(int a, int b, int l, const PeriodicGrid& grid) const {
  return interpolate_Ih([&](std::span<const double> x) { return dV(a, b, l, x); }, grid);
}

// ---------------------------------------------------------------------------

InteractionKernels::InteractionKernels(const PotentialMatrix& pot, const PeriodicGrid& grid)
    : pot_(pot), grid_(grid) {
  if (pot.dim() != grid.dim()) throw GridMismatch("InteractionKernels: dimension mismatch");
  const int n = pot.species_count();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int l = 0; l < grid.dim(); ++l) kernels_.emplace_back(pot.sample_dV(a, b, l, grid));
}

const ConvolutionKernel& InteractionKernels::kernel(int a, int b, int l) const {
  return kernels_[static_cast<std::size_t>((a * pot_.species_count() + b) * grid_.dim() + l)];
}

GridField InteractionKernels::convolve(int a, int b, int l, const GridField& u) const {
  return kernel(a, b, l).apply(u);
}

bool InteractionKernels::is_zero(int a, int b) const { return pot_.is_zero(a, b); }

VectorField mean_field_drift_discrete(const InteractionKernels& k, const SpeciesFields& rho, int a) {
  const auto& g = k.grid();
  VectorField U(static_cast<std::size_t>(g.dim()), GridField(g));
  for (int b = 0; b < static_cast<int>(rho.size()); ++b) {
    if (k.is_zero(a, b)) continue;
    require_same_grid(rho[static_cast<std::size_t>(b)].grid(), g, "mean_field_drift");
    for (int l = 0; l < g.dim(); ++l) U[static_cast<std::size_t>(l)] += k.convolve(a, b, l, rho[static_cast<std::size_t>(b)]);
  }
  return U;
}

VectorField mean_field_drift_continuous(const InteractionKernels& fine, const SpeciesFields& rho_fine,
                                        int a) {
  return mean_field_drift_discrete(fine, rho_fine, a);
}

// ---------------------------------------------------------------------------

double RealMode::operator()(std::span<const double> x) const {
  double ph = 0.0;
  for (std::size_t l = 0; l < m.size(); ++l) ph += m[l] * x[l];
  return is_sin ? std::sin(ph) : std::cos(ph);
}

double RealMode::norm2() const {
  const double vol = std::pow(kTwoPi, static_cast<double>(m.size()));
  const bool zero = std::all_of(m.begin(), m.end(), [](int v) { return v == 0; });
  return zero ? vol : 0.5 * vol;
}

namespace {

bool in_half_space(const std::vector<int>& m) {
  for (int v : m) {
    if (v > 0) return true;
    if (v < 0) return false;
  }
  return false;
}

}  // namespace

std::vector<RealMode> real_fourier_basis(int d, int M_cut) {
  if (M_cut < 0) throw std::invalid_argument("real_fourier_basis: M_cut < 0");
  std::vector<RealMode> basis;
  basis.push_back({std::vector<int>(static_cast<std::size_t>(d), 0), false});
  const int side = 2 * M_cut + 1;
  long total = 1;
  for (int i = 0; i < d; ++i) total *= side;
  std::vector<int> m(static_cast<std::size_t>(d));
  for (long idx = 0; idx < total; ++idx) {
    long r = idx;
    for (int l = d - 1; l >= 0; --l) {
      m[static_cast<std::size_t>(l)] = static_cast<int>(r % side) - M_cut;
      r /= side;
    }
    if (!in_half_space(m)) continue;
    basis.push_back({m, false});
    basis.push_back({m, true});
  }
  return basis;
}

double SplitCoefficients::reconstruct(std::span<const double> x, std::span<const double> y) const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.value * e.y_mode(y) * e.x_mode(x);
  return s;
}

double SplitCoefficients::max_at_radius(double R) const {
  double best = 0.0;
  auto norm = [](const std::vector<int>& m) {
    double s = 0.0;
    for (int v : m) s += double(v) * v;
    return std::sqrt(s);
  };
  for (const auto& e : entries_) {
    const double r = norm(e.y_mode.m) + norm(e.x_mode.m);
    if (r >= R && r < R + 1.0) best = std::max(best, std::abs(e.value));
  }
  return best;
}

void SplitCoefficients::write_csv(std::ostream& os) const {
  os << "m,m_kind,n,n_kind,value\n";
  os.precision(17);
  auto put = [&os](const RealMode& r) {
    for (std::size_t i = 0; i < r.m.size(); ++i) os << (i ? ";" : "") << r.m[i];
    os << ',' << (r.is_sin ? "sin" : "cos");
  };
  for (const auto& e : entries_) {
    put(e.y_mode);
    os << ',';
    put(e.x_mode);
    os << ',' << e.value << '\n';
  }
}

SplitCoefficients compute_split_coefficients(const PotentialMatrix& pot, int a, int b, int l,
                                             int M_cut) {
  if (M_cut < 0) throw std::invalid_argument("compute_split_coefficients: M_cut < 0");
  const int d = pot.dim();
  std::vector<SplitEntry> entries;
  if (!pot.is_zero(a, b)) {
    const int Lq = std::max(4 * M_cut, 64);
    const PeriodicGrid gq(d, Lq);
    const auto c = fourier_coefficients(pot.sample_dV(a, b, l, gq));
    const double norm = std::pow(kTwoPi, -0.5 * d);
    std::vector<int> idx(static_cast<std::size_t>(d));
    for (const auto& mode : real_fourier_basis(d, M_cut)) {
      if (mode.is_sin) continue;
      for (int k = 0; k < d; ++k) idx[static_cast<std::size_t>(k)] = mode.m[static_cast<std::size_t>(k)];
      const auto cm = c[gq.ravel(idx)];
      const bool zero = mode.norm2() == std::pow(kTwoPi, d);
      if (zero) {
        if (cm.real() != 0.0) entries.push_back({mode, mode, norm * cm.real()});
        continue;
      }
      const double A = 2.0 * norm * cm.real();
      const double B = -2.0 * norm * cm.imag();
      const RealMode cs = mode;
      const RealMode sn{mode.m, true};
      if (A != 0.0) {
        entries.push_back({cs, cs, A});
        entries.push_back({sn, sn, A});
      }
      if (B != 0.0) {
        entries.push_back({cs, sn, B});
        entries.push_back({sn, cs, -B});
      }
    }
  }
  return SplitCoefficients(d, a, b, l, M_cut, std::move(entries));
}

SplitCoefficients compute_split_coefficients_quadrature(const PotentialMatrix& pot, int a, int b,
                                                        int l, int M_cut, int L_quad) {
  if (pot.dim() != 1) throw std::invalid_argument("quadrature split reference is 1-d only");
  if (M_cut < 0) throw std::invalid_argument("compute_split_coefficients: M_cut < 0");
  const PeriodicGrid g(1, L_quad);
  const auto basis = real_fourier_basis(1, M_cut);
  const auto n = g.size();
  const double h = g.h();
  std::vector<double> f(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double z = g.coordinate(static_cast<int>(i)) - g.coordinate(static_cast<int>(j));
      f[i * n + j] = pot.dV(a, b, l, std::span<const double>(&z, 1));
    }
  std::vector<SplitEntry> entries;
  for (const auto& ym : basis)
    for (const auto& xm : basis) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x = g.coordinate(static_cast<int>(i));
        const double bx = xm(std::span<const double>(&x, 1));
        for (std::size_t j = 0; j < n; ++j) {
          const double y = g.coordinate(static_cast<int>(j));
          s += f[i * n + j] * ym(std::span<const double>(&y, 1)) * bx;
        }
      }
      s *= h * h / (ym.norm2() * xm.norm2());
      if (std::abs(s) > 1e-13) entries.push_back({ym, xm, s});
    }
  return SplitCoefficients(1, a, b, l, M_cut, std::move(entries));
}

}  // namespace dklab
