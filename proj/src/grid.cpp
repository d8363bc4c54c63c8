#include "dklab/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dklab/error.hpp"
#include "dklab/fft.hpp"

namespace dklab {

double wrap_coordinate(double x) {
  double y = std::fmod(x + kPi, kTwoPi);
  if (y < 0) y += kTwoPi;
  y -= kPi;
  // fmod can land exactly on +pi after the shift for inputs just below -pi.
  if (y >= kPi) y -= kTwoPi;
  return y;
}

PeriodicGrid::PeriodicGrid(int d, int L) : d_(d), L_(L), n_(1) {
  if (d < 1) throw std::invalid_argument("PeriodicGrid: dimension must be >= 1");
  if (L <= 0 || L % 2 != 0) throw std::invalid_argument("PeriodicGrid: L must be even and positive");
  for (int i = 0; i < d; ++i) n_ *= static_cast<std::size_t>(L);
}

double PeriodicGrid::cell_volume() const { return std::pow(h(), d_); }

std::size_t PeriodicGrid::stride(int axis) const {
  std::size_t s = 1;
  for (int a = axis + 1; a < d_; ++a) s *= static_cast<std::size_t>(L_);
  return s;
}

int PeriodicGrid::axis_index(std::size_t flat, int axis) const {
  return static_cast<int>((flat / stride(axis)) % static_cast<std::size_t>(L_));
}

std::size_t PeriodicGrid::ravel(std::span<const int> idx) const {
  std::size_t flat = 0;
  for (int a = 0; a < d_; ++a) {
    int i = idx[a] % L_;
    if (i < 0) i += L_;
    flat = flat * static_cast<std::size_t>(L_) + static_cast<std::size_t>(i);
  }
  return flat;
}

void PeriodicGrid::unravel(std::size_t flat, std::span<int> idx) const {
  for (int a = d_ - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(flat % static_cast<std::size_t>(L_));
    flat /= static_cast<std::size_t>(L_);
  }
}

void PeriodicGrid::point(std::size_t flat, std::span<double> x) const {
  for (int a = d_ - 1; a >= 0; --a) {
    x[a] = coordinate(static_cast<int>(flat % static_cast<std::size_t>(L_)));
    flat /= static_cast<std::size_t>(L_);
  }
}

std::vector<double> PeriodicGrid::point(std::size_t flat) const {
  std::vector<double> x(static_cast<std::size_t>(d_));
  point(flat, x);
  return x;
}

std::size_t PeriodicGrid::nearest_index(std::span<const double> x) const {
  std::size_t flat = 0;
  for (int a = 0; a < d_; ++a) {
    const double y = wrap_coordinate(x[a]);
    long i = std::lround((y + kPi) / h());
    i %= L_;
    if (i < 0) i += L_;
    flat = flat * static_cast<std::size_t>(L_) + static_cast<std::size_t>(i);
  }
  return flat;
}

// ---------------------------------------------------------------------------

GridField::GridField(const PeriodicGrid& grid, double value)
    : grid_(grid), values_(grid.size(), value) {}

GridField::GridField(const PeriodicGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw std::invalid_argument("GridField: value count != L^d");
}

bool GridField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double GridField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double GridField::max() const { return *std::max_element(values_.begin(), values_.end()); }

GridField& GridField::operator+=(const GridField& o) { return axpy(1.0, o); }
GridField& GridField::operator-=(const GridField& o) { return axpy(-1.0, o); }

GridField& GridField::operator*=(double a) {
  for (double& v : values_) v *= a;
  return *this;
}

GridField& GridField::axpy(double a, const GridField& o) {
  require_same_grid(grid_, o.grid_, "axpy");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * o.values_[i];
  return *this;
}

GridField operator+(GridField a, const GridField& b) { return a += b; }
GridField operator-(GridField a, const GridField& b) { return a -= b; }
GridField operator*(double a, GridField b) { return b *= a; }

GridField hadamard(const GridField& a, const GridField& b) {
  require_same_grid(a.grid(), b.grid(), "hadamard");
  GridField r(a.grid());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = a[i] * b[i];
  return r;
}

void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b, const char* what) {
  if (!(a == b)) {
    throw GridMismatch(std::string(what) + ": grid mismatch (d=" + std::to_string(a.dim()) +
                       ",L=" + std::to_string(a.points_per_axis()) + " vs d=" +
                       std::to_string(b.dim()) + ",L=" + std::to_string(b.points_per_axis()) + ")");
  }
}

// ---------------------------------------------------------------------------

double inner_product_h(const GridField& u, const GridField& v) {
  require_same_grid(u.grid(), v.grid(), "inner_product_h");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s * u.grid().cell_volume();
}

double inner_product_h(const VectorField& u, const VectorField& v) {
  if (u.size() != v.size()) throw GridMismatch("inner_product_h: component count mismatch");
  double s = 0.0;
  for (std::size_t l = 0; l < u.size(); ++l) s += inner_product_h(u[l], v[l]);
  return s;
}

double quadrature_h(const GridField& u) {
  double s = 0.0;
  for (double v : u.values()) s += v;
  return s * u.grid().cell_volume();
}

double lp_norm_h(const GridField& u, Lp p) {
  switch (p) {
    case Lp::one: {
      double s = 0.0;
      for (double v : u.values()) s += std::abs(v);
      return s * u.grid().cell_volume();
    }
    case Lp::two: {
      double s = 0.0;
      for (double v : u.values()) s += v * v;
      return std::sqrt(s * u.grid().cell_volume());
    }
    case Lp::inf: {
      double m = 0.0;
      for (double v : u.values()) m = std::max(m, std::abs(v));
      return m;
    }
  }
  return 0.0;
}

GridField interpolate_Ih(const SmoothFunction& f, const PeriodicGrid& grid) {
  GridField r(grid);
  std::vector<double> x(static_cast<std::size_t>(grid.dim()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid.point(i, x);
    r[i] = f(x);
  }
  return r;
}

// ---------------------------------------------------------------------------

int mode_of_index(int k, int L) { return k < L / 2 ? k : k - L; }

namespace {

// (-1)^{|m|_1} from the grid origin at -pi.
double origin_phase(const PeriodicGrid& g, std::size_t flat) {
  int parity = 0;
  std::size_t f = flat;
  const int L = g.points_per_axis();
  for (int a = 0; a < g.dim(); ++a) {
    parity += mode_of_index(static_cast<int>(f % static_cast<std::size_t>(L)), L);
    f /= static_cast<std::size_t>(L);
  }
  return (parity % 2 == 0) ? 1.0 : -1.0;
}

double mode_norm2(const PeriodicGrid& g, std::size_t flat) {
  const int L = g.points_per_axis();
  double m2 = 0.0;
  for (int a = 0; a < g.dim(); ++a) {
    const double m = mode_of_index(static_cast<int>(flat % static_cast<std::size_t>(L)), L);
    m2 += m * m;
    flat /= static_cast<std::size_t>(L);
  }
  return m2;
}

}  // namespace

std::vector<std::complex<double>> fourier_coefficients(const GridField& u) {
  const auto& g = u.grid();
  auto c = fft::forward_real(g.dim(), g.points_per_axis(), u.values());
  const double scale = g.cell_volume() * std::pow(kTwoPi, -0.5 * g.dim());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= scale * origin_phase(g, i);
  return c;
}

GridField from_fourier_coefficients(const PeriodicGrid& grid,
                                    std::span<const std::complex<double>> coeffs) {
  std::vector<std::complex<double>> c(coeffs.begin(), coeffs.end());
  const double scale = grid.cell_volume() * std::pow(kTwoPi, -0.5 * grid.dim());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= origin_phase(grid, i) / scale;
  return GridField(grid, fft::inverse_to_real(grid.dim(), grid.points_per_axis(), c));
}

double sobolev_norm_h(const GridField& u, int s) {
  const auto c = fourier_coefficients(u);
  double acc = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    acc += std::pow(1.0 + mode_norm2(u.grid(), i), s) * std::norm(c[i]);
  }
  return std::sqrt(acc);
}

GridField one_sided_difference(const GridField& u, int axis) {
  return apply_stencil(Stencil{{0, 1}, {-1.0 / u.grid().h(), 1.0 / u.grid().h()}}, u, axis);
}

double one_sided_sobolev_norm_h(const GridField& u, int s) {
  if (s < 0) throw std::invalid_argument("one_sided_sobolev_norm_h: s must be >= 0");
  // Breadth-first over multi-indices nu with |nu| <= s; differences commute, so
  // only sorted axis sequences are needed.
  double best = lp_norm_h(u, Lp::two);
  struct Node {
    GridField f;
    int last_axis;
  };
  std::vector<Node> level{{u, 0}};
  for (int order = 1; order <= s; ++order) {
    std::vector<Node> next;
    for (const auto& n : level) {
      for (int a = n.last_axis; a < u.grid().dim(); ++a) {
        GridField g = one_sided_difference(n.f, a);
        best = std::max(best, lp_norm_h(g, Lp::two));
        next.push_back({std::move(g), a});
      }
    }
    level = std::move(next);
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

// The field index holding the coordinate difference x_i - y_j is (i - j + L/2) mod L
// per axis; FFT circular convolution gives index (i - j), hence the half shift.
GridField shift_half(const PeriodicGrid& g, const std::vector<double>& w, double scale) {
  GridField r(g);
  const int L = g.points_per_axis();
  std::vector<int> idx(static_cast<std::size_t>(g.dim()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.unravel(i, idx);
    for (int& k : idx) k += L / 2;
    r[i] = scale * w[g.ravel(idx)];
  }
  return r;
}

}  // namespace

GridField convolve_h(const GridField& u, const GridField& v) {
  require_same_grid(u.grid(), v.grid(), "convolve_h");
  return ConvolutionKernel(v).apply(u);
}

GridField convolve_h_direct(const GridField& u, const GridField& v) {
  require_same_grid(u.grid(), v.grid(), "convolve_h_direct");
  const auto& g = u.grid();
  const int d = g.dim();
  GridField r(g);
  std::vector<double> x(static_cast<std::size_t>(d)), y(x), z(x);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      g.point(j, y);
      for (int a = 0; a < d; ++a) z[a] = x[a] - y[a];
      s += u[j] * v[g.nearest_index(z)];
    }
    r[i] = s * g.cell_volume();
  }
  return r;
}

ConvolutionKernel::ConvolutionKernel(const GridField& kernel) : grid_(kernel.grid()) {
  zero_ = std::all_of(kernel.values().begin(), kernel.values().end(),
                      [](double v) { return v == 0.0; });
  spectrum_ = fft::forward_real(grid_.dim(), grid_.points_per_axis(), kernel.values());
}

GridField ConvolutionKernel::apply(const GridField& u) const {
  require_same_grid(u.grid(), grid_, "ConvolutionKernel::apply");
  if (zero_) return GridField(grid_);
  auto uh = fft::forward_real(grid_.dim(), grid_.points_per_axis(), u.values());
  for (std::size_t i = 0; i < uh.size(); ++i) uh[i] *= spectrum_[i];
  const auto w = fft::inverse_to_real(grid_.dim(), grid_.points_per_axis(), uh);
  return shift_half(grid_, w, grid_.cell_volume());
}

// ---------------------------------------------------------------------------

int Stencil::width() const {
  int w = 0;
  for (int o : offsets) w = std::max(w, std::abs(o));
  return w;
}

std::complex<double> Stencil::symbol(double theta) const {
  std::complex<double> s = 0.0;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    s += coeffs[k] * std::polar(1.0, offsets[k] * theta);
  }
  return s;
}

Stencil Stencil::adjoint() const {
  Stencil a = *this;
  for (int& o : a.offsets) o = -o;
  return a;
}

GridField apply_stencil(const Stencil& s, const GridField& u, int axis) {
  const auto& g = u.grid();
  const int L = g.points_per_axis();
  if (axis < 0 || axis >= g.dim()) throw std::invalid_argument("apply_stencil: bad axis");
  if (L <= 2 * s.width()) throw std::invalid_argument("apply_stencil: L too small for stencil");
  const std::size_t st = g.stride(axis);
  GridField r(g);
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i) {
    const int ia = static_cast<int>((i / st) % static_cast<std::size_t>(L));
    const std::size_t base = i - static_cast<std::size_t>(ia) * st;
    double acc = 0.0;
    for (std::size_t k = 0; k < s.offsets.size(); ++k) {
      int j = ia + s.offsets[k];
      if (j < 0) j += L;
      if (j >= L) j -= L;
      acc += s.coeffs[k] * u[base + static_cast<std::size_t>(j) * st];
    }
    r[i] = acc;
  }
  return r;
}

namespace {

// -D^T D as an explicit stencil.
Stencil negative_gram(const Stencil& D) {
  const int w = D.width();
  Stencil r;
  for (int m = -2 * w; m <= 2 * w; ++m) {
    double s = 0.0;
    for (std::size_t a = 0; a < D.offsets.size(); ++a) {
      for (std::size_t b = 0; b < D.offsets.size(); ++b) {
        if (D.offsets[b] - D.offsets[a] == m) s += D.coeffs[a] * D.coeffs[b];
      }
    }
    if (s != 0.0) {
      r.offsets.push_back(m);
      r.coeffs.push_back(-s);
    }
  }
  return r;
}

}  // namespace

DiscreteOperatorSet::DiscreteOperatorSet(const PeriodicGrid& grid, int order)
    : grid_(grid), order_(order) {
  const double h = grid.h();
  if (order == 1) {
    partial_ = Stencil{{-1, 1}, {-0.5 / h, 0.5 / h}};
    sbp_ = Stencil{{0, 1}, {-1.0 / h, 1.0 / h}};
  } else if (order == 3) {
    partial_ = Stencil{{-2, -1, 1, 2}, {1.0 / (12 * h), -8.0 / (12 * h), 8.0 / (12 * h), -1.0 / (12 * h)}};
    // Fejer-Riesz factor of the five-point fourth-order second difference:
    // 30 - 32 cos t + 2 cos 2t = 4 (1 - cos t)(7 - cos t) = 2 |e^{it} - 1|^2 |a + b e^{it}|^2 / 1
    // with 2ab = -1, a^2 + b^2 = 7.
    const double a = (std::sqrt(8.0) + std::sqrt(6.0)) / 2.0;
    const double b = (std::sqrt(6.0) - std::sqrt(8.0)) / 2.0;
    const double c = 1.0 / (std::sqrt(6.0) * h);
    sbp_ = Stencil{{0, 1, 2}, {-a * c, (a - b) * c, b * c}};
  } else {
    throw std::invalid_argument("DiscreteOperatorSet: supported orders are p = 1 and p = 3");
  }
  second_ = negative_gram(sbp_);
  const int w = std::max({partial_.width(), sbp_.width(), second_.width()});
  if (grid.points_per_axis() <= 2 * w) {
    throw std::invalid_argument("DiscreteOperatorSet: L too small for stencil");
  }
}

GridField DiscreteOperatorSet::partial(const GridField& u, int axis) const {
  require_same_grid(u.grid(), grid_, "partial");
  return apply_stencil(partial_, u, axis);
}

GridField DiscreteOperatorSet::partial_adjoint(const GridField& u, int axis) const {
  require_same_grid(u.grid(), grid_, "partial_adjoint");
  return apply_stencil(partial_.adjoint(), u, axis);
}

GridField DiscreteOperatorSet::sbp(const GridField& u, int axis) const {
  require_same_grid(u.grid(), grid_, "sbp");
  return apply_stencil(sbp_, u, axis);
}

GridField DiscreteOperatorSet::second(const GridField& u, int axis) const {
  require_same_grid(u.grid(), grid_, "second");
  return apply_stencil(second_, u, axis);
}

GridField DiscreteOperatorSet::laplacian(const GridField& u) const {
  GridField r = second(u, 0);
  for (int a = 1; a < grid_.dim(); ++a) r += second(u, a);
  return r;
}

VectorField DiscreteOperatorSet::gradient(const GridField& u) const {
  VectorField g;
  g.reserve(static_cast<std::size_t>(grid_.dim()));
  for (int a = 0; a < grid_.dim(); ++a) g.push_back(partial(u, a));
  return g;
}

GridField DiscreteOperatorSet::divergence(const VectorField& f) const {
  if (static_cast<int>(f.size()) != grid_.dim()) throw GridMismatch("divergence: component count");
  GridField r = partial_adjoint(f[0], 0);
  for (int a = 1; a < grid_.dim(); ++a) r += partial_adjoint(f[static_cast<std::size_t>(a)], a);
  r *= -1.0;
  return r;
}

GridField DiscreteOperatorSet::apply(DiffOp op, const GridField& u, int axis) const {
  switch (op) {
    case DiffOp::partial: return partial(u, axis);
    case DiffOp::sbp_partial: return sbp(u, axis);
    case DiffOp::second: return second(u, axis);
    case DiffOp::laplacian: return laplacian(u);
  }
  throw std::invalid_argument("apply: unknown operator");
}

double DiscreteOperatorSet::first_difference_constant() const {
  const int L = grid_.points_per_axis();
  double cd = std::numeric_limits<double>::infinity();
  for (int k = 1; k < L; ++k) {
    const double theta = kTwoPi * k / L;
    const double num = std::norm(sbp_.symbol(theta));
    const double den = std::norm(partial_.symbol(theta));
    if (den > 1e-300) cd = std::min(cd, num / den);
  }
  return cd;
}

// ---------------------------------------------------------------------------

void write_field(std::ostream& os, const GridField& u) {
  nlohmann::json header = {{"d", u.grid().dim()}, {"L", u.grid().points_per_axis()}};
  header["species"] = u.species ? nlohmann::json(*u.species) : nlohmann::json(nullptr);
  os << header.dump() << '\n';
  for (double v : u.values()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
    os.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

GridField read_field(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_field: missing header");
  const auto header = nlohmann::json::parse(line);
  GridField u(PeriodicGrid(header.at("d").get<int>(), header.at("L").get<int>()));
  if (!header.at("species").is_null()) u.species = header.at("species").get<int>();
  for (double& v : u.values()) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("read_field: truncated data");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    v = std::bit_cast<double>(bits);
  }
  return u;
}

void write_field_csv(std::ostream& os, const GridField& u) {
  const auto& g = u.grid();
  if (g.dim() > 2) throw std::invalid_argument("write_field_csv: only d <= 2");
  os << (g.dim() == 1 ? "x1,value\n" : "x1,x2,value\n");
  os.precision(17);
  std::vector<double> x(static_cast<std::size_t>(g.dim()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.point(i, x);
    for (double c : x) os << c << ',';
    os << u[i] << '\n';
  }
}

}  // namespace dklab

namespace dklab {

double sample_at(const GridField& u, std::span<const double> x, int points) {
  const auto& g = u.grid();
  const int d = g.dim();
  if (points < 2 || points % 2 != 0) throw std::invalid_argument("sample_at: points must be even");
  const int half = points / 2;
  std::vector<int> base(static_cast<std::size_t>(d));
  std::vector<double> w(static_cast<std::size_t>(d * points));
  for (int a = 0; a < d; ++a) {
    const double s = (wrap_coordinate(x[a]) + kPi) / g.h();
    const int b = static_cast<int>(std::floor(s));
    const double t = s - b;
    base[a] = b - half + 1;
    for (int k = 0; k < points; ++k) {
      const double xk = k - half + 1;
      double l = 1.0;
      for (int j = 0; j < points; ++j) {
        if (j == k) continue;
        const double xj = j - half + 1;
        l *= (t - xj) / (xk - xj);
      }
      w[static_cast<std::size_t>(a * points + k)] = l;
    }
  }
  long total = 1;
  for (int a = 0; a < d; ++a) total *= points;
  std::vector<int> idx(static_cast<std::size_t>(d));
  double acc = 0.0;
  for (long c = 0; c < total; ++c) {
    long r = c;
    double wt = 1.0;
    for (int a = d - 1; a >= 0; --a) {
      const int k = static_cast<int>(r % points);
      r /= points;
      idx[a] = base[a] + k;
      wt *= w[static_cast<std::size_t>(a * points + k)];
    }
    acc += wt * u[g.ravel(idx)];
  }
  return acc;
}

}  // namespace dklab
