#pragma once

// Periodic grid G_h^d on the torus [-pi, pi)^d and the discrete calculus on it:
// inner products, finite differences, convolution, quadrature, Fourier norms.

#include <complex>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dklab {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps a coordinate into [-pi, pi).
double wrap_coordinate(double x);

class PeriodicGrid {
 public:
  PeriodicGrid() : PeriodicGrid(1, 2) {}
  /// Throws std::invalid_argument unless d >= 1 and L is even and positive.
  PeriodicGrid(int d, int L);

  int dim() const { return d_; }
  int points_per_axis() const { return L_; }
  /// Always 2*pi/L; never set independently.
  double h() const { return kTwoPi / L_; }
  double cell_volume() const;
  std::size_t size() const { return n_; }

  double coordinate(int i) const { return -kPi + h() * i; }
  std::size_t stride(int axis) const;
  int axis_index(std::size_t flat, int axis) const;
  /// Row-major flattening; indices are wrapped modulo L.
  std::size_t ravel(std::span<const int> idx) const;
  void unravel(std::size_t flat, std::span<int> idx) const;
  void point(std::size_t flat, std::span<double> x) const;
  std::vector<double> point(std::size_t flat) const;
  /// Index of the node at the wrapped position x (x assumed on a node up to rounding).
  std::size_t nearest_index(std::span<const double> x) const;

  bool operator==(const PeriodicGrid&) const = default;

 private:
  int d_;
  int L_;
  std::size_t n_;
};

/// Real values on a PeriodicGrid, optionally tagged with a species index.
class GridField {
 public:
  GridField() = default;
  explicit GridField(const PeriodicGrid& grid, double value = 0.0);
  GridField(const PeriodicGrid& grid, std::vector<double> values);

  const PeriodicGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::optional<int> species;

  bool all_finite() const;
  double min() const;
  double max() const;

  GridField& operator+=(const GridField& o);
  GridField& operator-=(const GridField& o);
  GridField& operator*=(double a);
  /// this += a * o
  GridField& axpy(double a, const GridField& o);

 private:
  PeriodicGrid grid_;
  std::vector<double> values_;
};

GridField operator+(GridField a, const GridField& b);
GridField operator-(GridField a, const GridField& b);
GridField operator*(double a, GridField b);
/// Pointwise product.
GridField hadamard(const GridField& a, const GridField& b);

/// One component per spatial axis.
using VectorField = std::vector<GridField>;
/// One field per species.
using SpeciesFields = std::vector<GridField>;

void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b, const char* what);

// ---------------------------------------------------------------------------
// Quadrature, inner product, norms

/// (u, v)_h = sum_x h^d u(x) v(x)
double inner_product_h(const GridField& u, const GridField& v);
double inner_product_h(const VectorField& u, const VectorField& v);
/// sum_x h^d u(x)
double quadrature_h(const GridField& u);

enum class Lp { one, two, inf };
double lp_norm_h(const GridField& u, Lp p);

using SmoothFunction = std::function<double(std::span<const double>)>;
/// Pointwise sampling I_h f at the grid nodes.
GridField interpolate_Ih(const SmoothFunction& f, const PeriodicGrid& grid);

// ---------------------------------------------------------------------------
// Fourier analysis. Modes m in [-L/2, L/2)^d, basis vartheta_m = (2pi)^{-d/2} e^{i m.x}.

/// Mode of a DFT index along one axis: k for k < L/2, k - L otherwise.
int mode_of_index(int k, int L);
/// (u, vartheta_m)_h for every mode, stored at the DFT index of m (row-major).
std::vector<std::complex<double>> fourier_coefficients(const GridField& u);
/// Inverse of fourier_coefficients.
GridField from_fourier_coefficients(const PeriodicGrid& grid,
                                    std::span<const std::complex<double>> coeffs);
/// (sum_m (1 + |m|^2)^s |(u, vartheta_m)_h|^2)^{1/2}
double sobolev_norm_h(const GridField& u, int s);
/// sup over |nu| <= s of the L^2_h norm of one-sided forward differences (s >= 0).
double one_sided_sobolev_norm_h(const GridField& u, int s);
/// Forward difference (g(x + h e_l) - g(x)) / h.
GridField one_sided_difference(const GridField& u, int axis);

// ---------------------------------------------------------------------------
// Convolution (u *_h v)(x) = sum_y h^d u(y) v(x - y)

GridField convolve_h(const GridField& u, const GridField& v);
/// O(n^2) direct summation in coordinates; reference for convolve_h.
GridField convolve_h_direct(const GridField& u, const GridField& v);

/// Convolution with a fixed kernel whose spectrum is computed once.
class ConvolutionKernel {
 public:
  ConvolutionKernel() = default;
  explicit ConvolutionKernel(const GridField& kernel);
  const PeriodicGrid& grid() const { return grid_; }
  /// u *_h kernel
  GridField apply(const GridField& u) const;
  bool is_zero() const { return zero_; }

 private:
  PeriodicGrid grid_;
  std::vector<std::complex<double>> spectrum_;
  bool zero_ = true;
};

// ---------------------------------------------------------------------------
// Finite differences

/// 1-d periodic stencil, coefficients already scaled by the grid spacing.
struct Stencil {
  std::vector<int> offsets;
  std::vector<double> coeffs;

  int width() const;
  /// sum_k c_k e^{i k theta}
  std::complex<double> symbol(double theta) const;
  /// The adjoint stencil with respect to (.,.)_h.
  Stencil adjoint() const;
};

enum class DiffOp { partial, sbp_partial, second, laplacian };

/// First differences d_{h,x_l}, their summation-by-parts companions D_{h,x_l} and
/// second differences D^2_{h,x_l} = -D^T D of consistency order p + 1.
/// p = 1: centered / forward / 3-point. p = 3: fourth-order centered first
/// difference and a factorized fourth-order SBP pair.
class DiscreteOperatorSet {
 public:
  DiscreteOperatorSet(const PeriodicGrid& grid, int order);

  int order() const { return order_; }
  const PeriodicGrid& grid() const { return grid_; }
  const Stencil& partial_stencil() const { return partial_; }
  const Stencil& sbp_stencil() const { return sbp_; }
  const Stencil& second_stencil() const { return second_; }

  GridField partial(const GridField& u, int axis) const;
  /// Reflected (adjoint) first difference.
  GridField partial_adjoint(const GridField& u, int axis) const;
  GridField sbp(const GridField& u, int axis) const;
  GridField second(const GridField& u, int axis) const;
  GridField laplacian(const GridField& u) const;
  VectorField gradient(const GridField& u) const;
  /// Discrete divergence, the negative adjoint of the gradient.
  GridField divergence(const VectorField& f) const;
  GridField apply(DiffOp op, const GridField& u, int axis = 0) const;

  /// Largest C_D with ||d^R u||^2 <= C_D^{-1} ||D u||^2, from the stencil symbols.
  double first_difference_constant() const;

 private:
  PeriodicGrid grid_;
  int order_;
  Stencil partial_, sbp_, second_;
};

GridField apply_stencil(const Stencil& s, const GridField& u, int axis);

// ---------------------------------------------------------------------------
// Serialization

/// One JSON header line {"d","L","species"} followed by little-endian float64 values.
void write_field(std::ostream& os, const GridField& u);
GridField read_field(std::istream& is);
/// CSV slice export for d <= 2: columns x1[,x2],value.
void write_field_csv(std::ostream& os, const GridField& u);

}  // namespace dklab

namespace dklab {

/// Tensor-product Lagrange interpolation of a grid field at an off-grid point,
/// using `points` (even) nodes per axis centred on the containing cell.
double sample_at(const GridField& u, std::span<const double> x, int points = 6);

}  // namespace dklab
