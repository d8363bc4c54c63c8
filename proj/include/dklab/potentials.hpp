#pragma once

// Interaction potentials V_ab, the rescaling V^{r}(x) = r^{-d} V(x / r), drift
// fields built from them, and separable real-Fourier splittings of grad V(x - y).

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dklab/grid.hpp"

namespace dklab {

enum class PotentialFamily { zero, bump, cosine };

PotentialFamily parse_potential_family(const std::string& name);
std::string to_string(PotentialFamily f);

/// n_S x n_S matrix of rescaled potentials sharing one shape.
/// bump:   V(x) = c_ab prod_l exp(-1 / (1 - (x_l / w)^2)) for |x_l| < w, else 0.
/// cosine: V(x) = c_ab sum_l cos(x_l); only r_I = 1.
class PotentialMatrix {
 public:
  PotentialMatrix() = default;
  /// amplitudes: row-major n_S x n_S, must be symmetric. Empty means all 1.
  PotentialMatrix(int d, int n_species, PotentialFamily family, double width, double r_I,
                  std::vector<double> amplitudes = {});

  static PotentialMatrix zero(int d, int n_species);

  int dim() const { return d_; }
  int species_count() const { return n_species_; }
  PotentialFamily family() const { return family_; }
  double width() const { return width_; }
  double r_I() const { return r_I_; }
  double amplitude(int a, int b) const;
  bool is_zero(int a, int b) const;
  bool is_zero() const;
  /// Half-width of the support of V^{r_I} along each axis (infinite for cosine).
  double support_radius() const;

  double V(int a, int b, std::span<const double> x) const;
  void gradV(int a, int b, std::span<const double> x, std::span<double> g) const;
  /// d/dx_l V^{r_I}_ab(x) only.
  double dV(int a, int b, int l, std::span<const double> x) const;

  GridField sample_V(int a, int b, const PeriodicGrid& grid) const;
  /// I_h[d_l V^{r_I}_ab] on the grid.
  GridField sample_dV(int a, int b, int l, const PeriodicGrid& grid) const;

 private:
  double shape(std::span<const double> u) const;

  int d_ = 1;
  int n_species_ = 1;
  PotentialFamily family_ = PotentialFamily::zero;
  double width_ = 1.0;
  double r_I_ = 1.0;
  std::vector<double> amp_;
};

/// Precomputed spectra of I_h[d_l V_ab] for fast convolution on one grid.
class InteractionKernels {
 public:
  InteractionKernels() = default;
  InteractionKernels(const PotentialMatrix& pot, const PeriodicGrid& grid);

  const PeriodicGrid& grid() const { return grid_; }
  const PotentialMatrix& potentials() const { return pot_; }
  /// (I_h[d_l V_ab] *_h u)
  GridField convolve(int a, int b, int l, const GridField& u) const;
  bool is_zero(int a, int b) const;

 private:
  const ConvolutionKernel& kernel(int a, int b, int l) const;

  PotentialMatrix pot_;
  PeriodicGrid grid_;
  std::vector<ConvolutionKernel> kernels_;
};

/// U_a = sum_b I_h[grad V_ab] *_h rho_b on rho's grid.
VectorField mean_field_drift_discrete(const InteractionKernels& k, const SpeciesFields& rho, int a);
/// Same object on a fine grid, used as the surrogate for the continuous convolution.
VectorField mean_field_drift_continuous(const InteractionKernels& fine, const SpeciesFields& rho_fine,
                                        int a);

// ---------------------------------------------------------------------------
// Separable splitting d_l V(x - y) ~ sum F[a, b] theta_a(y) theta_b(x) in the real
// Fourier basis {1, cos(m.x), sin(m.x) : m in a half space, |m|_inf <= M}.

struct RealMode {
  std::vector<int> m;
  bool is_sin = false;

  double operator()(std::span<const double> x) const;
  /// Integral of the squared basis function over the torus.
  double norm2() const;
  bool operator==(const RealMode&) const = default;
};

/// Basis modes with |m|_inf <= M_cut, m in the half space (first nonzero component > 0) or m = 0.
std::vector<RealMode> real_fourier_basis(int d, int M_cut);

struct SplitEntry {
  RealMode y_mode;
  RealMode x_mode;
  double value;
};

class SplitCoefficients {
 public:
  SplitCoefficients() = default;
  SplitCoefficients(int d, int a, int b, int l, int M_cut, std::vector<SplitEntry> entries)
      : d_(d), a_(a), b_(b), l_(l), M_cut_(M_cut), entries_(std::move(entries)) {}

  int dim() const { return d_; }
  int species_a() const { return a_; }
  int species_b() const { return b_; }
  int axis() const { return l_; }
  int M_cut() const { return M_cut_; }
  const std::vector<SplitEntry>& entries() const { return entries_; }
  /// The truncated series at (x, y).
  double reconstruct(std::span<const double> x, std::span<const double> y) const;
  /// Largest |F| among entries whose modes satisfy |m|_2 + |n|_2 in [R, R + 1).
  double max_at_radius(double R) const;
  void write_csv(std::ostream& os) const;

 private:
  int d_ = 1, a_ = 0, b_ = 0, l_ = 0, M_cut_ = 0;
  std::vector<SplitEntry> entries_;
};

/// Fast assembly from the Fourier coefficients of d_l V^{r_I}_ab on a quadrature grid
/// with max(4 M_cut, 64) points per axis.
SplitCoefficients compute_split_coefficients(const PotentialMatrix& pot, int a, int b, int l,
                                             int M_cut);
/// Tensor double-integral quadrature over (x, y) in d = 1; reference for the fast assembly.
SplitCoefficients compute_split_coefficients_quadrature(const PotentialMatrix& pot, int a, int b,
                                                        int l, int M_cut, int L_quad);

}  // namespace dklab
