#pragma once

#include <complex>
#include <span>
#include <vector>

namespace dklab::fft {

using cplx = std::complex<double>;

/// Multi-dimensional DFT over an L^d row-major array:
///   out[k] = sum_j in[j] exp(sign * 2 pi i k.j / L).
/// No normalization in either direction. Plans are cached per (d, L, sign)
/// and executions are thread-safe.
void dft(int d, int L, int sign, std::span<const cplx> in, std::span<cplx> out);

std::vector<cplx> forward_real(int d, int L, std::span<const double> in);
/// Inverse of forward_real including the 1/L^d factor; returns the real part.
std::vector<double> inverse_to_real(int d, int L, std::span<const cplx> in);

}  // namespace dklab::fft
