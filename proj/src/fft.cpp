#include "dklab/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace dklab::fft {
namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
struct PlanCache {
  std::mutex mutex;
  std::map<std::tuple<int, int, int>, fftw_plan> plans;

  fftw_plan get(int d, int L, int sign) {
    std::lock_guard lock(mutex);
    auto key = std::make_tuple(d, L, sign);
    if (auto it = plans.find(key); it != plans.end()) return it->second;
    std::size_t n = 1;
    std::vector<int> dims(static_cast<std::size_t>(d), L);
    for (int i = 0; i < d; ++i) n *= static_cast<std::size_t>(L);
    auto* a = fftw_alloc_complex(n);
    auto* b = fftw_alloc_complex(n);
    fftw_plan p = fftw_plan_dft(d, dims.data(), a, b, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(a);
    fftw_free(b);
    if (!p) throw std::runtime_error("fftw plan creation failed");
    plans.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [k, p] : plans) fftw_destroy_plan(p);
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

void dft(int d, int L, int sign, std::span<const cplx> in, std::span<cplx> out) {
  if (in.size() != out.size()) throw std::invalid_argument("fft size mismatch");
  fftw_plan p = cache().get(d, L, sign);
  // Out-of-place plan: copy when the caller aliases input and output.
  if (in.data() == out.data()) {
    std::vector<cplx> tmp(in.begin(), in.end());
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(tmp.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    return;
  }
  fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

std::vector<cplx> forward_real(int d, int L, std::span<const double> in) {
  std::vector<cplx> a(in.begin(), in.end());
  std::vector<cplx> out(a.size());
  dft(d, L, -1, a, out);
  return out;
}

std::vector<double> inverse_to_real(int d, int L, std::span<const cplx> in) {
  std::vector<cplx> out(in.size());
  dft(d, L, +1, in, out);
  std::vector<double> r(in.size());
  const double scale = 1.0 / static_cast<double>(in.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = out[i].real() * scale;
  return r;
}

}  // namespace dklab::fft
