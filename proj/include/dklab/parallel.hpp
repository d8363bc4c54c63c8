#pragma once

// Replica-level parallelism. Workers only write to their own result slot, so output
// is independent of the thread count; the serial loop is the reference.

#include <exception>
#include <mutex>

namespace dklab {

/// requested > 0 wins, then DK_LAB_THREADS, then the OpenMP default.
int resolve_threads(int requested);

template <class F>
void for_each_replica_serial(int R, F&& f) {
  for (int r = 0; r < R; ++r) f(r);
}

template <class F>
void for_each_replica(int R, int threads, F&& f) {
  if (threads <= 1) {
    for_each_replica_serial(R, f);
    return;
  }
  std::exception_ptr err;
  std::mutex m;
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int r = 0; r < R; ++r) {
    try {
      f(r);
    } catch (...) {
      std::lock_guard lock(m);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace dklab
