#pragma once

#include <cstdlib>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace deepstruct {

// Every batch kernel comes in two flavours: a plain serial loop kept as the
// reference, and an OpenMP path. Both walk the same fixed-size chunks and all
// cross-chunk reductions happen serially in chunk order afterwards, so the two
// modes (and any thread count) produce bit-identical results.
enum class ExecMode { Serial, Parallel };

inline int env_thread_cap() {
  const char* s = std::getenv("DEEPSTRUCT_THREADS");
  if (!s || !*s) return 0;
  int v = std::atoi(s);
  return v > 0 ? v : 0;
}

inline int worker_count(ExecMode mode) {
  if (mode == ExecMode::Serial) return 1;
#ifdef _OPENMP
  int cap = env_thread_cap();
  int n = omp_get_max_threads();
  return cap > 0 && cap < n ? cap : n;
#else
  return 1;
#endif
}

inline int chunk_count(int n, int chunk) { return (n + chunk - 1) / chunk; }

// Index of the calling worker inside a for_chunks body; 0 outside parallel
// regions and in serial mode.
inline int this_worker() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

// Runs fn(chunk_index, begin, end) over [0, n) split into fixed chunks.
// Chunk boundaries do not depend on the mode or thread count.
template <class Fn>
void for_chunks(int n, int chunk, ExecMode mode, Fn&& fn) {
  int nc = chunk_count(n, chunk);
#ifdef _OPENMP
  if (mode == ExecMode::Parallel) {
    int workers = worker_count(mode);
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (int c = 0; c < nc; ++c) {
      int b = c * chunk;
      int e = b + chunk < n ? b + chunk : n;
      fn(c, b, e);
    }
    return;
  }
#endif
  for (int c = 0; c < nc; ++c) {
    int b = c * chunk;
    int e = b + chunk < n ? b + chunk : n;
    fn(c, b, e);
  }
}

}  // namespace deepstruct
