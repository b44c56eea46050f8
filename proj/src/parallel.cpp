#include "fpoct/parallel.hpp"

#include <omp.h>

#include "fpoct/error.hpp"

namespace fpoct {

void set_thread_count(int threads) {
  if (threads < 0) throw config_error("thread count must be non-negative");
  if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace fpoct
