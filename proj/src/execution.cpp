#include "waitcast/execution.hpp"

#include <omp.h>

namespace waitcast {

int max_threads() noexcept { return omp_get_max_threads(); }

void set_threads(int n) noexcept { omp_set_num_threads(n < 1 ? 1 : n); }

}  // namespace waitcast
