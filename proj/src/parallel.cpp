#include "ssc/parallel.hpp"

#include <omp.h>

#include <vector>

namespace ssc {

void set_jobs(int jobs) {
  if (jobs >= 1) omp_set_num_threads(jobs);
}

int max_jobs() { return omp_get_max_threads(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace ssc
