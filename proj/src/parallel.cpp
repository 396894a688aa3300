#include "gradbasis/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>

namespace gradbasis {

int thread_budget() {
  static const int budget = [] {
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("GRADBASIS_THREADS")) {
      const int cap = std::atoi(env);
      if (cap >= 1) n = std::min(n, cap);
    }
    return n < 1 ? 1 : n;
  }();
  return budget;
}

void parallel_for(int n, const std::function<void(int)>& body) {
  if (n <= 0) return;
  std::exception_ptr first_error;
  int first_error_index = n;
  std::mutex error_mutex;

#pragma omp parallel for schedule(static) num_threads(thread_budget())
  for (int i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (i < first_error_index) {
        first_error_index = i;
        first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

void serial_for(int n, const std::function<void(int)>& body) {
  for (int i = 0; i < n; ++i) body(i);
}

}  // namespace gradbasis
