#pragma once

#include <functional>

namespace gradbasis {

/// Thread budget for the OpenMP kernels and for scenario-level parallelism.
/// Resolves GRADBASIS_THREADS once; falls back to the OpenMP default.
int thread_budget();

/// Run body(i) for i in [0, n) across the thread budget. Every iteration must
/// write to disjoint outputs; the kernels stay bit-identical to their serial
/// references because no cross-iteration floating-point reduction happens.
/// Exceptions are captured and the one thrown by the lowest index is
/// rethrown after the loop so error reporting is deterministic too.
void parallel_for(int n, const std::function<void(int)>& body);

/// Serial reference with identical semantics, kept for testing and for the
/// kernel benchmark.
void serial_for(int n, const std::function<void(int)>& body);

}  // namespace gradbasis
