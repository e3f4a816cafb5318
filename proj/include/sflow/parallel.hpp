#pragma once

#include <functional>

namespace sflow {

/// Process-wide worker count for parallel maps (CLI --threads).  Results must
/// not depend on it; bodies write to disjoint slots.
void set_thread_count(int n);
int thread_count();

/// Runs body(0..n-1) on the configured number of threads.  The first
/// exception thrown by a body is rethrown on the calling thread.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace sflow
