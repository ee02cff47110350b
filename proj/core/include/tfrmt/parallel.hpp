#pragma once

#include <functional>

namespace tfrmt {

// Worker count: explicit request > TFRMT_WORKERS env var > hardware threads.
int resolve_workers(int requested = 0);

// Run fn(i) for i in [0, n) on up to `workers` threads. Items are claimed
// from a shared counter and results must go to slot i only, so output is
// identical for any worker count. The first exception is rethrown on the
// calling thread after all workers drain.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

} // namespace tfrmt
