#pragma once

namespace fpoct {

/// 0 keeps the runtime default.
void set_thread_count(int threads);
int thread_count();

}  // namespace fpoct
