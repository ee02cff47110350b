#pragma once

#include <mutex>

namespace tfrmt::detail {

// fftw plan creation/destruction is not thread-safe; execution is.
inline std::mutex& fft_plan_mutex() {
    static std::mutex m;
    return m;
}

} // namespace tfrmt::detail
