#ifndef CEVAE_TIMER_HPP_
#define CEVAE_TIMER_HPP_

#include <chrono>

namespace cevae {

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace cevae

#endif  // CEVAE_TIMER_HPP_
