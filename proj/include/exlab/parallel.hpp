#pragma once

// Index-parallel map used by every Monte Carlo kernel. Each index writes its
// own slot; callers reduce the slots in index order, so the serial and OpenMP
// paths give bitwise identical results.

#include <cstddef>
#include <exception>
#include <mutex>
#include <vector>

namespace exlab {

enum class Exec { serial, parallel };

template <class F>
auto map_indices(Exec exec, std::size_t n, F&& f) -> std::vector<decltype(f(std::size_t{}))> {
  using T = decltype(f(std::size_t{}));
  std::vector<T> out(n);
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::exception_ptr err;
  std::mutex err_mu;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = f(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(err_mu);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace exlab
