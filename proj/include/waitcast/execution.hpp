#pragma once

namespace waitcast {

/// Selects between the OpenMP kernel and its serial reference.
/// Both paths must produce bit-identical results; the serial one is kept
/// for tests and benchmarks.
enum class Execution { serial, parallel };

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads() noexcept;

/// Sets the OpenMP thread count for subsequent parallel regions.
void set_threads(int n) noexcept;

/// RAII guard that restores the previous thread count.
class ThreadCountScope {
 public:
  explicit ThreadCountScope(int n) noexcept : previous_(max_threads()) { set_threads(n); }
  ~ThreadCountScope() { set_threads(previous_); }
  ThreadCountScope(const ThreadCountScope&) = delete;
  ThreadCountScope& operator=(const ThreadCountScope&) = delete;

 private:
  int previous_;
};

}  // namespace waitcast
