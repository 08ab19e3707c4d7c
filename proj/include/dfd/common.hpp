#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dfd {

using Vec3f = Eigen::Vector3f;
using Vec3d = Eigen::Vector3d;
using Mat3f = Eigen::Matrix3f;
using Mat3d = Eigen::Matrix3d;

// Caller supplied something unusable (bad file, bad index, bad flag).
// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A binary file failed its magic/version/length checks.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

// Worker count: DFD_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on up to
// worker_count() threads. Chunk boundaries depend only on n and grain, so
// any per-chunk result is reproducible regardless of the thread count.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  void reset() { start_ = std::chrono::steady_clock::now(); }
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Process-wide instrumentation. Tests assert on these to prove that binding
// never trains and that handle updates never rebind.
struct Counters {
  std::atomic<std::uint64_t> distance_evals{0};
  std::atomic<std::uint64_t> train_steps{0};
  std::atomic<std::uint64_t> rows_bound{0};
  std::atomic<std::uint64_t> poses{0};

  void reset() {
    distance_evals = 0;
    train_steps = 0;
    rows_bound = 0;
    poses = 0;
  }
};

Counters& counters();

}  // namespace dfd
