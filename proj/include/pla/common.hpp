#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace pla {

/// Label sentinel for points excluded from every loss and metric.
inline constexpr int kIgnored = -1;

/// Bad or missing input: malformed files, invalid arguments, broken invariants.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or other numerical breakdown during training/evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configure the global logger from the PLA_LOG environment variable
/// (error|warn|info|debug). Defaults to warn. Safe to call repeatedly.
void init_logging();

/// Keeps freed large buffers in the heap instead of returning them to the OS,
/// so per-iteration training temporaries do not page-fault every step. No-op
/// outside glibc. Call once at program start.
void tune_allocator();

}  // namespace pla
