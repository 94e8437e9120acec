#pragma once

namespace cpreg {

/// Selects between the OpenMP kernel and its serial reference. Both produce
/// bit-identical results; the serial path exists for testing and benchmarks.
enum class Execution { serial, parallel };

/// Number of OpenMP threads a parallel kernel would use (1 without OpenMP).
int max_threads();

}  // namespace cpreg
