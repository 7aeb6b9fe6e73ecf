#pragma once

#include <functional>
#include <string>
#include <vector>

namespace sigvol {

/// f(x, grad) returns the objective and writes the gradient into grad.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

struct BoxBounds {
  std::vector<double> lower;
  std::vector<double> upper;
};

struct LbfgsOptions {
  int max_iterations = 500;
  int memory = 10;
  /// Stop when (f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1) <= ftol.
  double ftol = 1e-8;
  /// Stop when the projected gradient's max-norm is <= gtol.
  double gtol = 1e-8;
  int max_line_search = 40;
};

enum class OptimizerStatus { converged_ftol, converged_gtol, max_iterations, line_search_failed };

[[nodiscard]] std::string to_string(OptimizerStatus s);

struct OptimizerResult {
  std::vector<double> x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  OptimizerStatus status = OptimizerStatus::max_iterations;
  /// Objective after each accepted step, starting with f(x0).
  std::vector<double> history;

  [[nodiscard]] bool converged() const noexcept {
    return status == OptimizerStatus::converged_ftol || status == OptimizerStatus::converged_gtol;
  }
};

/// Projected limited-memory BFGS on a box. Accepted iterates never increase f.
[[nodiscard]] OptimizerResult minimize_box(const Objective& f, std::vector<double> x0, const BoxBounds& bounds,
                                           const LbfgsOptions& options = {});

}  // namespace sigvol
