#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hoigraph/autodiff.hpp"

namespace hoigraph {

/// Builds a scalar loss on `tape` from the given parameter values.
using LossBuilder = std::function<Var(Tape& tape, const ParamStore& params)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates whose relative error exceeds this are examined for kinks.
  double tolerance = 1e-4;
};

struct CoordinateNote {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct ParamErrorSummary {
  std::string param;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  /// Coordinates sitting on a non-differentiable point (one-sided slopes disagree).
  std::vector<CoordinateNote> skipped;
  /// Coordinates where a perturbed loss was not finite.
  std::vector<CoordinateNote> non_finite;
  /// One row per parameter tensor, in store order.
  std::vector<ParamErrorSummary> per_param;
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

/// Compares backward() gradients against central differences
/// (L(theta + eps) - L(theta - eps)) / 2 eps for every parameter entry.
/// `params` is perturbed in place and restored before returning.
GradCheckReport finite_difference_check(const LossBuilder& loss_fn, ParamStore& params,
                                        const GradCheckOptions& options = {});

}  // namespace hoigraph
