#include "hoigraph/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace hoigraph {

namespace {

std::optional<double> evaluate(const LossBuilder& loss_fn, const ParamStore& params) {
  try {
    Tape tape;
    const double v = loss_fn(tape, params).value()[0];
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::domain_error&) {
    // Primitives refuse to produce non-finite values.
    return std::nullopt;
  }
}

}  // namespace

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

GradCheckReport finite_difference_check(const LossBuilder& loss_fn, ParamStore& params,
                                        const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");

  ParamStore analytic = params.zeros_like();
  double base_loss = 0.0;
  {
    Tape tape;
    Var loss = loss_fn(tape, params);
    base_loss = loss.value()[0];
    backward(tape, loss, analytic);
  }

  GradCheckReport report;
  const double eps = options.eps;
  for (std::size_t p = 0; p < params.count(); ++p) {
    const std::string& name = params.names()[p];
    Tensor& value = params.value_at(p);
    const Tensor& grad = analytic.grad_at(p);
    ParamErrorSummary summary{name, 0.0, 0};
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const auto plus = evaluate(loss_fn, params);
      value[i] = saved - eps;
      const auto minus = evaluate(loss_fn, params);
      value[i] = saved;

      if (!plus || !minus) {
        report.non_finite.push_back({name, i, grad[i], std::nan("")});
        continue;
      }
      const double numeric = (*plus - *minus) / (2.0 * eps);
      const double err = relative_error(grad[i], numeric);
      if (err > options.tolerance) {
        const double right = (*plus - base_loss) / eps;
        const double left = (base_loss - *minus) / eps;
        if (std::abs(right - left) >= std::abs(numeric - grad[i])) {
          report.skipped.push_back({name, i, grad[i], numeric});
          continue;
        }
      }
      ++report.checked;
      if (err > summary.max_relative_error) summary = {name, err, i};
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_param = name;
        report.worst_index = i;
      }
    }
    report.per_param.push_back(summary);
  }
  return report;
}

}  // namespace hoigraph
