#include "snn/grad_check.hpp"

#include <cmath>

#include "snn/error.hpp"

namespace snn {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double eps) {
  for (const auto& [name, p] : params)
    if (!p.tracked()) throw ConfigError("grad_check: parameter '" + name + "' is not tracked");

  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    for (const auto& [name, p] : params) const_cast<Tensor&>(p).clear_grad();
    Tape tape;
    Tensor loss = f();
    if (!std::isfinite(loss.item()))
      throw NumericError("grad_check: non-finite loss in analytic pass");
    tape.backward(loss);
    for (const auto& [name, p] : params) {
      if (p.has_grad())
        analytic.push_back(p.grad());
      else
        analytic.emplace_back(p.size(), 0.0);
      const_cast<Tensor&>(p).clear_grad();
    }
  }

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor theta = params[pi].second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta.at(i);
      double fp, fm;
      {
        NoGrad ng;
        theta.at(i) = saved + eps;
        fp = f().item();
        theta.at(i) = saved - eps;
        fm = f().item();
        theta.at(i) = saved;
      }
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite intermediate at parameter '" +
                           params[pi].first + "'");
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[pi].first;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace snn
