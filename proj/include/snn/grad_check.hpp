#pragma once

#include <functional>
#include <string>
#include <vector>

#include "snn/tensor.hpp"

namespace snn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;     // name of the parameter holding the worst entry
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  bool ok(double tol) const { return max_rel_error < tol; }
};

/// Central finite differences against the tape gradient. `f` must be a
/// deterministic scalar function of the listed parameters, built from kernel
/// ops (spiking layers in soft mode). Non-finite values abort the check.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           double eps = 1e-5);

}  // namespace snn
