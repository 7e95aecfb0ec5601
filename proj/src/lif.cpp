#include "snn/lif.hpp"

#include <cmath>

#include "snn/error.hpp"

namespace snn {

using detail::grad_buf;
using detail::should_track;

namespace {

inline double surrogate_slope(double v, const SurrogateParams& sp) {
  const double d = sp.alpha * std::fabs(v) + 1.0;
  const double base = 1.0 / (d * d);
  return sp.mode == SurrogateMode::kHard ? base : 0.5 * base;
}

inline double spike_value(double v, const SurrogateParams& sp) {
  if (sp.mode == SurrogateMode::kHard) return v >= 0.0 ? 1.0 : 0.0;
  return 0.5 * v / (sp.alpha * std::fabs(v) + 1.0) + 0.5;
}

}  // namespace

Tensor spike_surrogate(const Tensor& v, const SurrogateParams& sp) {
  Tensor out = Tensor::zeros(v.shape());
  const double* pv = v.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = spike_value(pv[i], sp);
  if (should_track({&v})) {
    out.mark_parameter();
    auto vi = v.impl(), oi = out.impl();
    Tape::record([vi, oi, sp] {
      if (oi->grad.empty()) return;
      auto& g = grad_buf(*vi);
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += oi->grad[i] * surrogate_slope(vi->value[i], sp);
    });
  }
  return out;
}

LIFStepResult lif_step(const Tensor& u, const Tensor& input, const LIFParams& lp,
                       const SurrogateParams& sp) {
  if (!same_shape(u.shape(), input.shape()))
    throw ShapeError("lif_step: state " + shape_str(u.shape()) + " vs input " +
                     shape_str(input.shape()));
  if (lp.tau_m <= 0.0 || lp.dt <= 0.0) throw ConfigError("lif_step: tau_m and dt must be > 0");

  const double a = lp.dt / lp.tau_m;
  Tensor spikes = Tensor::zeros(u.shape());
  Tensor u_next = Tensor::zeros(u.shape());
  const double* pu = u.data();
  const double* pi = input.data();
  double* ps = spikes.data();
  double* pn = u_next.data();
  // Fused Euler step + spike + reset; one tape node per step keeps the
  // unrolled-in-time graph small.
  for (std::size_t j = 0; j < u.size(); ++j) {
    const double u_pre = (1.0 - a) * pu[j] + a * (lp.u_rest + lp.r * pi[j]);
    const double s = spike_value(u_pre - lp.theta, sp);
    ps[j] = s;
    pn[j] = s * lp.u_rest + (1.0 - s) * u_pre;
  }
  if (debug_checks_enabled()) check_finite(u_next, "lif_step membrane");

  if (should_track({&u, &input})) {
    spikes.mark_parameter();
    u_next.mark_parameter();
    auto ui = u.impl(), ii = input.impl(), si = spikes.impl(), ni = u_next.impl();
    Tape::record([ui, ii, si, ni, a, lp, sp] {
      if (si->grad.empty() && ni->grad.empty()) return;
      for (std::size_t j = 0; j < ui->value.size(); ++j) {
        const double u_pre = (1.0 - a) * ui->value[j] + a * (lp.u_rest + lp.r * ii->value[j]);
        const double slope = surrogate_slope(u_pre - lp.theta, sp);
        const double gs = si->grad.empty() ? 0.0 : si->grad[j];
        const double gn = ni->grad.empty() ? 0.0 : ni->grad[j];
        double d_upre = gs * slope;
        if (sp.mode == SurrogateMode::kHard) {
          // Reset mask is treated as a constant: gradient passes through the
          // non-reset branch only.
          const double s = u_pre - lp.theta >= 0.0 ? 1.0 : 0.0;
          d_upre += gn * (1.0 - s);
        } else {
          const double s = spike_value(u_pre - lp.theta, sp);
          d_upre += gn * ((1.0 - s) + (lp.u_rest - u_pre) * slope);
        }
        if (ui->tracked) grad_buf(*ui)[j] += d_upre * (1.0 - a);
        if (ii->tracked) grad_buf(*ii)[j] += d_upre * a * lp.r;
      }
    });
  }
  return {spikes, u_next};
}

void SpikeActivity::add_spiking(const std::string& name, std::size_t neurons,
                                std::size_t timesteps, double spikes) {
  for (auto& l : spiking) {
    if (l.name == name) {
      l.timesteps += timesteps;
      l.spikes += spikes;
      return;
    }
  }
  spiking.push_back({name, neurons, timesteps, spikes});
}

void SpikeActivity::add_synops(const std::string& name, double input_spikes, double synops) {
  for (auto& l : synapses) {
    if (l.name == name) {
      l.input_spikes += input_spikes;
      l.synops += synops;
      return;
    }
  }
  synapses.push_back({name, input_spikes, synops});
}

void SpikeActivity::merge(const SpikeActivity& other) {
  for (const auto& s : other.spiking) add_spiking(s.name, s.neurons, s.timesteps, s.spikes);
  for (const auto& s : other.synapses) add_synops(s.name, s.input_spikes, s.synops);
}

double SpikeActivity::sparsity() const {
  double spikes = 0.0, slots = 0.0;
  for (const auto& l : spiking) {
    spikes += l.spikes;
    slots += static_cast<double>(l.neurons) * static_cast<double>(l.timesteps);
  }
  if (slots == 0.0) throw ConfigError("sparsity undefined: no neuron-timesteps recorded");
  return 1.0 - spikes / slots;
}

double SpikeActivity::total_spikes() const {
  double s = 0.0;
  for (const auto& l : spiking) s += l.spikes;
  return s;
}

double SpikeActivity::total_synops() const {
  double s = 0.0;
  for (const auto& l : synapses) s += l.synops;
  return s;
}

}  // namespace snn
