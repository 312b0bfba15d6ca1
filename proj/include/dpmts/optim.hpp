#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dpmts/tensor.hpp"

namespace dpmts {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name and
/// persist across steps; frozen parameters are never touched.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  const AdamOptions& options() const { return options_; }
  long step_count() const { return t_; }

  void step(const std::vector<Parameter*>& params) {
    for (const Parameter* p : params)
      if (p->trainable && !p->tensor.has_grad())
        throw ContractViolation("adam step: trainable parameter '" + p->name + "' has no gradient");
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      auto& [m, v] = moments_[p->name];
      auto data = p->tensor.mutable_data();
      const auto grad = p->tensor.grad();
      if (m.empty()) {
        m.assign(data.size(), 0.0);
        v.assign(data.size(), 0.0);
      }
      for (std::size_t i = 0; i < data.size(); ++i) {
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * grad[i];
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * grad[i] * grad[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        data[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
      }
    }
  }

 private:
  AdamOptions options_;
  long t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

inline void zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->tensor.zero_grad();
}

}  // namespace dpmts
