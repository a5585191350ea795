#include "rfadv/optim.hpp"

#include <cmath>

namespace rfadv {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
    if (p->grad.shape() != p->value.shape()) p->zero_grad();
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  const float lr_t = static_cast<float>(cfg_.learning_rate * std::sqrt(bc2) / bc1);
  const float eps_t = static_cast<float>(cfg_.epsilon * std::sqrt(bc2));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.frozen) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    float* w = p.value.ptr();
    const float* g = p.grad.ptr();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const float gi = g[i] + p.weight_decay * w[i];
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * gi * gi;
      w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + eps_t);
    }
  }
}

}  // namespace rfadv
