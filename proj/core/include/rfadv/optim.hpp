#pragma once

#include <vector>

#include "rfadv/tensor.hpp"

namespace rfadv {

struct AdamConfig {
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

/// Adam with coupled L2: each parameter's `weight_decay * value` is added to
/// its gradient before the moment update. Frozen parameters are never touched.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  void zero_grad();
  long steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamConfig cfg_;
  long t_ = 0;
};

}  // namespace rfadv
