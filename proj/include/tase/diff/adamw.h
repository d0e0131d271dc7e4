#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tase/diff/tensor.h"

namespace tase::diff {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adaptive moments with decoupled weight decay. Moment buffers are keyed by
// parameter name so they can be checkpointed alongside the parameters.
class AdamW {
 public:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  // Applies one update to `param` from its gradient using `options`.
  void update(const std::string& name, Tensor& param, const AdamWOptions& options);
  // Advances the shared step counter; call once per optimization step.
  void next_step() { ++step_; }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  std::map<std::string, Moments>& moments() { return moments_; }

 private:
  std::int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace tase::diff
