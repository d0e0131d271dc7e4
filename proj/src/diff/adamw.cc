#include "tase/diff/adamw.h"

#include <cmath>
#include <stdexcept>

namespace tase::diff {

void AdamW::update(const std::string& name, Tensor& param, const AdamWOptions& o) {
  if (step_ < 1) throw std::logic_error("AdamW::update before next_step()");
  if (!param.has_grad()) return;
  Moments& mo = moments_[name];
  if (mo.m.empty()) {
    mo.m.assign(param.size(), 0.0);
    mo.v.assign(param.size(), 0.0);
  }
  if (mo.m.size() != param.size()) throw std::invalid_argument("AdamW: moment size mismatch for " + name);
  const auto g = param.grad();
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < param.size(); ++i) {
    mo.m[i] = o.beta1 * mo.m[i] + (1.0 - o.beta1) * g[i];
    mo.v[i] = o.beta2 * mo.v[i] + (1.0 - o.beta2) * g[i] * g[i];
    const double mhat = mo.m[i] / c1;
    const double vhat = mo.v[i] / c2;
    param[i] -= o.lr * (mhat / (std::sqrt(vhat) + o.eps) + o.weight_decay * param[i]);
  }
}

}  // namespace tase::diff
