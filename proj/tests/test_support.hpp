#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "morphctl/numerics/param_store.hpp"
#include "morphctl/numerics/tape.hpp"

namespace morphctl::testing {

using LossFn = std::function<Var(Tape&)>;

struct GradCheck {
  // Per parameter: ||analytic - numeric|| / max(||analytic||, ||numeric||).
  std::map<std::string, double> relative_error;
  double worst = 0.0;
  std::string worst_name;
};

// Central finite differences over every scalar of the selected parameters.
// The oracle only ever evaluates the loss forward; it never looks at the
// backward closures it is checking.
inline GradCheck check_gradients(ParamStore& store, const LossFn& loss,
                                 const std::function<bool(const std::string&)>& select =
                                     [](const std::string&) { return true; },
                                 double h = 1e-5, double floor = 1e-12) {
  store.zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  auto eval = [&] {
    Tape tape(false);
    return loss(tape).value().item();
  };
  GradCheck result;
  for (auto& p : store) {
    if (!select(p.name)) continue;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + h;
      const double fp = eval();
      p.value[k] = saved - h;
      const double fm = eval();
      p.value[k] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p.grad[k];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), floor});
    const double rel = std::sqrt(diff2) / denom;
    result.relative_error[p.name] = rel;
    if (rel >= result.worst) {
      result.worst = rel;
      result.worst_name = p.name;
    }
  }
  return result;
}

}  // namespace morphctl::testing
