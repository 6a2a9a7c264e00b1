#include "dgdn/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace dgdn {

namespace {

double eval_at(const ScalarFn& f, const Tensor& x) {
  GradTape tape;
  Tensor xw = tape.watch(x, /*trainable=*/false);
  return f(tape, xw).item();
}

}  // namespace

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  GradTape tape;
  Tensor xw = tape.watch(x);
  Tensor loss = f(tape, xw);
  tape.backward(loss);
  const Tensor analytic = xw.grad();

  std::vector<double> probe(x.values().begin(), x.values().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double fp = eval_at(f, Tensor::from_data(x.shape(), probe));
    probe[i] = saved - h;
    const double fm = eval_at(f, Tensor::from_data(x.shape(), probe));
    probe[i] = saved;

    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic.values()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace dgdn
