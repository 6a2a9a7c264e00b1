#pragma once

#include <functional>

#include "dgdn/tensor.hpp"

namespace dgdn {

/// Scalar-valued function of one tensor, evaluated under the given tape.
/// Pass the argument through GradTape::watch-ed handles so the tape can
/// differentiate it.
using ScalarFn = std::function<Tensor(GradTape& tape, const Tensor& x)>;

/// Central-difference check of the tape gradient of f at x.
///
/// Per coordinate i compares (f(x+h*e_i) - f(x-h*e_i)) / (2h) against the
/// analytic gradient and returns the worst relative error, with denominator
/// max(|analytic|, |numeric|, 1e-8).
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

}  // namespace dgdn
