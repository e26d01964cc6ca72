#pragma once

#include <stdexcept>
#include <utility>

#include "clv/rng.hpp"

namespace clv::num {

struct GammaParams {
    double shape; // > 0
    double rate;  // > 0

    GammaParams(double shape_, double rate_) : shape(shape_), rate(rate_) {
        if (!(shape > 0.0) || !(rate > 0.0))
            throw std::invalid_argument("GammaParams: shape and rate must be positive");
    }
    double mean() const { return shape / rate; }
};

// ln Gamma(x), x > 0. Relative error <= 1e-12 on [1e-6, 1e6].
double ln_gamma(double x);

// psi(x), x > 0
double digamma(double x);

// psi'(x), x > 0
double trigamma(double x);

// ln(e^a + e^b) without overflow; -inf acts as identity
double log_sum_exp(double a, double b);

// Gauss hypergeometric 2F1(a, b; c; z) for z < 1, c > 0.
// Negative z is mapped into (0, 1) via the Pfaff transformation.
double gauss_2f1(double a, double b, double c, double z);

// Regularized lower incomplete gamma P(a, x)
double reg_lower_gamma(double a, double x);

// Quantile of Gamma(shape, rate=1): x with P(shape, x) = u
double gamma_quantile(double shape, double u);

// Gamma(shape, rate) draw, Marsaglia-Tsang; shape < 1 via the boost
// Gamma(a) = Gamma(a+1) * U^{1/a}
double sample_gamma(const GammaParams& params, Rng& rng);

// Implicit reparameterization gradients of a Gamma(shape, rate) draw z:
// returns (dz/dshape, dz/drate). dz/drate = -z/rate exactly; dz/dshape uses
// a central finite difference of P(a, .) in the shape argument.
std::pair<double, double> gamma_reparam_gradient(const GammaParams& params, double sample);

} // namespace clv::num
