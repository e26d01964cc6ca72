#include "clv/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace clv::num {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Stirling series for x >= 10; first omitted term < 2e-18 relative there
double ln_gamma_stirling(double x) {
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv * (1.0 / 12.0 -
               inv2 * (1.0 / 360.0 -
                       inv2 * (1.0 / 1260.0 -
                               inv2 * (1.0 / 1680.0 -
                                       inv2 * (1.0 / 1188.0 -
                                               inv2 * (691.0 / 360360.0 -
                                                       inv2 * (1.0 / 156.0 -
                                                               inv2 * (3617.0 / 122400.0))))))));
    return (x - 0.5) * std::log(x) - x + 0.5 * std::log(2.0 * kPi) + series;
}

// gamma pdf with rate 1 at x, shape a
double std_gamma_pdf(double a, double x) {
    if (x <= 0.0) return 0.0;
    return std::exp((a - 1.0) * std::log(x) - x - ln_gamma(a));
}

// Acklam's rational approximation to the standard normal quantile,
// used only as a starting point for Newton iterations.
double normal_quantile(double u) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (u < plow) {
        const double q = std::sqrt(-2.0 * std::log(u));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (u > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - u));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = u - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

} // namespace

double ln_gamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("ln_gamma: x must be positive");
    if (x >= 10.0) return ln_gamma_stirling(x);
    double shift = 0.0;
    double y = x;
    while (y < 10.0) {
        shift += std::log(y);
        y += 1.0;
    }
    return ln_gamma_stirling(y) - shift;
}

double digamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("digamma: x must be positive");
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // asymptotic series with Bernoulli terms through x^-14
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 -
                      inv2 * (1.0 / 120.0 -
                              inv2 * (1.0 / 252.0 -
                                      inv2 * (1.0 / 240.0 -
                                              inv2 * (1.0 / 132.0 -
                                                      inv2 * (691.0 / 32760.0 -
                                                              inv2 * (1.0 / 12.0)))))));
    return result;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("trigamma: x must be positive");
    double result = 0.0;
    while (x < 6.0) {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += inv * (1.0 +
                     inv * (0.5 +
                            inv * (1.0 / 6.0 -
                                   inv2 * (1.0 / 30.0 -
                                           inv2 * (1.0 / 42.0 -
                                                   inv2 * (1.0 / 30.0 -
                                                           inv2 * (5.0 / 66.0)))))));
    return result;
}

double log_sum_exp(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

double gauss_2f1(double a, double b, double c, double z) {
    if (!(c > 0.0)) throw std::invalid_argument("gauss_2f1: c must be positive");
    if (z >= 1.0) throw std::invalid_argument("gauss_2f1: z must be < 1");
    if (z == 0.0) return 1.0;
    if (z < 0.0) {
        // Pfaff: 2F1(a,b;c;z) = (1-z)^{-a} 2F1(a, c-b; c; z/(z-1))
        return std::pow(1.0 - z, -a) * gauss_2f1(a, c - b, c, z / (z - 1.0));
    }
    double term = 1.0;
    double sum = 1.0;
    for (int k = 0; k < 10000; ++k) {
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        if (std::abs(term) < 1e-16 * std::abs(sum)) return sum;
    }
    throw std::runtime_error("gauss_2f1: series did not converge in 10000 terms");
}

double reg_lower_gamma(double a, double x) {
    if (!(a > 0.0)) throw std::invalid_argument("reg_lower_gamma: a must be positive");
    if (x <= 0.0) return 0.0;
    const double lg = ln_gamma(a);
    if (x < a + 1.0) {
        // series for P(a, x)
        double ap = a;
        double del = 1.0 / a;
        double sum = del;
        for (int i = 0; i < 1000; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-16)
                return sum * std::exp(-x + a * std::log(x) - lg);
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // continued fraction for Q(a, x), modified Lentz
    const double tiny = 1e-300;
    double bcf = x + 1.0 - a;
    double ccf = 1.0 / tiny;
    double dcf = 1.0 / bcf;
    double h = dcf;
    for (int i = 1; i <= 1000; ++i) {
        const double an = -i * (i - a);
        bcf += 2.0;
        dcf = an * dcf + bcf;
        if (std::abs(dcf) < tiny) dcf = tiny;
        ccf = bcf + an / ccf;
        if (std::abs(ccf) < tiny) ccf = tiny;
        dcf = 1.0 / dcf;
        const double del = dcf * ccf;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    const double q = std::exp(-x + a * std::log(x) - lg) * h;
    return 1.0 - q;
}

double gamma_quantile(double shape, double u) {
    if (!(u > 0.0 && u < 1.0))
        throw std::invalid_argument("gamma_quantile: u must lie in (0, 1)");
    // Wilson-Hilferty start, with a small-shape fallback
    double x;
    {
        const double zq = normal_quantile(u);
        const double t = 1.0 - 1.0 / (9.0 * shape) + zq / (3.0 * std::sqrt(shape));
        x = shape * t * t * t;
        if (!(x > 0.0) || shape < 0.2)
            x = std::exp((std::log(u) + ln_gamma(shape + 1.0)) / shape);
        if (!(x > 0.0) || !std::isfinite(x)) x = shape;
    }
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 100; ++i) {
        const double f = reg_lower_gamma(shape, x) - u;
        if (f > 0.0) hi = std::min(hi, x);
        else lo = std::max(lo, x);
        const double pdf = std_gamma_pdf(shape, x);
        double step;
        if (pdf > 0.0 && std::isfinite(pdf)) {
            step = f / pdf;
        } else {
            step = 0.0;
        }
        double xn = x - step;
        // a Newton step from deep in a tail can overshoot by many orders of
        // magnitude even while staying inside the bracket; treat those as
        // bracket failures too
        const bool wild = xn > 64.0 * x || xn < x / 64.0;
        if (!(xn > lo) || !(xn < hi) || step == 0.0 || wild) {
            if (!std::isfinite(hi)) {
                xn = std::max(2.0 * x, 1e-300);
            } else if (lo > 0.0 && hi > 16.0 * lo) {
                // geometric bisection closes huge brackets in O(log log) steps
                xn = std::sqrt(lo) * std::sqrt(hi);
            } else {
                xn = 0.5 * (lo + hi);
            }
        }
        if (std::abs(xn - x) <= 1e-14 * std::max(x, 1e-300)) return xn;
        x = xn;
    }
    return x;
}

double sample_gamma(const GammaParams& params, Rng& rng) {
    const double shape = params.shape;
    if (shape < 1.0) {
        const GammaParams boosted(shape + 1.0, params.rate);
        const double u = rng.next_double();
        return sample_gamma(boosted, rng) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = rng.next_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.next_double();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v / params.rate;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / params.rate;
    }
}

std::pair<double, double> gamma_reparam_gradient(const GammaParams& params, double sample) {
    const double a = params.shape;
    const double rate = params.rate;
    const double x = rate * sample; // standardized draw
    const double pdf = std_gamma_pdf(a, x);
    if (!(pdf > 0.0) || !std::isfinite(pdf))
        throw std::runtime_error("gamma_reparam_gradient: density underflow at sample");
    const double h = 1e-4 * std::max(1.0, a);
    const double dPda = (reg_lower_gamma(a + h, x) - reg_lower_gamma(a - h, x)) / (2.0 * h);
    const double dz_dshape = -dPda / (rate * pdf);
    const double dz_drate = -sample / rate;
    return {dz_dshape, dz_drate};
}

} // namespace clv::num
