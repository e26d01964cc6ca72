#include "clv/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

#include "clv/numerics.hpp"

namespace clv::baseline {

namespace {

using num::gauss_2f1;
using num::ln_gamma;
using num::log_sum_exp;

constexpr double kInf = std::numeric_limits<double>::infinity();

// s = 1 is a removable singularity of the expected-transactions formula;
// nudge past it
double nudged_s(double s) {
    if (std::abs(s - 1.0) < 1e-6) return s >= 1.0 ? 1.0 + 1e-6 : 1.0 - 1e-6;
    return s;
}

// ln A0 of the Fader-Hardie 2F1 formulation; A0 >= 0, -inf when t_x == T
double ln_a0(const ParetoNBDParams& pr, double x, double t_x, double T) {
    const double a = pr.r + pr.s + x;
    const double c = a + 1.0;
    double b, y;
    if (pr.alpha >= pr.beta) {
        b = pr.s + 1.0;
        y = pr.alpha;
    } else {
        b = pr.r + x;
        y = pr.beta;
    }
    const double d = std::abs(pr.alpha - pr.beta);
    const double ln_a1 =
        std::log(gauss_2f1(a, b, c, d / (y + t_x))) - a * std::log(y + t_x);
    const double ln_a2 =
        std::log(gauss_2f1(a, b, c, d / (y + T))) - a * std::log(y + T);
    if (ln_a2 >= ln_a1) return -kInf; // t_x == T (or numerically equal)
    return ln_a1 + std::log1p(-std::exp(ln_a2 - ln_a1));
}

// Optimization box on the log-parameters. The marginal likelihoods have flat
// ridges (e.g. the Gamma-Gamma spend shape p -> inf with q, gamma co-adapting)
// along which the simplex can drift to degenerate parameter values without a
// meaningful likelihood gain; rejecting points outside a generous box keeps
// every realistic fit interior while blocking the runaway.
constexpr double kLogParamBound = 13.8155105579642741; // ln(1e6)

bool inside_box(const std::vector<double>& lp) {
    for (const double v : lp)
        if (std::abs(v) > kLogParamBound) return false;
    return true;
}

// unitless spend-shape cap: p = 1e3 already means a within-customer spend
// coefficient of variation of ~3%, below which the data cannot distinguish
// larger p from heterogeneity in nu
constexpr double kLnSpendShapeMax = 6.907755278982137; // ln(1e3)

// generic Nelder-Mead minimizer on R^n
struct SimplexResult {
    std::vector<double> x;
    double f;
    bool converged;
    long evaluations;
};

SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x0, double step, double tol, long max_evals) {
    const size_t n = x0.size();
    long evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        const double v = f(x);
        return std::isfinite(v) ? v : kInf;
    };
    std::vector<std::pair<double, std::vector<double>>> simplex;
    simplex.push_back({eval(x0), x0});
    for (size_t i = 0; i < n; ++i) {
        auto x = x0;
        x[i] += step;
        simplex.push_back({eval(x), x});
    }
    auto order = [&] {
        std::sort(simplex.begin(), simplex.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
    };
    auto centroid = [&] {
        std::vector<double> c(n, 0.0);
        for (size_t k = 0; k < n; ++k)
            for (size_t i = 0; i < n; ++i) c[i] += simplex[k].second[i] / n;
        return c;
    };
    order();
    while (evals < max_evals) {
        double diam = 0.0;
        for (size_t k = 1; k <= n; ++k)
            for (size_t i = 0; i < n; ++i)
                diam = std::max(diam, std::abs(simplex[k].second[i] - simplex[0].second[i]));
        if (diam < tol)
            return {simplex[0].second, simplex[0].first, true, evals};

        const auto c = centroid();
        auto point = [&](double coef) {
            std::vector<double> x(n);
            for (size_t i = 0; i < n; ++i)
                x[i] = c[i] + coef * (simplex[n].second[i] - c[i]);
            return x;
        };
        const auto xr = point(-1.0);
        const double fr = eval(xr);
        if (fr < simplex[0].first) {
            const auto xe = point(-2.0);
            const double fe = eval(xe);
            simplex[n] = fe < fr ? std::pair{fe, xe} : std::pair{fr, xr};
        } else if (fr < simplex[n - 1].first) {
            simplex[n] = {fr, xr};
        } else {
            const auto xc = point(fr < simplex[n].first ? -0.5 : 0.5);
            const double fc = eval(xc);
            if (fc < std::min(fr, simplex[n].first)) {
                simplex[n] = {fc, xc};
            } else {
                for (size_t k = 1; k <= n; ++k) {
                    for (size_t i = 0; i < n; ++i)
                        simplex[k].second[i] =
                            0.5 * (simplex[k].second[i] + simplex[0].second[i]);
                    simplex[k].first = eval(simplex[k].second);
                }
            }
        }
        order();
    }
    return {simplex[0].second, simplex[0].first, false, evals};
}

long count_repeaters(const std::vector<CustomerSummary>& summaries) {
    long n = 0;
    for (const auto& s : summaries)
        if (s.x >= 1) ++n;
    return n;
}

} // namespace

double pnbd_log_likelihood_one(const ParetoNBDParams& params, const CustomerSummary& cs) {
    ParetoNBDParams pr = params;
    pr.s = nudged_s(pr.s);
    const double x = static_cast<double>(cs.x);
    const double ln_p1 = -(pr.r + x) * std::log(pr.alpha + cs.T) - pr.s * std::log(pr.beta + cs.T);
    const double la0 = ln_a0(pr, x, cs.t_x, cs.T);
    const double ln_p2 = std::log(pr.s) - std::log(pr.r + pr.s + x) + la0;
    return ln_gamma(pr.r + x) - ln_gamma(pr.r) + pr.r * std::log(pr.alpha) +
           pr.s * std::log(pr.beta) + log_sum_exp(ln_p1, ln_p2);
}

double pnbd_log_likelihood(const ParetoNBDParams& params,
                           const std::vector<CustomerSummary>& summaries) {
    double total = 0.0;
    for (size_t i = 0; i < summaries.size(); ++i) {
        const double ll = pnbd_log_likelihood_one(params, summaries[i]);
        if (!std::isfinite(ll))
            throw NumericalError("pnbd_log_likelihood: non-finite value at customer index " +
                                 std::to_string(i) + " (" + summaries[i].customer_id + ")");
        total += ll;
    }
    return total;
}

FitResult<ParetoNBDParams> fit_pnbd(const std::vector<CustomerSummary>& summaries,
                                    std::optional<ParetoNBDParams> init) {
    if (summaries.size() < 2)
        throw DegenerateDataError("fit_pnbd: need at least 2 customers");
    if (count_repeaters(summaries) == 0)
        throw DegenerateDataError("fit_pnbd: no repeaters in the data");

    ParetoNBDParams start{};
    if (init) {
        start = *init;
    } else {
        double ipt_sum = 0.0, t_sum = 0.0;
        long ipt_n = 0;
        for (const auto& s : summaries) {
            if (s.x >= 1) {
                ipt_sum += s.t_x / static_cast<double>(s.x);
                ++ipt_n;
            }
            t_sum += s.T;
        }
        start.r = 1.0;
        start.alpha = std::max(ipt_sum / std::max<long>(ipt_n, 1), 1e-2);
        start.s = 1.0;
        start.beta = std::max(t_sum / static_cast<double>(summaries.size()), 1e-2);
    }

    auto negll = [&](const std::vector<double>& lp) {
        if (!inside_box(lp)) return kInf;
        const ParetoNBDParams p{std::exp(lp[0]), std::exp(lp[1]), std::exp(lp[2]),
                                std::exp(lp[3])};
        try {
            return -pnbd_log_likelihood(p, summaries);
        } catch (const std::exception&) {
            return kInf;
        }
    };
    const std::vector<double> x0 = {std::log(start.r), std::log(start.alpha),
                                    std::log(start.s), std::log(start.beta)};
    const auto res = nelder_mead(negll, x0, 0.5, 1e-8, 10000);
    FitResult<ParetoNBDParams> out;
    out.params = {std::exp(res.x[0]), std::exp(res.x[1]), std::exp(res.x[2]),
                  std::exp(res.x[3])};
    out.log_likelihood = -res.f;
    out.converged = res.converged;
    out.evaluations = res.evaluations;
    return out;
}

double gg_log_likelihood_one(const GGParams& g, const CustomerSummary& cs) {
    const double x = static_cast<double>(cs.x);
    const double px = g.p * x;
    return ln_gamma(px + g.q) - ln_gamma(px) - ln_gamma(g.q) + g.q * std::log(g.gamma) +
           px * std::log(x) + (px - 1.0) * std::log(cs.z_bar) -
           (px + g.q) * std::log(g.gamma + x * cs.z_bar);
}

double gg_log_likelihood(const GGParams& params, const std::vector<CustomerSummary>& summaries) {
    double total = 0.0;
    for (size_t i = 0; i < summaries.size(); ++i) {
        if (summaries[i].x < 1) continue; // spend factor is undefined at x = 0
        const double ll = gg_log_likelihood_one(params, summaries[i]);
        if (!std::isfinite(ll))
            throw NumericalError("gg_log_likelihood: non-finite value at customer index " +
                                 std::to_string(i) + " (" + summaries[i].customer_id + ")");
        total += ll;
    }
    return total;
}

FitResult<GGParams> fit_gg(const std::vector<CustomerSummary>& summaries) {
    if (count_repeaters(summaries) == 0)
        throw DegenerateDataError("fit_gg: no repeaters in the data");
    double zsum = 0.0;
    long n = 0;
    for (const auto& s : summaries)
        if (s.x >= 1) {
            zsum += s.z_bar;
            ++n;
        }
    const double zmean = zsum / n;

    auto negll = [&](const std::vector<double>& lp) {
        if (!inside_box(lp) || lp[0] > kLnSpendShapeMax) return kInf;
        const GGParams g{std::exp(lp[0]), std::exp(lp[1]), std::exp(lp[2])};
        try {
            return -gg_log_likelihood(g, summaries);
        } catch (const std::exception&) {
            return kInf;
        }
    };
    const std::vector<double> x0 = {0.0, 0.0, std::log(1.0 / zmean)};
    const auto res = nelder_mead(negll, x0, 0.5, 1e-8, 10000);
    FitResult<GGParams> out;
    out.params = {std::exp(res.x[0]), std::exp(res.x[1]), std::exp(res.x[2])};
    out.log_likelihood = -res.f;
    out.converged = res.converged;
    out.evaluations = res.evaluations;
    return out;
}

double pnbd_p_alive(const ParetoNBDParams& params, const CustomerSummary& cs) {
    ParetoNBDParams pr = params;
    pr.s = nudged_s(pr.s);
    const double x = static_cast<double>(cs.x);
    const double la0 = ln_a0(pr, x, cs.t_x, cs.T);
    if (la0 == -kInf) return 1.0;
    const double ln_pre = std::log(pr.s) - std::log(pr.r + pr.s + x) +
                          (pr.r + x) * std::log(pr.alpha + cs.T) +
                          pr.s * std::log(pr.beta + cs.T) + la0;
    // 1 / (1 + e^ln_pre), stable on both sides
    if (ln_pre > 0.0) return std::exp(-ln_pre) / (1.0 + std::exp(-ln_pre));
    return 1.0 / (1.0 + std::exp(ln_pre));
}

double pnbd_expected_transactions(const ParetoNBDParams& params, const CustomerSummary& cs,
                                  double t) {
    if (!(t > 0.0)) return 0.0;
    ParetoNBDParams pr = params;
    pr.s = nudged_s(pr.s);
    const double x = static_cast<double>(cs.x);
    const double lead = (pr.r + x) * (pr.beta + cs.T) / ((pr.alpha + cs.T) * (pr.s - 1.0));
    const double decay =
        1.0 - std::exp((pr.s - 1.0) * std::log((pr.beta + cs.T) / (pr.beta + cs.T + t)));
    return lead * decay * pnbd_p_alive(params, cs);
}

double gg_expected_spend(const GGParams& g, const CustomerSummary& cs) {
    const double x = static_cast<double>(cs.x);
    const double denom = g.p * x + g.q - 1.0;
    if (!(denom > 0.0))
        throw NumericalError("gg_expected_spend: p*x + q - 1 must be positive");
    return (g.gamma * g.p + g.p * x * cs.z_bar) / denom;
}

std::map<int, CohortFit> fit_per_cohort(const std::vector<CustomerSummary>& summaries,
                                        const std::vector<int>& cohort_labels) {
    if (cohort_labels.size() != summaries.size())
        throw std::invalid_argument("fit_per_cohort: one label per summary required");
    std::map<int, std::vector<CustomerSummary>> groups;
    for (size_t i = 0; i < summaries.size(); ++i)
        groups[cohort_labels[i]].push_back(summaries[i]);

    std::optional<CombinedFit> pooled;
    auto pooled_fit = [&]() -> const CombinedFit& {
        if (!pooled) pooled = CombinedFit{fit_pnbd(summaries), fit_gg(summaries)};
        return *pooled;
    };

    std::map<int, CohortFit> out;
    for (auto& [label, group] : groups) {
        CohortFit cf;
        if (group.size() < 2 || count_repeaters(group) == 0) {
            cf.pnbd = pooled_fit().pnbd;
            cf.gg = pooled_fit().gg;
            cf.pooled_fallback = true;
        } else {
            cf.pnbd = fit_pnbd(group);
            cf.gg = fit_gg(group);
        }
        out[label] = std::move(cf);
    }
    return out;
}

void write_params_file(const std::string& path, const CombinedFit& fit) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        out << std::setprecision(17);
        out << "r " << fit.pnbd.params.r << "\n";
        out << "alpha " << fit.pnbd.params.alpha << "\n";
        out << "s " << fit.pnbd.params.s << "\n";
        out << "beta " << fit.pnbd.params.beta << "\n";
        out << "p " << fit.gg.params.p << "\n";
        out << "q " << fit.gg.params.q << "\n";
        out << "gamma " << fit.gg.params.gamma << "\n";
        out << "log_likelihood " << fit.pnbd.log_likelihood + fit.gg.log_likelihood << "\n";
        out << "converged " << (fit.pnbd.converged && fit.gg.converged ? 1 : 0) << "\n";
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("atomic rename failed for: " + path);
}

CombinedFit read_params_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open params file: " + path);
    std::map<std::string, double> kv;
    std::string key;
    double value;
    while (in >> key >> value) kv[key] = value;
    for (const char* k : {"r", "alpha", "s", "beta", "p", "q", "gamma"})
        if (!kv.count(k))
            throw std::runtime_error("params file missing key '" + std::string(k) + "': " + path);
    CombinedFit fit;
    fit.pnbd.params = {kv["r"], kv["alpha"], kv["s"], kv["beta"]};
    fit.gg.params = {kv["p"], kv["q"], kv["gamma"]};
    fit.pnbd.log_likelihood = kv.count("log_likelihood") ? kv["log_likelihood"] : 0.0;
    fit.pnbd.converged = kv.count("converged") ? kv["converged"] != 0.0 : false;
    fit.gg.converged = fit.pnbd.converged;
    return fit;
}

} // namespace clv::baseline
