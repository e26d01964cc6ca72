#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clv/ingest.hpp"

namespace clv::baseline {

using ingest::CustomerSummary;

struct ParetoNBDParams {
    double r;     // purchase-rate mixing shape
    double alpha; // purchase-rate mixing rate
    double s;     // dropout-rate mixing shape
    double beta;  // dropout-rate mixing rate
};

struct GGParams {
    double p;     // spend shape per transaction
    double q;     // spend-rate mixing shape
    double gamma; // spend-rate mixing rate
};

struct DegenerateDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class P>
struct FitResult {
    P params;
    double log_likelihood = 0.0;
    bool converged = false;
    long evaluations = 0;
};

// marginal (heterogeneity-integrated) Pareto/NBD log-likelihood, summed
double pnbd_log_likelihood(const ParetoNBDParams& params,
                           const std::vector<CustomerSummary>& summaries);
double pnbd_log_likelihood_one(const ParetoNBDParams& params, const CustomerSummary& s);

FitResult<ParetoNBDParams> fit_pnbd(const std::vector<CustomerSummary>& summaries,
                                    std::optional<ParetoNBDParams> init = std::nullopt);

// Gamma-Gamma marginal log-likelihood over repeaters (x >= 1)
double gg_log_likelihood(const GGParams& params, const std::vector<CustomerSummary>& summaries);
double gg_log_likelihood_one(const GGParams& params, const CustomerSummary& s);

FitResult<GGParams> fit_gg(const std::vector<CustomerSummary>& summaries);

// posterior probability the customer is alive at T
double pnbd_p_alive(const ParetoNBDParams& params, const CustomerSummary& s);

// expected transactions in (T, T + t], t in weeks
double pnbd_expected_transactions(const ParetoNBDParams& params, const CustomerSummary& s,
                                  double t);

// posterior expected spend per transaction
double gg_expected_spend(const GGParams& params, const CustomerSummary& s);

struct CohortFit {
    FitResult<ParetoNBDParams> pnbd;
    FitResult<GGParams> gg;
    bool pooled_fallback = false;
};

// independent fits per cohort label; degenerate cohorts fall back to the
// pooled fit with pooled_fallback set
std::map<int, CohortFit> fit_per_cohort(const std::vector<CustomerSummary>& summaries,
                                        const std::vector<int>& cohort_labels);

// human-readable key-value document for a combined PNBD + GG fit
struct CombinedFit {
    FitResult<ParetoNBDParams> pnbd;
    FitResult<GGParams> gg;
};
void write_params_file(const std::string& path, const CombinedFit& fit);
CombinedFit read_params_file(const std::string& path);

} // namespace clv::baseline
