#pragma once

#include <array>
#include <string>
#include <vector>

#include "clv/clvae.hpp"
#include "clv/ingest.hpp"
#include "clv/rng.hpp"

namespace clv::predict {

using ingest::CustomerSummary;

struct SimConfig {
    std::vector<double> horizons{52.0, 104.0, 156.0, 208.0}; // weeks past T
    int mc_samples = 500;
    std::uint64_t seed = 0;
    bool retain_draws = false;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PredictionResult {
    std::vector<std::string> customer_ids;
    std::vector<double> horizons;
    std::vector<double> p_alive;                              // per customer
    std::vector<std::vector<double>> expected_transactions;   // [customer][horizon]
    std::vector<std::vector<double>> expected_revenue;        // [customer][horizon]
    // retained draws, [customer][draw][horizon]; empty unless requested
    std::vector<std::vector<std::vector<double>>> draws_n;
    std::vector<std::vector<std::vector<double>>> draws_s;
    bool overflow = false; // some draw hit the per-draw event cap
};

// probability the customer is still active at T given individual rates:
// [1 + (M/(Lambda+M)) (e^{(Lambda+M)(T-t_x)} - 1)]^{-1}, overflow-safe
double p_alive_individual(double Lambda, double M, const CustomerSummary& s);

// one Monte Carlo future of a single customer at fixed decoded rates:
// alive draw, residual lifetime, event accumulation, and spend draws
struct DrawOutcome {
    std::vector<double> n; // cumulative transactions per horizon
    std::vector<double> s; // cumulative spend per horizon
    bool overflow = false;
};
DrawOutcome simulate_single_draw(double Lambda, double M, double N, double p_spend,
                                 const CustomerSummary& summary,
                                 const std::vector<double>& horizons, Rng& rng);

// full pipeline: encoder posterior -> latent draws -> decoder -> simulation,
// with a dedicated rng substream per (customer, draw)
PredictionResult simulate_futures(const clvae::Model& model,
                                  const std::vector<CustomerSummary>& summaries,
                                  const SimConfig& config);

// decoder-bypassed variant with fixed per-customer rates (Lambda, M, N)
PredictionResult simulate_futures_fixed(const std::vector<std::array<double, 3>>& rates,
                                        double p_spend,
                                        const std::vector<CustomerSummary>& summaries,
                                        const SimConfig& config);

// delimited report: customer_id, p_alive, then E[N], E[S] pairs per horizon
void write_prediction_report(std::ostream& out, const PredictionResult& result);
void write_prediction_report_file(const std::string& path, const PredictionResult& result);
// draws file: customer_id, draw, horizon, N, S (requires retained draws)
void write_draws_file(const std::string& path, const PredictionResult& result);

} // namespace clv::predict
