#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "clv/baseline.hpp"
#include "clv/clvae.hpp"
#include "clv/ingest.hpp"
#include "clv/predict.hpp"
#include "clv/rng.hpp"

namespace clv::eval {

struct AlignmentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// per-customer error metrics; both inputs must carry identical key sets
double rmse(const std::map<std::string, double>& pred,
            const std::map<std::string, double>& actual);
double mae(const std::map<std::string, double>& pred,
           const std::map<std::string, double>& actual);

// -------- synthetic data generation --------

struct SyntheticComponent {
    baseline::ParetoNBDParams pnbd;
    baseline::GGParams gg;
    double weight = 1.0;
};

struct CustomerTruth {
    std::string customer_id;
    double lambda = 0.0; // weekly purchase rate
    double mu = 0.0;     // weekly dropout rate
    double nu = 0.0;     // spend rate
    double acquisition_week = 0.0;
    double lifetime_weeks = 0.0;
    int component = 0;
};

struct SyntheticData {
    ingest::TransactionLog log; // day-offset times, no epoch
    std::vector<CustomerTruth> truth;
};

// One customer per draw: (lambda, mu, nu) from the mixing Gammas, first
// purchase uniform on [0, acquisition_weeks), lifetime Exp(mu), repeat gaps
// Exp(lambda), per-transaction spend Gamma(p, nu), truncated at window end.
SyntheticData generate_synthetic(const baseline::ParetoNBDParams& pnbd,
                                 const baseline::GGParams& gg, long n, double window_weeks,
                                 double acquisition_weeks, Rng& rng);
// mixture variant: each customer first picks a component by weight
SyntheticData generate_synthetic_mixture(const std::vector<SyntheticComponent>& components,
                                         long n, double window_weeks,
                                         double acquisition_weeks, Rng& rng);

void write_truth_file(const std::string& path, const std::vector<CustomerTruth>& truth);

// -------- benchmark harness --------

enum class ModelKind { pnbd_gg, pnbd_gg_per_cohort, clvae, clvae_covariates };
std::string model_name(ModelKind kind);

struct BenchmarkConfig {
    std::vector<double> horizons{52.0, 104.0, 156.0, 208.0}; // weeks past cutoff
    std::vector<ModelKind> models{ModelKind::pnbd_gg, ModelKind::clvae};
    clvae::TrainConfig train;          // CLVAE variants
    int prediction_samples = 500;      // Monte Carlo futures per customer
    ingest::CohortSpec cohort;         // cohort-label construction
    std::uint64_t seed = 0;
    // end of the observed log in days; 0 means "infer from the data". Must
    // cover calibration_end + the longest horizon.
    double observation_end_days = 0.0;
};

struct BenchmarkCell {
    double rmse = 0.0;
    double mae = 0.0;
};

struct BenchmarkReport {
    std::vector<std::string> model_names;
    std::vector<double> horizons;
    std::vector<std::vector<BenchmarkCell>> cells; // [model][horizon]
    std::string dataset_fingerprint;               // content hash of the log
    std::uint64_t seed = 0;
    std::string config_echo; // structured document reproducing the run
};

// Fits every requested model on transactions at or before calibration_end
// only, predicts per-customer cumulative revenue per horizon, and scores
// against the realized holdout revenue.
BenchmarkReport run_benchmark(const ingest::TransactionLog& log, double calibration_end_days,
                              const BenchmarkConfig& config);

void write_report(std::ostream& out, const BenchmarkReport& report); // delimited grid
void write_report_json(std::ostream& out, const BenchmarkReport& report);
void write_report_file(const std::string& path, const BenchmarkReport& report);
void write_report_json_file(const std::string& path, const BenchmarkReport& report);

} // namespace clv::eval
