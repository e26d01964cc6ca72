#include "clv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "clv/numerics.hpp"

namespace clv::eval {

namespace {

using nlohmann::json;

void check_alignment(const std::map<std::string, double>& pred,
                     const std::map<std::string, double>& actual) {
    std::vector<std::string> offenders;
    for (const auto& [k, v] : pred)
        if (!actual.count(k)) offenders.push_back(k + " (prediction only)");
    for (const auto& [k, v] : actual)
        if (!pred.count(k)) offenders.push_back(k + " (actual only)");
    if (offenders.empty()) return;
    std::ostringstream msg;
    msg << "customer key mismatch between predictions and actuals:";
    for (size_t i = 0; i < offenders.size() && i < 8; ++i) msg << " " << offenders[i];
    if (offenders.size() > 8) msg << " ... (" << offenders.size() << " total)";
    throw AlignmentError(msg.str());
}

std::string customer_tag(long i, long n) {
    int width = 1;
    for (long v = n; v >= 10; v /= 10) ++width;
    std::ostringstream os;
    os << "c" << std::setw(width) << std::setfill('0') << i;
    return os.str();
}

void atomic_write(const std::string& path, const std::string& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        out << body;
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("atomic rename failed for: " + path);
}

std::string fingerprint(const ingest::TransactionLog& log) {
    // FNV-1a over a canonical rendering of every transaction
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    std::ostringstream row;
    row << std::setprecision(17);
    for (const auto& t : log.transactions) {
        row.str("");
        row << t.customer_id << "," << t.time << "," << t.amount << ";";
        mix(row.str());
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

int kind_index(ModelKind kind) { return static_cast<int>(kind); }

// deterministic per-cell seeds keyed by the model kind, so adding or
// reordering models never shifts another cell's randomness
std::uint64_t cell_seed(std::uint64_t master, ModelKind kind, std::uint64_t purpose) {
    return Rng::substream(master, static_cast<std::uint64_t>(kind_index(kind)), purpose)
        .next_u64();
}

std::vector<int> cohort_labels(const ingest::TransactionLog& calibration_log,
                               const std::vector<ingest::CustomerSummary>& summaries,
                               const ingest::CohortSpec& spec) {
    const auto onehots = ingest::build_cohort_covariates(calibration_log, spec);
    std::vector<int> labels;
    labels.reserve(summaries.size());
    for (const auto& s : summaries) {
        const auto it = onehots.find(s.customer_id);
        if (it == onehots.end())
            throw AlignmentError("no cohort label for customer " + s.customer_id);
        const auto& v = it->second;
        labels.push_back(static_cast<int>(
            std::max_element(v.begin(), v.end()) - v.begin()));
    }
    return labels;
}

clvae::PriorParams empirical_prior(const baseline::ParetoNBDParams& pnbd,
                                   const baseline::GGParams& gg) {
    clvae::PriorParams prior;
    prior.lambda_prior = {pnbd.r, pnbd.alpha};
    prior.mu_prior = {pnbd.s, pnbd.beta};
    prior.nu_prior = {gg.q, gg.gamma};
    prior.p_spend = gg.p;
    return prior;
}

// [customer][horizon] cumulative revenue predictions for one model
using RevenueGrid = std::vector<std::vector<double>>;

RevenueGrid predict_pnbd_gg(const baseline::ParetoNBDParams& pnbd,
                            const baseline::GGParams& gg,
                            const std::vector<ingest::CustomerSummary>& summaries,
                            const std::vector<double>& horizons) {
    RevenueGrid grid(summaries.size(), std::vector<double>(horizons.size()));
    for (size_t i = 0; i < summaries.size(); ++i) {
        const double spend = baseline::gg_expected_spend(gg, summaries[i]);
        for (size_t j = 0; j < horizons.size(); ++j)
            grid[i][j] = spend * baseline::pnbd_expected_transactions(pnbd, summaries[i],
                                                                      horizons[j]);
    }
    return grid;
}

RevenueGrid predict_clvae(const std::vector<ingest::CustomerSummary>& summaries,
                          const clvae::PriorParams& prior, const BenchmarkConfig& config,
                          ModelKind kind) {
    clvae::TrainConfig tc = config.train;
    tc.seed = cell_seed(config.seed, kind, 1);
    const int input_width =
        4 + static_cast<int>(summaries.empty() ? 0 : summaries.front().covariates.size());
    Rng init_rng(cell_seed(config.seed, kind, 2));
    clvae::Model model = clvae::make_model(tc, prior, input_width, init_rng);
    clvae::train(model, summaries, tc);

    predict::SimConfig sim;
    sim.horizons = config.horizons;
    sim.mc_samples = config.prediction_samples;
    sim.seed = cell_seed(config.seed, kind, 3);
    return predict::simulate_futures(model, summaries, sim).expected_revenue;
}

} // namespace

double rmse(const std::map<std::string, double>& pred,
            const std::map<std::string, double>& actual) {
    check_alignment(pred, actual);
    if (pred.empty()) throw AlignmentError("rmse: empty inputs");
    long double acc = 0.0L;
    for (const auto& [k, v] : pred) {
        const long double d = static_cast<long double>(v) - actual.at(k);
        acc += d * d;
    }
    return static_cast<double>(std::sqrt(acc / static_cast<long double>(pred.size())));
}

double mae(const std::map<std::string, double>& pred,
           const std::map<std::string, double>& actual) {
    check_alignment(pred, actual);
    if (pred.empty()) throw AlignmentError("mae: empty inputs");
    long double acc = 0.0L;
    for (const auto& [k, v] : pred)
        acc += std::abs(static_cast<long double>(v) - actual.at(k));
    return static_cast<double>(acc / static_cast<long double>(pred.size()));
}

SyntheticData generate_synthetic_mixture(const std::vector<SyntheticComponent>& components,
                                         long n, double window_weeks,
                                         double acquisition_weeks, Rng& rng) {
    if (components.empty()) throw ConfigError("generate_synthetic: no mixture components");
    if (n < 1) throw ConfigError("generate_synthetic: n must be >= 1");
    if (!(window_weeks > 0.0) || !(acquisition_weeks > 0.0) ||
        acquisition_weeks > window_weeks)
        throw ConfigError("generate_synthetic: need 0 < acquisition_weeks <= window_weeks");
    double total_weight = 0.0;
    for (const auto& c : components) {
        if (!(c.weight > 0.0))
            throw ConfigError("generate_synthetic: component weights must be positive");
        total_weight += c.weight;
    }

    SyntheticData out;
    out.log.time_unit = "weeks";
    for (long i = 0; i < n; ++i) {
        int comp = 0;
        double u = rng.next_double() * total_weight;
        while (comp + 1 < static_cast<int>(components.size()) &&
               u >= components[static_cast<size_t>(comp)].weight) {
            u -= components[static_cast<size_t>(comp)].weight;
            ++comp;
        }
        const auto& c = components[static_cast<size_t>(comp)];

        CustomerTruth t;
        t.customer_id = customer_tag(i, n);
        t.component = comp;
        t.lambda = num::sample_gamma({c.pnbd.r, c.pnbd.alpha}, rng);
        t.mu = num::sample_gamma({c.pnbd.s, c.pnbd.beta}, rng);
        t.nu = num::sample_gamma({c.gg.q, c.gg.gamma}, rng);
        t.acquisition_week = rng.next_double() * acquisition_weeks;
        t.lifetime_weeks = rng.next_exponential(t.mu);

        const double active_end =
            std::min(window_weeks, t.acquisition_week + t.lifetime_weeks);
        double week = t.acquisition_week;
        while (week <= active_end) {
            ingest::Transaction tx;
            tx.customer_id = t.customer_id;
            tx.time = week * 7.0; // log storage is in days
            tx.amount = num::sample_gamma({c.gg.p, t.nu}, rng);
            out.log.transactions.push_back(tx);
            week += rng.next_exponential(t.lambda);
        }
        out.truth.push_back(t);
    }
    std::sort(out.log.transactions.begin(), out.log.transactions.end(),
              [](const ingest::Transaction& a, const ingest::Transaction& b) {
                  return a.customer_id != b.customer_id ? a.customer_id < b.customer_id
                                                        : a.time < b.time;
              });
    return out;
}

SyntheticData generate_synthetic(const baseline::ParetoNBDParams& pnbd,
                                 const baseline::GGParams& gg, long n, double window_weeks,
                                 double acquisition_weeks, Rng& rng) {
    return generate_synthetic_mixture({SyntheticComponent{pnbd, gg, 1.0}}, n, window_weeks,
                                      acquisition_weeks, rng);
}

void write_truth_file(const std::string& path, const std::vector<CustomerTruth>& truth) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "customer_id,lambda,mu,nu,acquisition_week,lifetime_weeks,component\n";
    for (const auto& t : truth)
        out << t.customer_id << "," << t.lambda << "," << t.mu << "," << t.nu << ","
            << t.acquisition_week << "," << t.lifetime_weeks << "," << t.component << "\n";
    atomic_write(path, out.str());
}

std::string model_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::pnbd_gg: return "pnbd_gg";
        case ModelKind::pnbd_gg_per_cohort: return "pnbd_gg_per_cohort";
        case ModelKind::clvae: return "clvae";
        case ModelKind::clvae_covariates: return "clvae_covariates";
    }
    throw ConfigError("unknown model kind");
}

BenchmarkReport run_benchmark(const ingest::TransactionLog& log, double calibration_end_days,
                              const BenchmarkConfig& config) {
    if (config.models.empty()) throw ConfigError("run_benchmark: no models requested");
    if (config.horizons.empty()) throw ConfigError("run_benchmark: no horizons");
    double prev = 0.0;
    for (double h : config.horizons) {
        if (!(h > prev)) throw ConfigError("run_benchmark: horizons must be increasing");
        prev = h;
    }
    double observation_end = config.observation_end_days;
    if (observation_end <= 0.0)
        for (const auto& t : log.transactions) observation_end = std::max(observation_end, t.time);
    if (observation_end < calibration_end_days + 7.0 * config.horizons.back())
        throw ConfigError("run_benchmark: holdout window does not cover the longest horizon");

    // leakage guard: every model sees only this truncated log
    ingest::TransactionLog calibration_log;
    calibration_log.time_unit = log.time_unit;
    calibration_log.epoch_day = log.epoch_day;
    for (const auto& t : log.transactions)
        if (t.time <= calibration_end_days) calibration_log.transactions.push_back(t);

    const auto summaries = ingest::summarize_rfm(calibration_log, calibration_end_days);
    const auto holdout = ingest::holdout_revenue(log, calibration_end_days, config.horizons);
    std::map<std::string, size_t> holdout_row;
    for (size_t i = 0; i < holdout.customer_ids.size(); ++i)
        holdout_row[holdout.customer_ids[i]] = i;

    const bool needs_baseline =
        std::find(config.models.begin(), config.models.end(), ModelKind::pnbd_gg) !=
            config.models.end() ||
        std::find(config.models.begin(), config.models.end(), ModelKind::clvae) !=
            config.models.end() ||
        std::find(config.models.begin(), config.models.end(), ModelKind::clvae_covariates) !=
            config.models.end();
    baseline::FitResult<baseline::ParetoNBDParams> pnbd_fit;
    baseline::FitResult<baseline::GGParams> gg_fit;
    if (needs_baseline) {
        pnbd_fit = baseline::fit_pnbd(summaries);
        gg_fit = baseline::fit_gg(summaries);
    }

    BenchmarkReport report;
    report.horizons = config.horizons;
    report.seed = config.seed;
    report.dataset_fingerprint = fingerprint(log);

    for (ModelKind kind : config.models) {
        RevenueGrid grid;
        switch (kind) {
            case ModelKind::pnbd_gg:
                grid = predict_pnbd_gg(pnbd_fit.params, gg_fit.params, summaries,
                                       config.horizons);
                break;
            case ModelKind::pnbd_gg_per_cohort: {
                const auto labels = cohort_labels(calibration_log, summaries, config.cohort);
                const auto fits = baseline::fit_per_cohort(summaries, labels);
                grid.assign(summaries.size(), std::vector<double>(config.horizons.size()));
                for (size_t i = 0; i < summaries.size(); ++i) {
                    const auto& fit = fits.at(labels[i]);
                    const double spend =
                        baseline::gg_expected_spend(fit.gg.params, summaries[i]);
                    for (size_t j = 0; j < config.horizons.size(); ++j)
                        grid[i][j] = spend * baseline::pnbd_expected_transactions(
                                                 fit.pnbd.params, summaries[i],
                                                 config.horizons[j]);
                }
                break;
            }
            case ModelKind::clvae:
                grid = predict_clvae(summaries, empirical_prior(pnbd_fit.params, gg_fit.params),
                                     config, kind);
                break;
            case ModelKind::clvae_covariates: {
                auto with_cov = summaries;
                ingest::attach_covariates(
                    with_cov, ingest::build_cohort_covariates(calibration_log, config.cohort));
                grid = predict_clvae(with_cov, empirical_prior(pnbd_fit.params, gg_fit.params),
                                     config, kind);
                break;
            }
        }

        std::vector<BenchmarkCell> row;
        for (size_t j = 0; j < config.horizons.size(); ++j) {
            std::map<std::string, double> pred, actual;
            for (size_t i = 0; i < summaries.size(); ++i) {
                const auto it = holdout_row.find(summaries[i].customer_id);
                if (it == holdout_row.end())
                    throw AlignmentError("no holdout row for customer " +
                                         summaries[i].customer_id);
                pred[summaries[i].customer_id] = grid[i][j];
                actual[summaries[i].customer_id] = holdout.revenue[it->second][j];
            }
            row.push_back({rmse(pred, actual), mae(pred, actual)});
        }
        report.model_names.push_back(model_name(kind));
        report.cells.push_back(std::move(row));
    }

    json echo;
    echo["calibration_end_days"] = calibration_end_days;
    echo["observation_end_days"] = observation_end;
    echo["horizons_weeks"] = config.horizons;
    echo["seed"] = config.seed;
    echo["prediction_samples"] = config.prediction_samples;
    echo["models"] = report.model_names;
    echo["cohort"] = {{"granularity_months", config.cohort.granularity_months},
                      {"n_bins", config.cohort.n_bins}};
    echo["train"] = {{"encoder_width1", config.train.encoder_width1},
                     {"encoder_width2", config.train.encoder_width2},
                     {"decoder_width1", config.train.decoder_width1},
                     {"decoder_width2", config.train.decoder_width2},
                     {"learning_rate", config.train.learning_rate},
                     {"batch_size", config.train.batch_size},
                     {"max_epochs", config.train.max_epochs},
                     {"mc_samples", config.train.mc_samples},
                     {"patience", config.train.patience},
                     {"seed", config.train.seed},
                     {"validation_fraction", config.train.validation_fraction},
                     {"normalize_inputs", config.train.normalize_inputs}};
    report.config_echo = echo.dump(2);
    return report;
}

void write_report(std::ostream& out, const BenchmarkReport& report) {
    out << std::setprecision(17);
    out << "model";
    for (double h : report.horizons) out << ",rmse_" << h << ",mae_" << h;
    out << "\n";
    for (size_t m = 0; m < report.model_names.size(); ++m) {
        out << report.model_names[m];
        for (const auto& cell : report.cells[m]) out << "," << cell.rmse << "," << cell.mae;
        out << "\n";
    }
}

void write_report_json(std::ostream& out, const BenchmarkReport& report) {
    json j;
    j["dataset_fingerprint"] = report.dataset_fingerprint;
    j["seed"] = report.seed;
    j["horizons_weeks"] = report.horizons;
    j["config"] = json::parse(report.config_echo);
    j["results"] = json::array();
    for (size_t m = 0; m < report.model_names.size(); ++m) {
        json row;
        row["model"] = report.model_names[m];
        row["rmse"] = json::array();
        row["mae"] = json::array();
        for (const auto& cell : report.cells[m]) {
            row["rmse"].push_back(cell.rmse);
            row["mae"].push_back(cell.mae);
        }
        j["results"].push_back(row);
    }
    out << j.dump(2) << "\n";
}

void write_report_file(const std::string& path, const BenchmarkReport& report) {
    std::ostringstream os;
    write_report(os, report);
    atomic_write(path, os.str());
}

void write_report_json_file(const std::string& path, const BenchmarkReport& report) {
    std::ostringstream os;
    write_report_json(os, report);
    atomic_write(path, os.str());
}

} // namespace clv::eval
