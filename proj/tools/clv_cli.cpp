// clv: command-line front end for ingestion, fitting, prediction, and
// benchmarking. One subcommand per invocation; every run writes a resolved
// configuration echo next to its primary output so it can be replayed with
// --config.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "clv/baseline.hpp"
#include "clv/clvae.hpp"
#include "clv/eval.hpp"
#include "clv/ingest.hpp"
#include "clv/predict.hpp"

namespace {

using namespace clv;

struct CategorizedError : std::runtime_error {
    std::string category;
    CategorizedError(std::string cat, const std::string& msg)
        : std::runtime_error(msg), category(std::move(cat)) {}
};

// relative outputs land in CLV_OUTPUT_DIR when it is set
std::string out_path(const std::string& p) {
    const char* dir = std::getenv("CLV_OUTPUT_DIR");
    if (!dir || !*dir || p.empty() || p.front() == '/') return p;
    return std::string(dir) + "/" + p;
}

void atomic_write(const std::string& path, const std::string& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw CategorizedError("io-error", "cannot open for write: " + tmp);
        out << body;
        if (!out) throw CategorizedError("io-error", "write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw CategorizedError("io-error", "atomic rename failed for: " + path);
}

void write_config_echo(CLI::App& app, const std::string& primary_output) {
    atomic_write(out_path(primary_output) + ".config",
                 app.config_to_str(/*default_also=*/true, /*write_description=*/false));
}

void require_file(const std::string& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw CategorizedError("io-error", what + " not readable: " + path);
}

eval::ModelKind parse_model(const std::string& name) {
    if (name == "pnbd_gg") return eval::ModelKind::pnbd_gg;
    if (name == "pnbd_gg_per_cohort") return eval::ModelKind::pnbd_gg_per_cohort;
    if (name == "clvae") return eval::ModelKind::clvae;
    if (name == "clvae_covariates") return eval::ModelKind::clvae_covariates;
    throw CategorizedError("validation-error", "unknown model name: " + name);
}

void add_train_options(CLI::App* cmd, clvae::TrainConfig& tc) {
    cmd->add_option("--learning-rate", tc.learning_rate, "Adam learning rate");
    cmd->add_option("--batch-size", tc.batch_size, "mini-batch size");
    cmd->add_option("--max-epochs", tc.max_epochs, "maximum training epochs");
    cmd->add_option("--mc-samples", tc.mc_samples, "Monte Carlo samples per ELBO");
    cmd->add_option("--patience", tc.patience, "early-stopping patience in epochs");
    cmd->add_option("--train-seed", tc.seed, "training seed");
    cmd->add_option("--validation-fraction", tc.validation_fraction,
                    "fraction of customers held out for validation");
    cmd->add_option("--encoder-width1", tc.encoder_width1, "first encoder layer width");
    cmd->add_option("--encoder-width2", tc.encoder_width2, "second encoder layer width");
    cmd->add_option("--decoder-width1", tc.decoder_width1, "first decoder layer width");
    cmd->add_option("--decoder-width2", tc.decoder_width2, "second decoder layer width");
    cmd->add_flag("--normalize,!--no-normalize", tc.normalize_inputs,
                  "standardize encoder inputs on the training split")
        ->default_val(true);
}

clvae::PriorParams prior_from_params(const baseline::CombinedFit& fit) {
    clvae::PriorParams prior;
    prior.lambda_prior = {fit.pnbd.params.r, fit.pnbd.params.alpha};
    prior.mu_prior = {fit.pnbd.params.s, fit.pnbd.params.beta};
    prior.nu_prior = {fit.gg.params.q, fit.gg.params.gamma};
    prior.p_spend = fit.gg.params.p;
    return prior;
}

void write_train_log(const std::string& path, const clvae::TrainLog& log) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "epoch,train_elbo,validation_elbo\n";
    for (const auto& e : log.epochs)
        os << e.epoch << "," << e.train_elbo << "," << e.validation_elbo << "\n";
    os << "# best_epoch=" << log.best_epoch
       << " best_validation_elbo=" << log.best_validation_elbo << "\n";
    atomic_write(path, os.str());
}

int dispatch(int argc, char** argv) {
    CLI::App app{"clv: Pareto/NBD + Gamma-Gamma and CLVAE customer-base modeling"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "",
                   "key-value configuration file with one section per subcommand");

    // ---- ingest ----
    auto* ingest_cmd = app.add_subcommand("ingest", "transaction log -> RFM summaries");
    std::string in_log, in_out = "summaries.csv";
    double in_cutoff = 0.0;
    ingest::ColumnMapping mapping;
    int in_cohort_bins = 0, in_cohort_months = 1;
    bool in_day_offsets = false;
    std::string delimiter = ",";
    ingest_cmd->configurable();
    ingest_cmd->add_option("--input", in_log, "delimited transaction log")->required();
    ingest_cmd->add_flag("--day-offsets", in_day_offsets,
                         "input uses numeric day offsets instead of ISO dates");
    ingest_cmd->add_option("--output", in_out, "summaries file to write");
    ingest_cmd->add_option("--calibration-end-days", in_cutoff, "calibration cutoff in days")
        ->required();
    ingest_cmd->add_option("--id-column", mapping.id_column, "customer id column name");
    ingest_cmd->add_option("--date-column", mapping.date_column, "ISO date column name");
    ingest_cmd->add_option("--amount-column", mapping.amount_column, "amount column name");
    ingest_cmd->add_option("--delimiter", delimiter, "field delimiter (one character)");
    ingest_cmd->add_option("--cohort-bins", in_cohort_bins,
                           "attach this many one-hot acquisition-cohort covariates");
    ingest_cmd->add_option("--cohort-months", in_cohort_months, "months per cohort bin");

    // ---- fit-baseline ----
    auto* fitb_cmd = app.add_subcommand("fit-baseline", "summaries -> PNBD + GG MLE params");
    fitb_cmd->configurable();
    std::string fb_summaries, fb_out = "params.txt";
    fitb_cmd->add_option("--summaries", fb_summaries, "summaries file")->required();
    fitb_cmd->add_option("--output", fb_out, "parameter document to write");

    // ---- fit-clvae ----
    auto* fitv_cmd = app.add_subcommand("fit-clvae", "summaries -> trained CLVAE checkpoint");
    fitv_cmd->configurable();
    std::string fv_summaries, fv_out = "clvae.ckpt", fv_prior;
    double fv_cutoff = -1.0;
    clvae::TrainConfig train_cfg;
    fitv_cmd->add_option("--summaries", fv_summaries, "summaries file")->required();
    fitv_cmd->add_option("--output", fv_out, "checkpoint path to write");
    fitv_cmd->add_option("--prior-params", fv_prior,
                         "baseline parameter document used as the Gamma prior "
                         "(default: fit one on the summaries)");
    fitv_cmd->add_option("--calibration-end-days", fv_cutoff,
                         "calibration cutoff recorded in checkpoint metadata");
    add_train_options(fitv_cmd, train_cfg);

    // ---- predict ----
    auto* pred_cmd = app.add_subcommand("predict", "checkpoint + summaries -> revenue report");
    pred_cmd->configurable();
    std::string pr_ckpt, pr_summaries, pr_out = "predictions.csv", pr_draws;
    predict::SimConfig sim_cfg;
    pred_cmd->add_option("--checkpoint", pr_ckpt, "trained CLVAE checkpoint")->required();
    pred_cmd->add_option("--summaries", pr_summaries, "summaries file")->required();
    pred_cmd->add_option("--output", pr_out, "prediction report to write");
    pred_cmd->add_option("--horizons", sim_cfg.horizons, "horizons in weeks, increasing");
    pred_cmd->add_option("--samples", sim_cfg.mc_samples, "Monte Carlo futures per customer");
    pred_cmd->add_option("--seed", sim_cfg.seed, "simulation seed");
    pred_cmd->add_option("--draws", pr_draws, "also write per-draw outcomes to this file");

    // ---- evaluate ----
    auto* eval_cmd = app.add_subcommand("evaluate", "transaction log -> benchmark report");
    eval_cmd->configurable();
    std::string ev_log, ev_out = "benchmark.csv", ev_json;
    double ev_cutoff = 0.0;
    std::vector<std::string> ev_models = {"pnbd_gg", "clvae"};
    eval::BenchmarkConfig bench_cfg;
    eval_cmd->add_option("--log", ev_log, "day-offset transaction log")->required();
    eval_cmd->add_option("--calibration-end-days", ev_cutoff, "calibration cutoff in days")
        ->required();
    eval_cmd->add_option("--output", ev_out, "delimited report to write");
    eval_cmd->add_option("--json", ev_json, "also write a structured report here");
    eval_cmd->add_option("--models", ev_models,
                         "subset of pnbd_gg pnbd_gg_per_cohort clvae clvae_covariates");
    eval_cmd->add_option("--horizons", bench_cfg.horizons, "horizons in weeks, increasing");
    eval_cmd->add_option("--samples", bench_cfg.prediction_samples,
                         "Monte Carlo futures per customer");
    eval_cmd->add_option("--seed", bench_cfg.seed, "benchmark master seed");
    eval_cmd->add_option("--observation-end-days", bench_cfg.observation_end_days,
                         "end of the observed log (default: last transaction)");
    eval_cmd->add_option("--cohort-bins", bench_cfg.cohort.n_bins, "cohort bin count");
    eval_cmd->add_option("--cohort-months", bench_cfg.cohort.granularity_months,
                         "months per cohort bin");
    add_train_options(eval_cmd, bench_cfg.train);

    // ---- simulate ----
    auto* sim_cmd = app.add_subcommand("simulate", "ground-truth params -> synthetic log");
    sim_cmd->configurable();
    std::string sm_out = "synthetic.csv", sm_truth = "truth.csv";
    long sm_n = 1000;
    double sm_window = 156.0, sm_acquisition = 104.0;
    std::uint64_t sm_seed = 0;
    baseline::ParetoNBDParams sm_pnbd{0.55, 10.6, 0.61, 11.7};
    baseline::GGParams sm_gg{6.25, 3.74, 15.44};
    sim_cmd->add_option("--output", sm_out, "synthetic day-offset log to write");
    sim_cmd->add_option("--truth", sm_truth, "per-customer latent truth file to write");
    sim_cmd->add_option("--customers", sm_n, "number of customers");
    sim_cmd->add_option("--window-weeks", sm_window, "observation window in weeks");
    sim_cmd->add_option("--acquisition-weeks", sm_acquisition,
                        "first purchases fall uniformly in this many initial weeks");
    sim_cmd->add_option("--seed", sm_seed, "generator seed");
    sim_cmd->add_option("--r", sm_pnbd.r, "purchase-rate mixing shape");
    sim_cmd->add_option("--alpha", sm_pnbd.alpha, "purchase-rate mixing rate");
    sim_cmd->add_option("--s", sm_pnbd.s, "dropout-rate mixing shape");
    sim_cmd->add_option("--beta", sm_pnbd.beta, "dropout-rate mixing rate");
    sim_cmd->add_option("--p", sm_gg.p, "spend shape per transaction");
    sim_cmd->add_option("--q", sm_gg.q, "spend-rate mixing shape");
    sim_cmd->add_option("--gamma", sm_gg.gamma, "spend-rate mixing rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        std::ostringstream msg;
        app.exit(e, std::cout, msg);
        std::cerr << "error: usage-error: " << msg.str();
        return 2;
    }

    if (ingest_cmd->parsed()) {
        require_file(in_log, "transaction log");
        if (delimiter.size() != 1)
            throw CategorizedError("validation-error", "delimiter must be one character");
        mapping.delimiter = delimiter[0];
        const auto log = in_day_offsets ? ingest::read_day_log_file(in_log)
                                        : ingest::parse_transaction_log_file(in_log, mapping);
        auto summaries = ingest::summarize_rfm(log, in_cutoff);
        if (in_cohort_bins > 0) {
            ingest::CohortSpec spec{in_cohort_months, in_cohort_bins};
            ingest::attach_covariates(summaries, ingest::build_cohort_covariates(log, spec));
        }
        ingest::write_summaries_file(out_path(in_out), summaries);
        write_config_echo(app, in_out);
        std::cout << "wrote " << summaries.size() << " summaries to " << out_path(in_out)
                  << "\n";
        return 0;
    }

    if (fitb_cmd->parsed()) {
        require_file(fb_summaries, "summaries file");
        const auto summaries = ingest::read_summaries_file(fb_summaries);
        baseline::CombinedFit fit;
        fit.pnbd = baseline::fit_pnbd(summaries);
        fit.gg = baseline::fit_gg(summaries);
        baseline::write_params_file(out_path(fb_out), fit);
        write_config_echo(app, fb_out);
        std::cout << "wrote baseline parameters to " << out_path(fb_out) << "\n";
        return 0;
    }

    if (fitv_cmd->parsed()) {
        require_file(fv_summaries, "summaries file");
        const auto summaries = ingest::read_summaries_file(fv_summaries);
        baseline::CombinedFit base;
        if (!fv_prior.empty()) {
            require_file(fv_prior, "prior parameter document");
            base = baseline::read_params_file(fv_prior);
        } else {
            base.pnbd = baseline::fit_pnbd(summaries);
            base.gg = baseline::fit_gg(summaries);
        }
        const int input_width =
            4 + static_cast<int>(summaries.empty() ? 0 : summaries.front().covariates.size());
        Rng init_rng(train_cfg.seed);
        clvae::Model model =
            clvae::make_model(train_cfg, prior_from_params(base), input_width, init_rng);
        const clvae::TrainLog log = clvae::train(model, summaries, train_cfg);
        clvae::CheckpointMeta meta;
        meta.config = train_cfg;
        meta.customer_count = static_cast<long>(summaries.size());
        if (fv_cutoff >= 0.0) meta.calibration_end_days = fv_cutoff;
        clvae::save_checkpoint(out_path(fv_out), model, meta);
        write_train_log(out_path(fv_out) + ".trainlog.csv", log);
        write_config_echo(app, fv_out);
        std::cout << "trained " << log.epochs.size() << " epochs; best epoch "
                  << log.best_epoch << "; checkpoint at " << out_path(fv_out) << "\n";
        return 0;
    }

    if (pred_cmd->parsed()) {
        require_file(pr_ckpt, "checkpoint");
        require_file(pr_summaries, "summaries file");
        const auto summaries = ingest::read_summaries_file(pr_summaries);
        const clvae::Model model = clvae::load_checkpoint(pr_ckpt);
        sim_cfg.retain_draws = !pr_draws.empty();
        const auto result = predict::simulate_futures(model, summaries, sim_cfg);
        predict::write_prediction_report_file(out_path(pr_out), result);
        if (!pr_draws.empty()) predict::write_draws_file(out_path(pr_draws), result);
        write_config_echo(app, pr_out);
        std::cout << "wrote predictions for " << summaries.size() << " customers to "
                  << out_path(pr_out) << (result.overflow ? " (event cap hit)" : "") << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        require_file(ev_log, "transaction log");
        bench_cfg.models.clear();
        for (const auto& name : ev_models) bench_cfg.models.push_back(parse_model(name));
        const auto log = ingest::read_day_log_file(ev_log);
        const auto report = eval::run_benchmark(log, ev_cutoff, bench_cfg);
        eval::write_report_file(out_path(ev_out), report);
        if (!ev_json.empty()) eval::write_report_json_file(out_path(ev_json), report);
        write_config_echo(app, ev_out);
        std::cout << "wrote benchmark report (" << report.model_names.size() << " models x "
                  << report.horizons.size() << " horizons) to " << out_path(ev_out) << "\n";
        return 0;
    }

    if (sim_cmd->parsed()) {
        Rng rng(sm_seed);
        const auto data =
            eval::generate_synthetic(sm_pnbd, sm_gg, sm_n, sm_window, sm_acquisition, rng);
        ingest::write_transaction_log_file(out_path(sm_out), data.log);
        eval::write_truth_file(out_path(sm_truth), data.truth);
        write_config_echo(app, sm_out);
        std::cout << "wrote " << data.log.transactions.size() << " transactions for " << sm_n
                  << " customers to " << out_path(sm_out) << "\n";
        return 0;
    }

    std::cerr << "error: usage-error: no subcommand selected\n";
    return 2;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return dispatch(argc, argv);
    } catch (const CategorizedError& e) {
        std::cerr << "error: " << e.category << ": " << e.what() << "\n";
        return 1;
    } catch (const ingest::ParseError& e) {
        std::cerr << "error: parse-error: " << e.what() << "\n";
        return 1;
    } catch (const ingest::ValidationError& e) {
        std::cerr << "error: validation-error: " << e.what() << "\n";
        return 1;
    } catch (const baseline::DegenerateDataError& e) {
        std::cerr << "error: degenerate-data: " << e.what() << "\n";
        return 1;
    } catch (const baseline::NumericalError& e) {
        std::cerr << "error: numerical-error: " << e.what() << "\n";
        return 1;
    } catch (const clvae::NumericalError& e) {
        std::cerr << "error: numerical-error: " << e.what() << "\n";
        return 1;
    } catch (const clvae::ConfigError& e) {
        std::cerr << "error: validation-error: " << e.what() << "\n";
        return 1;
    } catch (const clvae::ShapeError& e) {
        std::cerr << "error: validation-error: " << e.what() << "\n";
        return 1;
    } catch (const predict::ConfigError& e) {
        std::cerr << "error: validation-error: " << e.what() << "\n";
        return 1;
    } catch (const eval::ConfigError& e) {
        std::cerr << "error: validation-error: " << e.what() << "\n";
        return 1;
    } catch (const eval::AlignmentError& e) {
        std::cerr << "error: validation-error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal-error: " << e.what() << "\n";
        return 1;
    }
}
