#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "clv/eval.hpp"
#include "clv/numerics.hpp"
#include "support/oracles.hpp"

using namespace clv;
using namespace clv::eval;

namespace {

const baseline::ParetoNBDParams kPnbd{0.55, 10.6, 0.61, 11.7};
const baseline::GGParams kGG{6.25, 3.74, 15.44};

// E[f(lambda, mu)] under the two mixing Gammas via quantile substitution
double prior_expectation(const baseline::ParetoNBDParams& pr,
                         const std::function<double(double, double)>& f) {
    const double eps = 1e-10;
    return oracles::integrate(
        [&](double u) {
            const double lam = num::gamma_quantile(pr.r, u) / pr.alpha;
            return oracles::integrate(
                [&](double v) {
                    const double mu = num::gamma_quantile(pr.s, v) / pr.beta;
                    return f(lam, mu);
                },
                eps, 1.0 - eps, 1e-9, 24);
        },
        eps, 1.0 - eps, 1e-9, 24);
}

} // namespace

TEST_CASE("rmse and mae: hand values and alignment") {
    std::map<std::string, double> a{{"x", 1.0}, {"y", 2.0}};
    CHECK(rmse(a, a) == 0.0);
    CHECK(mae(a, a) == 0.0);

    std::map<std::string, double> pred{{"x", 4.0}, {"y", -2.0}};
    std::map<std::string, double> actual{{"x", 1.0}, {"y", 2.0}}; // diffs 3, -4
    CHECK(rmse(pred, actual) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
    CHECK(mae(pred, actual) == doctest::Approx(3.5).epsilon(1e-15));

    std::map<std::string, double> extra{{"x", 1.0}, {"z", 0.0}};
    CHECK_THROWS_AS(rmse(pred, extra), AlignmentError);
    CHECK_THROWS_AS(mae(extra, actual), AlignmentError);
    CHECK_THROWS_AS(rmse({}, {}), AlignmentError);
}

TEST_CASE("rmse and mae match an extended-precision recomputation") {
    Rng rng(41);
    std::map<std::string, double> pred, actual;
    for (int i = 0; i < 1000; ++i) {
        const std::string key = "k" + std::to_string(i);
        pred[key] = 1e4 * (rng.next_double() - 0.5);
        actual[key] = 1e4 * (rng.next_double() - 0.5);
    }
    long double sq = 0.0L, ab = 0.0L;
    for (const auto& [k, v] : pred) {
        const long double d = static_cast<long double>(v) - actual.at(k);
        sq += d * d;
        ab += d < 0 ? -d : d;
    }
    const double oracle_rmse = static_cast<double>(sqrtl(sq / 1000.0L));
    const double oracle_mae = static_cast<double>(ab / 1000.0L);
    CHECK(rmse(pred, actual) == doctest::Approx(oracle_rmse).epsilon(1e-10));
    CHECK(mae(pred, actual) == doctest::Approx(oracle_mae).epsilon(1e-10));
}

TEST_CASE("generate_synthetic: no-dropout limit gives Poisson repeat counts") {
    // nearly degenerate mixing: lambda ~= 0.5, mu ~= 1e-9, acquisition ~ t=0
    baseline::ParetoNBDParams pr{1e6, 2e6, 1e6, 1e15};
    const double window = 20.0;
    Rng rng(43);
    const auto data = generate_synthetic(pr, kGG, 4000, window, 1e-6, rng);
    const auto summaries = ingest::summarize_rfm(data.log, window * 7.0);
    REQUIRE(summaries.size() == 4000);

    const double rate = 0.5 * window; // Poisson mean of the repeat count
    std::vector<long> observed(30, 0);
    for (const auto& s : summaries) observed[static_cast<size_t>(std::min<long>(s.x, 29))]++;
    // chi-square against Poisson(rate) with tail bin pooling
    double stat = 0.0;
    int bins = 0;
    double tail_obs = 0.0, tail_exp = 0.0;
    for (size_t k = 0; k < observed.size(); ++k) {
        double e = 4000.0 * std::exp(static_cast<double>(k) * std::log(rate) - rate -
                                     num::ln_gamma(static_cast<double>(k) + 1.0));
        // P(Poisson >= 30) = reg_lower_gamma(30, rate)
        if (k + 1 == observed.size()) e = 4000.0 * num::reg_lower_gamma(30.0, rate);
        if (e < 5.0) {
            tail_obs += static_cast<double>(observed[k]);
            tail_exp += e;
            continue;
        }
        stat += (static_cast<double>(observed[k]) - e) * (static_cast<double>(observed[k]) - e) / e;
        ++bins;
    }
    if (tail_exp > 0.0) {
        stat += (tail_obs - tail_exp) * (tail_obs - tail_exp) / tail_exp;
        ++bins;
    }
    const double df = static_cast<double>(bins - 1);
    const double p_value = 1.0 - num::reg_lower_gamma(df / 2.0, stat / 2.0);
    CHECK(p_value > 0.01);
}

TEST_CASE("generate_synthetic: zero-repeater share matches the quadrature value") {
    const double window = 52.0;
    Rng rng(47);
    const long n = 4000;
    // near-degenerate acquisition so every customer shares T ~= window
    const auto data = generate_synthetic(kPnbd, kGG, n, window, 1e-6, rng);
    const auto summaries = ingest::summarize_rfm(data.log, window * 7.0);
    REQUIRE(summaries.size() == n); // everyone has a first purchase by construction
    long zeros = 0;
    for (const auto& s : summaries)
        if (s.x == 0) ++zeros;
    const double share = static_cast<double>(zeros) / static_cast<double>(n);

    const double analytic = prior_expectation(kPnbd, [&](double lam, double mu) {
        const double T = window;
        return mu / (lam + mu) + lam / (lam + mu) * std::exp(-(lam + mu) * T);
    });
    const double se = std::sqrt(analytic * (1.0 - analytic) / static_cast<double>(n));
    CHECK(std::abs(share - analytic) <= 3.0 * se);
}

TEST_CASE("generate_synthetic: spends concentrate around p/nu and truth lines up") {
    Rng rng(53);
    const auto data = generate_synthetic(kPnbd, kGG, 3000, 104.0, 26.0, rng);
    const auto summaries = ingest::summarize_rfm(data.log, 104.0 * 7.0);
    std::map<std::string, const CustomerTruth*> truth;
    for (const auto& t : data.truth) truth[t.customer_id] = &t;
    double ratio = 0.0;
    long heavy = 0;
    for (const auto& s : summaries) {
        if (s.x < 15) continue;
        ratio += s.z_bar * truth.at(s.customer_id)->nu / kGG.p;
        ++heavy;
    }
    REQUIRE(heavy >= 30);
    ratio /= static_cast<double>(heavy);
    CHECK(ratio == doctest::Approx(1.0).epsilon(0.05));

    // log invariants: sorted by (customer, time), positive amounts
    for (size_t i = 1; i < data.log.transactions.size(); ++i) {
        const auto& a = data.log.transactions[i - 1];
        const auto& b = data.log.transactions[i];
        CHECK((a.customer_id < b.customer_id ||
               (a.customer_id == b.customer_id && a.time <= b.time)));
    }
    for (const auto& t : data.log.transactions) CHECK(t.amount > 0.0);
}

TEST_CASE("run_benchmark: grid shape, invariants, determinism, order invariance") {
    Rng rng(59);
    const double window = 156.0;
    const auto data = generate_synthetic(kPnbd, kGG, 500, window, 52.0, rng);
    const double cutoff_days = 52.0 * 7.0;

    BenchmarkConfig cfg;
    cfg.horizons = {26.0, 52.0, 104.0};
    cfg.models = {ModelKind::pnbd_gg, ModelKind::pnbd_gg_per_cohort, ModelKind::clvae};
    cfg.cohort = {1, 12};
    cfg.train.encoder_width1 = 8;
    cfg.train.encoder_width2 = 6;
    cfg.train.decoder_width1 = 6;
    cfg.train.decoder_width2 = 8;
    cfg.train.max_epochs = 25;
    cfg.train.patience = 25;
    cfg.prediction_samples = 100;
    cfg.seed = 7;
    cfg.observation_end_days = window * 7.0;

    const auto report = run_benchmark(data.log, cutoff_days, cfg);
    REQUIRE(report.model_names.size() == 3);
    REQUIRE(report.cells.size() == 3);
    for (const auto& row : report.cells) {
        REQUIRE(row.size() == cfg.horizons.size());
        for (const auto& cell : row) {
            CHECK(cell.mae >= 0.0);
            CHECK(cell.rmse >= cell.mae);
            CHECK(std::isfinite(cell.rmse));
        }
    }

    const auto again = run_benchmark(data.log, cutoff_days, cfg);
    for (size_t m = 0; m < report.cells.size(); ++m)
        for (size_t j = 0; j < report.cells[m].size(); ++j) {
            CHECK(report.cells[m][j].rmse == again.cells[m][j].rmse);
            CHECK(report.cells[m][j].mae == again.cells[m][j].mae);
        }

    BenchmarkConfig reordered = cfg;
    reordered.models = {ModelKind::clvae, ModelKind::pnbd_gg};
    const auto swapped = run_benchmark(data.log, cutoff_days, reordered);
    const auto row_of = [](const BenchmarkReport& r, const std::string& name) {
        return static_cast<size_t>(
            std::find(r.model_names.begin(), r.model_names.end(), name) -
            r.model_names.begin());
    };
    for (const std::string name : {"pnbd_gg", "clvae"})
        for (size_t j = 0; j < cfg.horizons.size(); ++j)
            CHECK(report.cells[row_of(report, name)][j].rmse ==
                  swapped.cells[row_of(swapped, name)][j].rmse);

    // serialization round trips the grid
    std::ostringstream txt, js;
    write_report(txt, report);
    write_report_json(js, report);
    CHECK(txt.str().find("pnbd_gg_per_cohort") != std::string::npos);
    CHECK(js.str().find("dataset_fingerprint") != std::string::npos);
    CHECK(js.str().find("\"learning_rate\"") != std::string::npos);
}

TEST_CASE("run_benchmark: leakage guard and in-process equivalence") {
    Rng rng(61);
    const double window = 156.0;
    const auto data = generate_synthetic(kPnbd, kGG, 800, window, 52.0, rng);
    const double cutoff_days = 52.0 * 7.0;

    BenchmarkConfig cfg;
    cfg.horizons = {52.0, 104.0};
    cfg.models = {ModelKind::pnbd_gg};
    cfg.seed = 3;
    cfg.observation_end_days = window * 7.0;

    // a second log that shares the calibration window but doubles every
    // holdout amount; leakage-free fits must coincide
    auto doubled = data.log;
    for (auto& t : doubled.transactions)
        if (t.time > cutoff_days) t.amount *= 2.0;

    const auto rep_a = run_benchmark(data.log, cutoff_days, cfg);
    const auto rep_b = run_benchmark(doubled, cutoff_days, cfg);

    // recompute both reports in-process from a calibration-only fit
    ingest::TransactionLog calib;
    for (const auto& t : data.log.transactions)
        if (t.time <= cutoff_days) calib.transactions.push_back(t);
    const auto summaries = ingest::summarize_rfm(calib, cutoff_days);
    const auto pnbd = baseline::fit_pnbd(summaries);
    const auto gg = baseline::fit_gg(summaries);
    for (const ingest::TransactionLog* log :
         std::initializer_list<const ingest::TransactionLog*>{&data.log, &doubled}) {
        const auto& rep = (log == &data.log) ? rep_a : rep_b;
        const auto holdout = ingest::holdout_revenue(*log, cutoff_days, cfg.horizons);
        std::map<std::string, size_t> row;
        for (size_t i = 0; i < holdout.customer_ids.size(); ++i)
            row[holdout.customer_ids[i]] = i;
        for (size_t j = 0; j < cfg.horizons.size(); ++j) {
            std::map<std::string, double> pred, actual;
            for (const auto& s : summaries) {
                pred[s.customer_id] =
                    baseline::gg_expected_spend(gg.params, s) *
                    baseline::pnbd_expected_transactions(pnbd.params, s, cfg.horizons[j]);
                actual[s.customer_id] = holdout.revenue[row.at(s.customer_id)][j];
            }
            CHECK(rep.cells[0][j].rmse == doctest::Approx(rmse(pred, actual)).epsilon(1e-12));
            CHECK(rep.cells[0][j].mae == doctest::Approx(mae(pred, actual)).epsilon(1e-12));
        }
    }

    // oracle predictor fed the realized holdout scores exactly zero
    const auto holdout = ingest::holdout_revenue(data.log, cutoff_days, cfg.horizons);
    std::map<std::string, double> oracle;
    for (size_t i = 0; i < holdout.customer_ids.size(); ++i)
        oracle[holdout.customer_ids[i]] = holdout.revenue[i][0];
    CHECK(rmse(oracle, oracle) == 0.0);

    // insufficient holdout coverage is rejected up front
    BenchmarkConfig far = cfg;
    far.horizons = {52.0, 5000.0};
    CHECK_THROWS_AS(run_benchmark(data.log, cutoff_days, far), ConfigError);
}

TEST_CASE("generate_synthetic_mixture: component bookkeeping and validation") {
    std::vector<SyntheticComponent> comps = {
        {baseline::ParetoNBDParams{20.0, 4.0, 0.61, 11.7}, kGG, 0.5},  // fast buyers
        {baseline::ParetoNBDParams{2.0, 40.0, 0.61, 11.7}, kGG, 0.5}}; // slow buyers
    Rng rng(67);
    const auto data = generate_synthetic_mixture(comps, 2000, 78.0, 26.0, rng);
    long fast = 0;
    double fast_lambda = 0.0, slow_lambda = 0.0;
    for (const auto& t : data.truth) {
        if (t.component == 0) {
            ++fast;
            fast_lambda += t.lambda;
        } else {
            slow_lambda += t.lambda;
        }
    }
    CHECK(fast > 800);
    CHECK(fast < 1200);
    fast_lambda /= static_cast<double>(fast);
    slow_lambda /= static_cast<double>(2000 - fast);
    CHECK(fast_lambda == doctest::Approx(5.0).epsilon(0.1));
    CHECK(slow_lambda == doctest::Approx(0.05).epsilon(0.1));

    CHECK_THROWS_AS(generate_synthetic_mixture({}, 10, 52.0, 26.0, rng), ConfigError);
    CHECK_THROWS_AS(generate_synthetic(kPnbd, kGG, 0, 52.0, 26.0, rng), ConfigError);
    CHECK_THROWS_AS(generate_synthetic(kPnbd, kGG, 10, 52.0, 60.0, rng), ConfigError);
}
