#include "clv/predict.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "clv/numerics.hpp"

namespace clv::predict {

namespace {

constexpr std::uint64_t kLatentStream = 0;
constexpr std::uint64_t kProcessStream = 1;

void validate_config(const SimConfig& config) {
    if (config.mc_samples < 1) throw ConfigError("simulate_futures: mc_samples must be >= 1");
    if (config.horizons.empty()) throw ConfigError("simulate_futures: no horizons");
    double prev = 0.0;
    for (double h : config.horizons) {
        if (!(h > prev))
            throw ConfigError("simulate_futures: horizons must be positive and increasing");
        prev = h;
    }
}

// shared driver: rate_source fills (Lambda, M, N) for (customer, draw)
template <class RateSource>
PredictionResult run_simulation(RateSource&& rate_source, double p_spend,
                                const std::vector<CustomerSummary>& summaries,
                                const SimConfig& config,
                                const std::vector<double>& p_alive_out) {
    validate_config(config);
    const size_t n = summaries.size();
    const size_t k = config.horizons.size();
    PredictionResult res;
    res.horizons = config.horizons;
    res.p_alive = p_alive_out;
    res.customer_ids.reserve(n);
    for (const auto& s : summaries) res.customer_ids.push_back(s.customer_id);
    res.expected_transactions.assign(n, std::vector<double>(k, 0.0));
    res.expected_revenue.assign(n, std::vector<double>(k, 0.0));
    if (config.retain_draws) {
        res.draws_n.assign(n, {});
        res.draws_s.assign(n, {});
    }
    const double inv_l = 1.0 / static_cast<double>(config.mc_samples);
    for (size_t i = 0; i < n; ++i) {
        for (int l = 0; l < config.mc_samples; ++l) {
            double Lambda, M, N;
            rate_source(i, l, Lambda, M, N);
            Rng rng = Rng::substream(config.seed, i, static_cast<std::uint64_t>(l),
                                     kProcessStream);
            const DrawOutcome d = simulate_single_draw(Lambda, M, N, p_spend, summaries[i],
                                                       config.horizons, rng);
            res.overflow = res.overflow || d.overflow;
            for (size_t j = 0; j < k; ++j) {
                res.expected_transactions[i][j] += d.n[j] * inv_l;
                res.expected_revenue[i][j] += d.s[j] * inv_l;
            }
            if (config.retain_draws) {
                res.draws_n[i].push_back(d.n);
                res.draws_s[i].push_back(d.s);
            }
        }
    }
    return res;
}

} // namespace

double p_alive_individual(double Lambda, double M, const CustomerSummary& s) {
    const double e = (Lambda + M) * (s.T - s.t_x);
    const double w = M / (Lambda + M);
    if (e < 700.0) return 1.0 / (1.0 + w * std::expm1(e));
    return std::exp(-(std::log(w) + e)); // denominator ~ w e^e
}

DrawOutcome simulate_single_draw(double Lambda, double M, double N, double p_spend,
                                 const CustomerSummary& summary,
                                 const std::vector<double>& horizons, Rng& rng) {
    const size_t k = horizons.size();
    DrawOutcome out;
    out.n.assign(k, 0.0);
    out.s.assign(k, 0.0);
    const double t_max = horizons.back();

    const bool alive = rng.next_double() < p_alive_individual(Lambda, M, summary);
    // residual lifetime past T is memoryless given survival to T
    const double omega = alive ? summary.T + rng.next_exponential(M) : summary.T;
    const double stop = std::min(summary.T + t_max, omega);

    const double cap = Lambda * t_max + 10.0 * std::sqrt(Lambda * t_max) + 50.0;
    std::vector<double> events;
    double t = summary.T;
    while (true) {
        t += rng.next_exponential(Lambda);
        if (t > stop) break;
        events.push_back(t);
        if (static_cast<double>(events.size()) > cap) {
            out.overflow = true;
            break;
        }
    }
    long prev_count = 0;
    double spend = 0.0;
    for (size_t j = 0; j < k; ++j) {
        long count = 0;
        for (double e : events)
            if (e <= summary.T + horizons[j]) ++count;
        out.n[j] = static_cast<double>(count);
        // couple horizons through Gamma increments: the sum of independent
        // Gamma(p_spend * dn, N) pieces is Gamma(p_spend * count, N)
        if (count > prev_count)
            spend += num::sample_gamma(
                {p_spend * static_cast<double>(count - prev_count), N}, rng);
        out.s[j] = spend;
        prev_count = count;
    }
    return out;
}

PredictionResult simulate_futures(const clvae::Model& model,
                                  const std::vector<CustomerSummary>& summaries,
                                  const SimConfig& config) {
    validate_config(config);
    const size_t n = summaries.size();
    // encoder posterior is deterministic; evaluate once
    const grad::Tensor in = clvae::input_matrix(model, summaries);
    const clvae::Posterior post = clvae::encode(model, grad::Value::constant(in));

    // The decoder is only trained where the prior (and the data-driven
    // posteriors) place mass; an amortized posterior evaluated on an outlying
    // customer can produce a near-degenerate Gamma whose draws land far outside
    // that region, where the decoded rates are extrapolation artifacts. Clamp
    // each latent draw to an extreme quantile envelope of the prior so decoding
    // stays on trained ground; the bounds are far enough out that they never
    // bind for well-behaved posteriors.
    const auto envelope = [](const num::GammaParams& g) {
        return std::array<double, 2>{num::gamma_quantile(g.shape, 1e-9) / g.rate,
                                     num::gamma_quantile(g.shape, 1.0 - 1e-9) / g.rate};
    };
    const auto le = envelope(model.prior.lambda_prior);
    const auto me = envelope(model.prior.mu_prior);
    const auto ne = envelope(model.prior.nu_prior);

    // latents per (customer, draw), decoded in per-draw batches
    const int L = config.mc_samples;
    std::vector<std::vector<std::array<double, 3>>> rates(
        n, std::vector<std::array<double, 3>>(static_cast<size_t>(L)));
    for (int l = 0; l < L; ++l) {
        grad::Tensor lam(static_cast<int>(n), 1), mu(static_cast<int>(n), 1),
            nu(static_cast<int>(n), 1);
        for (size_t i = 0; i < n; ++i) {
            Rng rng =
                Rng::substream(config.seed, i, static_cast<std::uint64_t>(l), kLatentStream);
            lam.v[i] = std::clamp(
                num::sample_gamma({post.r_q.data().v[i], post.alpha_q.data().v[i]}, rng),
                le[0], le[1]);
            mu.v[i] = std::clamp(
                num::sample_gamma({post.s_q.data().v[i], post.beta_q.data().v[i]}, rng),
                me[0], me[1]);
            nu.v[i] = std::clamp(
                num::sample_gamma({post.q_q.data().v[i], post.gamma_q.data().v[i]}, rng),
                ne[0], ne[1]);
        }
        clvae::Latents z;
        z.lambda = grad::Value::constant(lam);
        z.mu = grad::Value::constant(mu);
        z.nu = grad::Value::constant(nu);
        const clvae::Decoded d = clvae::decode(model, z);
        for (size_t i = 0; i < n; ++i)
            rates[i][static_cast<size_t>(l)] = {d.Lambda.data().v[i], d.M.data().v[i],
                                                d.N.data().v[i]};
    }

    // report p_alive at the posterior-mean decoded rates (draw-averaged)
    std::vector<double> p_alive(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (int l = 0; l < L; ++l)
            p_alive[i] += p_alive_individual(rates[i][static_cast<size_t>(l)][0],
                                             rates[i][static_cast<size_t>(l)][1],
                                             summaries[i]) /
                          static_cast<double>(L);
    }
    return run_simulation(
        [&](size_t i, int l, double& Lambda, double& M, double& N) {
            Lambda = rates[i][static_cast<size_t>(l)][0];
            M = rates[i][static_cast<size_t>(l)][1];
            N = rates[i][static_cast<size_t>(l)][2];
        },
        model.prior.p_spend, summaries, config, p_alive);
}

PredictionResult simulate_futures_fixed(const std::vector<std::array<double, 3>>& rates,
                                        double p_spend,
                                        const std::vector<CustomerSummary>& summaries,
                                        const SimConfig& config) {
    if (rates.size() != summaries.size())
        throw ConfigError("simulate_futures_fixed: one rate triple per customer required");
    std::vector<double> p_alive(summaries.size());
    for (size_t i = 0; i < summaries.size(); ++i)
        p_alive[i] = p_alive_individual(rates[i][0], rates[i][1], summaries[i]);
    return run_simulation(
        [&](size_t i, int, double& Lambda, double& M, double& N) {
            Lambda = rates[i][0];
            M = rates[i][1];
            N = rates[i][2];
        },
        p_spend, summaries, config, p_alive);
}

void write_prediction_report(std::ostream& out, const PredictionResult& result) {
    out << std::setprecision(17);
    out << "customer_id,p_alive";
    for (double h : result.horizons) {
        out << ",expected_transactions_" << h << ",expected_revenue_" << h;
    }
    out << "\n";
    for (size_t i = 0; i < result.customer_ids.size(); ++i) {
        out << result.customer_ids[i] << "," << result.p_alive[i];
        for (size_t j = 0; j < result.horizons.size(); ++j)
            out << "," << result.expected_transactions[i][j] << ","
                << result.expected_revenue[i][j];
        out << "\n";
    }
}

void write_prediction_report_file(const std::string& path, const PredictionResult& result) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        write_prediction_report(out, result);
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("atomic rename failed for: " + path);
}

void write_draws_file(const std::string& path, const PredictionResult& result) {
    if (result.draws_n.empty())
        throw ConfigError("write_draws_file: draws were not retained");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        out << std::setprecision(17);
        out << "customer_id,draw,horizon,n,s\n";
        for (size_t i = 0; i < result.customer_ids.size(); ++i)
            for (size_t l = 0; l < result.draws_n[i].size(); ++l)
                for (size_t j = 0; j < result.horizons.size(); ++j)
                    out << result.customer_ids[i] << "," << l << "," << result.horizons[j]
                        << "," << result.draws_n[i][l][j] << "," << result.draws_s[i][l][j]
                        << "\n";
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("atomic rename failed for: " + path);
}

} // namespace clv::predict
