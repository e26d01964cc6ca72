#include "clv/clvae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace clv::clvae {

namespace {

using grad::Tensor;
using grad::Value;

double softplus_inverse(double y) {
    if (y <= 0.0) throw std::invalid_argument("softplus_inverse: needs y > 0");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

Value uniform_weights(int rows, int cols, Rng& rng, const std::string& name) {
    Tensor t(rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    for (double& e : t.v) e = bound * (2.0 * rng.next_double() - 1.0);
    return Value::parameter(std::move(t), name);
}

// small positive constant keeps dead-row pre-activations off the exact ReLU
// kink, where pathwise gradients and finite differences disagree
Value hidden_bias(int width, const std::string& name) {
    return Value::parameter(Tensor(1, width, 0.01), name);
}

// Output bias such that a zero network input produces exactly `targets` after
// softplus, compensating for the hidden-bias contribution that reaches the
// output layer through the two ReLU layers.
Value bias_from_targets(const std::vector<double>& targets, const Value& b1, const Value& w2,
                        const Value& b2, const Value& w3, const std::string& name) {
    std::vector<double> h1(static_cast<size_t>(b1.data().cols));
    for (size_t k = 0; k < h1.size(); ++k) h1[k] = std::max(0.0, b1.data().v[k]);
    std::vector<double> h2(static_cast<size_t>(b2.data().cols));
    for (size_t k = 0; k < h2.size(); ++k) {
        double acc = b2.data().v[k];
        for (size_t i = 0; i < h1.size(); ++i)
            acc += h1[i] * w2.data().at(static_cast<int>(i), static_cast<int>(k));
        h2[k] = std::max(0.0, acc);
    }
    Tensor t(1, static_cast<int>(targets.size()));
    for (size_t j = 0; j < targets.size(); ++j) {
        double reach = 0.0;
        for (size_t k = 0; k < h2.size(); ++k)
            reach += h2[k] * w3.data().at(static_cast<int>(k), static_cast<int>(j));
        t.v[j] = softplus_inverse(targets[j]) - reach;
    }
    return Value::parameter(std::move(t), name);
}

// base feature transform, before standardization
void base_features(const CustomerSummary& s, double* out) {
    out[0] = std::log1p(static_cast<double>(s.x));
    out[1] = std::log1p(s.t_x);
    out[2] = std::log1p(s.T);
    out[3] = std::log(std::max(s.z_bar, 1e-12));
}

Tensor raw_features(const std::vector<CustomerSummary>& batch, int input_width) {
    Tensor t(static_cast<int>(batch.size()), input_width);
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& s = batch[i];
        if (static_cast<int>(s.covariates.size()) != input_width - 4)
            throw ShapeError("input width mismatch for customer '" + s.customer_id +
                             "': expected " + std::to_string(input_width - 4) +
                             " covariates, got " + std::to_string(s.covariates.size()));
        double* row = &t.at(static_cast<int>(i), 0);
        base_features(s, row);
        for (size_t k = 0; k < s.covariates.size(); ++k) row[4 + k] = s.covariates[k];
    }
    return t;
}

} // namespace

std::vector<grad::Value> Model::parameters() const {
    return {enc_w1, enc_b1, enc_w2, enc_b2, enc_w3, enc_b3,
            dec_w1, dec_b1, dec_w2, dec_b2, dec_w3, dec_b3};
}

Model make_model(const TrainConfig& config, const PriorParams& prior, int input_width,
                 Rng& init_rng) {
    if (input_width < 4) throw ConfigError("make_model: input width must be >= 4");
    Model m;
    m.prior = prior;
    m.input_width = input_width;
    m.norm.mean.assign(static_cast<size_t>(input_width), 0.0);
    m.norm.stddev.assign(static_cast<size_t>(input_width), 1.0);

    m.enc_w1 = uniform_weights(input_width, config.encoder_width1, init_rng, "enc_w1");
    m.enc_b1 = hidden_bias(config.encoder_width1, "enc_b1");
    m.enc_w2 = uniform_weights(config.encoder_width1, config.encoder_width2, init_rng, "enc_w2");
    m.enc_b2 = hidden_bias(config.encoder_width2, "enc_b2");
    m.enc_w3 = uniform_weights(config.encoder_width2, 6, init_rng, "enc_w3");
    // zero-input posterior parameters equal the prior parameters
    m.enc_b3 = bias_from_targets({prior.lambda_prior.shape, prior.lambda_prior.rate,
                                  prior.mu_prior.shape, prior.mu_prior.rate,
                                  prior.nu_prior.shape, prior.nu_prior.rate},
                                 m.enc_b1, m.enc_w2, m.enc_b2, m.enc_w3, "enc_b3");

    m.dec_w1 = uniform_weights(3, config.decoder_width1, init_rng, "dec_w1");
    m.dec_b1 = hidden_bias(config.decoder_width1, "dec_b1");
    m.dec_w2 = uniform_weights(config.decoder_width1, config.decoder_width2, init_rng, "dec_w2");
    m.dec_b2 = hidden_bias(config.decoder_width2, "dec_b2");
    m.dec_w3 = uniform_weights(config.decoder_width2, 3, init_rng, "dec_w3");
    // zero-input decoded rates equal the prior means of (lambda, mu, nu)
    m.dec_b3 = bias_from_targets({prior.lambda_prior.shape / prior.lambda_prior.rate,
                                  prior.mu_prior.shape / prior.mu_prior.rate,
                                  prior.nu_prior.shape / prior.nu_prior.rate},
                                 m.dec_b1, m.dec_w2, m.dec_b2, m.dec_w3, "dec_b3");
    return m;
}

Normalization fit_normalization(const std::vector<CustomerSummary>& train_rows, int input_width) {
    if (train_rows.empty()) throw ConfigError("fit_normalization: empty training split");
    const Tensor t = raw_features(train_rows, input_width);
    Normalization norm;
    norm.mean.assign(static_cast<size_t>(input_width), 0.0);
    norm.stddev.assign(static_cast<size_t>(input_width), 1.0);
    for (int j = 0; j < input_width; ++j) {
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < t.rows; ++i) {
            sum += t.at(i, j);
            sumsq += t.at(i, j) * t.at(i, j);
        }
        const double mean = sum / t.rows;
        const double var = std::max(sumsq / t.rows - mean * mean, 0.0);
        norm.mean[static_cast<size_t>(j)] = mean;
        norm.stddev[static_cast<size_t>(j)] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return norm;
}

grad::Tensor input_matrix(const Model& model, const std::vector<CustomerSummary>& batch) {
    Tensor t = raw_features(batch, model.input_width);
    for (int i = 0; i < t.rows; ++i)
        for (int j = 0; j < t.cols; ++j)
            t.at(i, j) = (t.at(i, j) - model.norm.mean[static_cast<size_t>(j)]) /
                         model.norm.stddev[static_cast<size_t>(j)];
    return t;
}

Posterior encode(const Model& model, const grad::Value& inputs) {
    if (inputs.data().cols != model.input_width)
        throw ShapeError("encode: input width " + std::to_string(inputs.data().cols) +
                         " != model width " + std::to_string(model.input_width));
    const Value h1 = grad::relu(grad::affine(inputs, model.enc_w1, model.enc_b1));
    const Value h2 = grad::relu(grad::affine(h1, model.enc_w2, model.enc_b2));
    const Value out = grad::softplus(grad::affine(h2, model.enc_w3, model.enc_b3));
    Posterior p;
    p.r_q = grad::col(out, 0);
    p.alpha_q = grad::col(out, 1);
    p.s_q = grad::col(out, 2);
    p.beta_q = grad::col(out, 3);
    p.q_q = grad::col(out, 4);
    p.gamma_q = grad::col(out, 5);
    return p;
}

Latents sample_posterior(const Posterior& posterior, Rng& rng) {
    Latents z;
    z.lambda = grad::gamma_sample(posterior.r_q, posterior.alpha_q, rng);
    z.mu = grad::gamma_sample(posterior.s_q, posterior.beta_q, rng);
    z.nu = grad::gamma_sample(posterior.q_q, posterior.gamma_q, rng);
    return z;
}

Decoded decode(const Model& model, const Latents& latents) {
    const Value z = grad::concat_cols({latents.lambda, latents.mu, latents.nu});
    const Value h1 = grad::relu(grad::affine(z, model.dec_w1, model.dec_b1));
    const Value h2 = grad::relu(grad::affine(h1, model.dec_w2, model.dec_b2));
    const Value raw = grad::softplus(grad::affine(h2, model.dec_w3, model.dec_b3));
    // softplus underflows to exactly 0 for very negative pre-activations, which
    // turns the log-likelihood into -inf; a tiny floor keeps the rates positive
    // without measurably changing any non-degenerate output.
    const Value out =
        grad::add(raw, Value::constant(grad::Tensor(raw.data().rows, raw.data().cols, 1e-12)));
    Decoded d;
    d.Lambda = grad::col(out, 0);
    d.M = grad::col(out, 1);
    d.N = grad::col(out, 2);
    return d;
}

double conditional_log_likelihood_one(double Lambda, double M, double N, double p_spend,
                                      const CustomerSummary& s) {
    const double x = static_cast<double>(s.x);
    const double a = std::log(M) - (Lambda + M) * s.t_x;
    const double b = std::log(Lambda) - (Lambda + M) * s.T;
    double ll = x * std::log(Lambda) - std::log(Lambda + M) + num::log_sum_exp(a, b);
    if (s.x >= 1) {
        const double px = p_spend * x;
        ll += px * std::log(N * x) - num::ln_gamma(px) + (px - 1.0) * std::log(s.z_bar) -
              N * x * s.z_bar;
    }
    return ll;
}

grad::Value conditional_log_likelihood(const Decoded& rates, double p_spend,
                                       const std::vector<CustomerSummary>& batch) {
    const int n = static_cast<int>(batch.size());
    if (rates.Lambda.data().size() != n || rates.M.data().size() != n ||
        rates.N.data().size() != n)
        throw ShapeError("conditional_log_likelihood: rates/batch size mismatch");
    Tensor out(n, 1);
    // snapshot of per-customer data for the backward closure
    struct Row {
        double x, t_x, T, z_bar;
    };
    auto data = std::make_shared<std::vector<Row>>();
    data->reserve(batch.size());
    for (const auto& s : batch)
        data->push_back({static_cast<double>(s.x), s.t_x, s.T, s.z_bar});
    for (int i = 0; i < n; ++i) {
        out.v[static_cast<size_t>(i)] = conditional_log_likelihood_one(
            rates.Lambda.data().v[static_cast<size_t>(i)],
            rates.M.data().v[static_cast<size_t>(i)],
            rates.N.data().v[static_cast<size_t>(i)], p_spend, batch[static_cast<size_t>(i)]);
        if (!std::isfinite(out.v[static_cast<size_t>(i)]))
            throw NumericalError("conditional_log_likelihood: non-finite value for customer '" +
                                 batch[static_cast<size_t>(i)].customer_id + "'");
    }
    return grad::make_op(
        std::move(out), {rates.Lambda, rates.M, rates.N},
        [data, p_spend](grad::Node& self) {
            grad::Node& ln = *self.parents[0];
            grad::Node& mn = *self.parents[1];
            grad::Node& nn = *self.parents[2];
            ln.ensure_grad();
            mn.ensure_grad();
            nn.ensure_grad();
            for (size_t i = 0; i < data->size(); ++i) {
                const Row& r = (*data)[i];
                const double L = ln.data.v[i], M = mn.data.v[i], N = nn.data.v[i];
                const double a = std::log(M) - (L + M) * r.t_x;
                const double b = std::log(L) - (L + M) * r.T;
                const double wa = 1.0 / (1.0 + std::exp(b - a)); // softmax weights
                const double wb = 1.0 - wa;
                const double g = self.grad.v[i];
                double dL = r.x / L - 1.0 / (L + M) - wa * r.t_x + wb * (1.0 / L - r.T);
                double dM = -1.0 / (L + M) + wa * (1.0 / M - r.t_x) - wb * r.T;
                double dN = 0.0;
                if (r.x >= 1.0) dN = p_spend * r.x / N - r.x * r.z_bar;
                ln.grad.v[i] += g * dL;
                mn.grad.v[i] += g * dM;
                nn.grad.v[i] += g * dN;
            }
        });
}

double kl_gamma(const GammaParams& q, const GammaParams& p) {
    return (q.shape - p.shape) * num::digamma(q.shape) - num::ln_gamma(q.shape) +
           num::ln_gamma(p.shape) + p.shape * (std::log(q.rate) - std::log(p.rate)) +
           q.shape * (p.rate - q.rate) / q.rate;
}

namespace {

// differentiable KL( Gamma(shape_i, rate_i) || prior ) per row
Value kl_gamma_op(const Value& shape, const Value& rate, const GammaParams& prior) {
    const int n = shape.data().rows;
    Tensor out(n, 1);
    for (int i = 0; i < n; ++i)
        out.v[static_cast<size_t>(i)] =
            kl_gamma({shape.data().v[static_cast<size_t>(i)],
                      rate.data().v[static_cast<size_t>(i)]},
                     prior);
    return grad::make_op(std::move(out), {shape, rate}, [prior](grad::Node& self) {
        grad::Node& an = *self.parents[0];
        grad::Node& bn = *self.parents[1];
        an.ensure_grad();
        bn.ensure_grad();
        for (int i = 0; i < an.data.size(); ++i) {
            const double aq = an.data.v[static_cast<size_t>(i)];
            const double bq = bn.data.v[static_cast<size_t>(i)];
            const double g = self.grad.v[static_cast<size_t>(i)];
            an.grad.v[static_cast<size_t>(i)] +=
                g * ((aq - prior.shape) * num::trigamma(aq) + prior.rate / bq - 1.0);
            bn.grad.v[static_cast<size_t>(i)] +=
                g * (prior.shape / bq - aq * prior.rate / (bq * bq));
        }
    });
}

} // namespace

grad::Value kl_terms(const Posterior& posterior, const PriorParams& prior) {
    return grad::add(kl_gamma_op(posterior.r_q, posterior.alpha_q, prior.lambda_prior),
                     grad::add(kl_gamma_op(posterior.s_q, posterior.beta_q, prior.mu_prior),
                               kl_gamma_op(posterior.q_q, posterior.gamma_q, prior.nu_prior)));
}

grad::Value elbo(const Model& model, const std::vector<CustomerSummary>& batch, int mc_samples,
                 Rng& rng) {
    if (mc_samples < 1) throw ConfigError("elbo: mc_samples must be >= 1");
    if (batch.empty()) throw ConfigError("elbo: empty batch");
    const Value inputs = Value::constant(input_matrix(model, batch));
    const Posterior post = encode(model, inputs);
    Value ll_acc;
    for (int l = 0; l < mc_samples; ++l) {
        const Latents z = sample_posterior(post, rng);
        const Decoded d = decode(model, z);
        const Value ll = conditional_log_likelihood(d, model.prior.p_spend, batch);
        ll_acc = l == 0 ? ll : grad::add(ll_acc, ll);
    }
    const Value ll_mean = grad::scale(ll_acc, 1.0 / static_cast<double>(mc_samples));
    return grad::mean(grad::sub(ll_mean, kl_terms(post, model.prior)));
}

namespace {

constexpr std::uint64_t kSplitStream = 0x5350u;   // train/validation split
constexpr std::uint64_t kShuffleStream = 0x5355u; // per-epoch batch shuffle
constexpr std::uint64_t kMcStream = 0x4d43u;      // per-batch MC sampling
constexpr std::uint64_t kValStream = 0x56414cu;   // fixed validation draws

std::vector<Tensor> snapshot_params(const Model& model) {
    std::vector<Tensor> out;
    for (const auto& p : model.parameters()) out.push_back(p.data());
    return out;
}

void restore_params(Model& model, const std::vector<Tensor>& snap) {
    auto params = model.parameters();
    for (size_t i = 0; i < params.size(); ++i) params[i].data() = snap[i];
}

double validation_elbo(const Model& model, const std::vector<CustomerSummary>& val,
                       const TrainConfig& config) {
    Rng rng = Rng::substream(config.seed, kValStream);
    return elbo(model, val, config.mc_samples, rng).scalar();
}

} // namespace

TrainLog train(Model& model, const std::vector<CustomerSummary>& data,
               const TrainConfig& config) {
    if (!(config.validation_fraction > 0.0 && config.validation_fraction < 0.5))
        throw ConfigError("train: validation_fraction must be in (0, 0.5)");
    const size_t n = data.size();
    const size_t n_val = static_cast<size_t>(std::floor(config.validation_fraction * n));
    if (n_val == 0 || n - n_val == 0)
        throw ConfigError("train: validation split is empty at this data size");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    {
        Rng split_rng = Rng::substream(config.seed, kSplitStream);
        for (size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[split_rng.next_u64() % i]);
    }
    std::vector<CustomerSummary> val, tr;
    for (size_t i = 0; i < n_val; ++i) val.push_back(data[order[i]]);
    for (size_t i = n_val; i < n; ++i) tr.push_back(data[order[i]]);

    if (config.normalize_inputs) {
        model.norm = fit_normalization(tr, model.input_width);
    } else {
        model.norm.mean.assign(static_cast<size_t>(model.input_width), 0.0);
        model.norm.stddev.assign(static_cast<size_t>(model.input_width), 1.0);
    }

    grad::AdamState adam;
    adam.learning_rate = config.learning_rate;
    auto params = model.parameters();

    TrainLog log;
    log.best_validation_elbo = -std::numeric_limits<double>::infinity();
    std::vector<Tensor> best = snapshot_params(model);
    int since_best = 0;

    std::vector<size_t> idx(tr.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        Rng shuffle_rng =
            Rng::substream(config.seed, kShuffleStream, static_cast<std::uint64_t>(epoch));
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[shuffle_rng.next_u64() % i]);

        double train_acc = 0.0;
        size_t batch_index = 0;
        for (size_t start = 0; start < idx.size();
             start += static_cast<size_t>(config.batch_size), ++batch_index) {
            const size_t stop =
                std::min(idx.size(), start + static_cast<size_t>(config.batch_size));
            std::vector<CustomerSummary> batch;
            batch.reserve(stop - start);
            for (size_t i = start; i < stop; ++i) batch.push_back(tr[idx[i]]);

            Rng mc_rng = Rng::substream(config.seed, kMcStream,
                                        static_cast<std::uint64_t>(epoch), batch_index);
            const Value batch_elbo = elbo(model, batch, config.mc_samples, mc_rng);
            if (!std::isfinite(batch_elbo.scalar()))
                throw NumericalError("train: non-finite ELBO at epoch " +
                                     std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_index));
            train_acc += batch_elbo.scalar() * static_cast<double>(stop - start);

            const Value loss = grad::scale(batch_elbo, -1.0);
            for (auto& p : params) p.zero_grad();
            grad::backward(loss);
            grad::adam_step(params, adam);
        }

        TrainLog::Epoch row;
        row.epoch = epoch;
        row.train_elbo = train_acc / static_cast<double>(tr.size());
        row.validation_elbo = validation_elbo(model, val, config);
        log.epochs.push_back(row);

        if (row.validation_elbo > log.best_validation_elbo) {
            log.best_validation_elbo = row.validation_elbo;
            log.best_epoch = epoch;
            best = snapshot_params(model);
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    restore_params(model, best);
    return log;
}

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta) {
    std::vector<std::pair<std::string, Tensor>> arrays;
    for (const auto& p : model.parameters()) arrays.push_back({p.node()->name, p.data()});
    grad::save_arrays(path, arrays);

    nlohmann::json j;
    j["config"] = {{"encoder_width1", meta.config.encoder_width1},
                   {"encoder_width2", meta.config.encoder_width2},
                   {"decoder_width1", meta.config.decoder_width1},
                   {"decoder_width2", meta.config.decoder_width2},
                   {"learning_rate", meta.config.learning_rate},
                   {"batch_size", meta.config.batch_size},
                   {"max_epochs", meta.config.max_epochs},
                   {"mc_samples", meta.config.mc_samples},
                   {"patience", meta.config.patience},
                   {"seed", meta.config.seed},
                   {"validation_fraction", meta.config.validation_fraction},
                   {"normalize_inputs", meta.config.normalize_inputs}};
    j["prior"] = {{"lambda", {model.prior.lambda_prior.shape, model.prior.lambda_prior.rate}},
                  {"mu", {model.prior.mu_prior.shape, model.prior.mu_prior.rate}},
                  {"nu", {model.prior.nu_prior.shape, model.prior.nu_prior.rate}},
                  {"p_spend", model.prior.p_spend}};
    j["normalization"] = {{"mean", model.norm.mean}, {"stddev", model.norm.stddev}};
    j["input_width"] = model.input_width;
    j["customer_count"] = meta.customer_count;
    if (meta.calibration_end_days) j["calibration_end_days"] = *meta.calibration_end_days;

    const std::string meta_path = path + ".json";
    const std::string tmp = meta_path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp);
        out << j.dump(2) << "\n";
    }
    if (std::rename(tmp.c_str(), meta_path.c_str()) != 0)
        throw std::runtime_error("atomic rename failed for: " + meta_path);
}

Model load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
    std::ifstream in(path + ".json");
    if (!in) throw std::runtime_error("cannot open checkpoint metadata: " + path + ".json");
    nlohmann::json j;
    in >> j;

    CheckpointMeta meta;
    const auto& c = j.at("config");
    meta.config.encoder_width1 = c.at("encoder_width1").get<int>();
    meta.config.encoder_width2 = c.at("encoder_width2").get<int>();
    meta.config.decoder_width1 = c.at("decoder_width1").get<int>();
    meta.config.decoder_width2 = c.at("decoder_width2").get<int>();
    meta.config.learning_rate = c.at("learning_rate").get<double>();
    meta.config.batch_size = c.at("batch_size").get<int>();
    meta.config.max_epochs = c.at("max_epochs").get<int>();
    meta.config.mc_samples = c.at("mc_samples").get<int>();
    meta.config.patience = c.at("patience").get<int>();
    meta.config.seed = c.at("seed").get<std::uint64_t>();
    meta.config.validation_fraction = c.at("validation_fraction").get<double>();
    meta.config.normalize_inputs = c.at("normalize_inputs").get<bool>();
    meta.customer_count = j.at("customer_count").get<long>();
    if (j.contains("calibration_end_days"))
        meta.calibration_end_days = j.at("calibration_end_days").get<double>();

    PriorParams prior;
    prior.lambda_prior = {j.at("prior").at("lambda").at(0).get<double>(),
                          j.at("prior").at("lambda").at(1).get<double>()};
    prior.mu_prior = {j.at("prior").at("mu").at(0).get<double>(),
                      j.at("prior").at("mu").at(1).get<double>()};
    prior.nu_prior = {j.at("prior").at("nu").at(0).get<double>(),
                      j.at("prior").at("nu").at(1).get<double>()};
    prior.p_spend = j.at("prior").at("p_spend").get<double>();

    Rng dummy(0);
    Model m = make_model(meta.config, prior, j.at("input_width").get<int>(), dummy);
    m.norm.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    m.norm.stddev = j.at("normalization").at("stddev").get<std::vector<double>>();

    const auto arrays = grad::load_arrays(path);
    auto params = m.parameters();
    for (auto& p : params) {
        const auto it = std::find_if(arrays.begin(), arrays.end(), [&](const auto& kv) {
            return kv.first == p.node()->name;
        });
        if (it == arrays.end())
            throw std::runtime_error("checkpoint missing array '" + p.node()->name + "'");
        if (!it->second.same_shape(p.data()))
            throw std::runtime_error("checkpoint shape mismatch for '" + p.node()->name + "'");
        p.data() = it->second;
    }
    if (meta_out) *meta_out = meta;
    return m;
}

} // namespace clv::clvae
