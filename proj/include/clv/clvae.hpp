#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clv/grad.hpp"
#include "clv/ingest.hpp"
#include "clv/numerics.hpp"
#include "clv/rng.hpp"

namespace clv::clvae {

using ingest::CustomerSummary;
using num::GammaParams;

struct PriorParams {
    GammaParams lambda_prior{1.0, 1.0}; // purchase rate mixing
    GammaParams mu_prior{1.0, 1.0};     // dropout rate mixing
    GammaParams nu_prior{1.0, 1.0};     // spend rate mixing
    double p_spend = 1.0;               // fixed per-transaction spend shape
};

struct TrainConfig {
    int encoder_width1 = 64;
    int encoder_width2 = 32;
    int decoder_width1 = 32;
    int decoder_width2 = 64;
    double learning_rate = 0.001;
    int batch_size = 64;
    int max_epochs = 1000;
    int mc_samples = 10;
    int patience = 100;
    std::uint64_t seed = 50;
    double validation_fraction = 0.1;
    bool normalize_inputs = true;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// per-column standardization statistics, fitted on the training split
struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev; // zero-variance columns stored as 1
};

struct Model {
    // encoder: input -> w1/b1 relu -> w2/b2 relu -> w3/b3 softplus -> 6 cols
    // decoder: 3 latents -> d1 relu -> d2 relu -> d3 softplus -> 3 cols
    grad::Value enc_w1, enc_b1, enc_w2, enc_b2, enc_w3, enc_b3;
    grad::Value dec_w1, dec_b1, dec_w2, dec_b2, dec_w3, dec_b3;
    PriorParams prior;
    Normalization norm;
    int input_width = 4; // 4 base features + covariates

    std::vector<grad::Value> parameters() const;
};

// fresh model with symmetric-uniform hidden weights, zero hidden biases, and
// output biases softplus-inverted so zero-input posteriors/rates equal the
// prior parameters / prior means
Model make_model(const TrainConfig& config, const PriorParams& prior, int input_width,
                 Rng& init_rng);

// feature matrix: (ln(1+x), ln(1+t_x), ln(1+T), ln z_bar, covariates...),
// standardized with the model's normalization statistics
grad::Tensor input_matrix(const Model& model, const std::vector<CustomerSummary>& batch);

// fit normalization statistics on the (already feature-transformed) train rows
Normalization fit_normalization(const std::vector<CustomerSummary>& train_rows, int input_width);

// six positive posterior parameters per row:
// columns r_q, alpha_q, s_q, beta_q, q_q, gamma_q
struct Posterior {
    grad::Value r_q, alpha_q, s_q, beta_q, q_q, gamma_q; // n x 1 each
};
Posterior encode(const Model& model, const grad::Value& inputs);

struct Latents {
    grad::Value lambda, mu, nu; // n x 1 each
};
// one Gamma draw per customer per call; differentiable through the sampler
Latents sample_posterior(const Posterior& posterior, Rng& rng);

struct Decoded {
    grad::Value Lambda, M, N; // n x 1 each, strictly positive
};
Decoded decode(const Model& model, const Latents& latents);

// log of the conditional PNBD x GG likelihood per customer (n x 1); the spend
// factor is included only for x >= 1
grad::Value conditional_log_likelihood(const Decoded& rates, double p_spend,
                                       const std::vector<CustomerSummary>& batch);
// scalar non-differentiable version for oracles and prediction
double conditional_log_likelihood_one(double Lambda, double M, double N, double p_spend,
                                      const CustomerSummary& s);

// closed-form KL( Gamma(q) || Gamma(p) ), shape/rate parameterization
double kl_gamma(const GammaParams& q, const GammaParams& p);

// differentiable per-customer sum of the three latent KL terms (n x 1)
grad::Value kl_terms(const Posterior& posterior, const PriorParams& prior);

// mean over customers of (mean-over-samples conditional ll minus KL sum)
grad::Value elbo(const Model& model, const std::vector<CustomerSummary>& batch, int mc_samples,
                 Rng& rng);

struct TrainLog {
    struct Epoch {
        int epoch = 0;
        double train_elbo = 0.0;
        double validation_elbo = 0.0;
    };
    std::vector<Epoch> epochs;
    int best_epoch = -1;
    double best_validation_elbo = 0.0;
};

// Table-style training loop: shuffled mini-batches, Adam, early stopping on
// validation ELBO with best-checkpoint restore. Deterministic per config.seed.
TrainLog train(Model& model, const std::vector<CustomerSummary>& data,
               const TrainConfig& config);

// checkpoint = parameter arrays at `path` + JSON metadata at `path + ".json"`
struct CheckpointMeta {
    TrainConfig config;
    long customer_count = 0;
    std::optional<double> calibration_end_days;
};
void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta);
Model load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr);

} // namespace clv::clvae
