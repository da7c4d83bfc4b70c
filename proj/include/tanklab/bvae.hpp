#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "tanklab/data.hpp"
#include "tanklab/layers.hpp"

namespace tanklab::bvae {

struct BvaeConfig {
    double beta = 4.0;
    std::size_t latent_dim = 5;
    std::vector<std::size_t> enc_hidden{64, 32};
    std::vector<std::size_t> dec_hidden{32, 64};
    std::size_t epochs = 60;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static BvaeConfig from_json(const nlohmann::json& j);
};

/// Encoder trunk feeding two linear heads (posterior mean and log-variance)
/// plus a mirrored decoder back to the flattened window.
struct BvaeModel {
    nn::Mlp trunk;
    nn::Mlp mu_head;
    nn::Mlp logvar_head;
    nn::Mlp decoder;
    BvaeConfig config;
    std::size_t input_dim = 0;

    nn::ParamSet params();
};

BvaeModel init_bvae(std::size_t input_dim, const BvaeConfig& cfg);

/// z = mu + exp(logvar/2) * noise, element-wise.
nn::Tensor reparameterize(const nn::Tensor& mu, const nn::Tensor& logvar,
                          const nn::Tensor& noise);

/// Loss pieces on plain values: recon = sum of squared errors / (2*batch),
/// kl = batch mean of the closed-form Gaussian KL to the standard prior.
struct ElboBreakdown {
    double recon = 0.0;
    double kl = 0.0;
};
ElboBreakdown elbo_terms(const nn::Tensor& window, const nn::Tensor& recon, const nn::Tensor& mu,
                         const nn::Tensor& logvar);
double elbo_loss(const nn::Tensor& window, const nn::Tensor& recon, const nn::Tensor& mu,
                 const nn::Tensor& logvar, double beta);

struct EpochStats {
    double loss = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

struct BvaeTrainResult {
    BvaeModel model;
    std::vector<EpochStats> history;
    double val_mse = 0.0;             // posterior-mean reconstruction, eval split
    double mean_predictor_mse = 0.0;  // train-column-mean baseline on the eval split
};

/// Minibatch Adam training on the train split; deterministic given cfg.seed.
/// Throws OptimizerError with the epoch index if the loss leaves the finite
/// range.
BvaeTrainResult train_bvae(const data::ConceptLabeledSet& set, const BvaeConfig& cfg);

struct EncodedStats {
    nn::Tensor mu;
    nn::Tensor logvar;
};
EncodedStats encode_stats(const BvaeModel& model, const nn::Tensor& features);
nn::Tensor encode_means(const BvaeModel& model, const nn::Tensor& features);

/// Mean per-window KL contribution of each latent dimension, in nats.
std::vector<double> per_dimension_kl(const BvaeModel& model, const nn::Tensor& features);
std::vector<bool> inactive_dimensions(const std::vector<double>& kl, double threshold = 0.05);

nlohmann::json bvae_checkpoint(BvaeModel& model);
BvaeModel bvae_from_checkpoint(const nlohmann::json& ckpt);

}  // namespace tanklab::bvae
