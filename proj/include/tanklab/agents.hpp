#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "tanklab/data.hpp"
#include "tanklab/layers.hpp"

namespace tanklab::agents {

inline constexpr std::size_t kNumDecoders = 4;

struct AgentsConfig {
    double gamma = 0.05;
    double warmup_fraction = 0.2;  // linear gamma ramp over this share of epochs
    std::size_t latent_dim = 5;
    std::vector<std::size_t> enc_hidden{64, 32};
    std::vector<std::size_t> dec_hidden{16};
    std::size_t epochs = 80;
    std::size_t batch_size = 128;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static AgentsConfig from_json(const nlohmann::json& j);
};

/// One shared encoder, a per-decoder noise filter (columns of logsigma), and
/// four scalar answer decoders.
struct AgentsModel {
    nn::Mlp encoder;
    nn::Tensor logsigma;  // latent_dim x kNumDecoders
    std::vector<nn::Mlp> decoders;
    AgentsConfig config;
    std::size_t input_dim = 0;

    nn::ParamSet params();
};

AgentsModel init_agents(std::size_t input_dim, const AgentsConfig& cfg);

/// Per-decoder noisy channel: z + exp(logsigma_col) * noise, element-wise
/// over rows of a batch.
nn::Tensor filter_transmit(const nn::Tensor& z, const nn::Tensor& logsigma_col,
                           const nn::Tensor& noise);

/// C = sum over entries of log(1 + exp(-2*logsigma)); decays to zero as
/// noise grows.
double communication_cost(const nn::Tensor& logsigma);

struct AgentsLossBreakdown {
    std::array<double, kNumDecoders> mse{};
    double comm = 0.0;

    double total(double gamma) const {
        double t = gamma * comm;
        for (double v : mse) t += v;
        return t;
    }
};

/// Plain-value loss on one batch; `noise` holds one (batch x latent) draw
/// per decoder.
AgentsLossBreakdown agents_loss(const AgentsModel& model, const nn::Tensor& features,
                                const nn::Tensor& answers,
                                const std::vector<nn::Tensor>& noise);

struct EpochStats {
    std::array<double, kNumDecoders> mse{};
    double comm = 0.0;
    double loss = 0.0;
    double gamma = 0.0;  // after warmup scaling
};

struct AgentsTrainResult {
    AgentsModel model;
    std::vector<EpochStats> history;
    std::array<double, kNumDecoders> val_mse{};  // noiseless decode, eval split
};

/// Minibatch Adam on the train split with standardized answers and a linear
/// gamma warmup; deterministic given cfg.seed.
AgentsTrainResult train_agents(const data::QASet& set, const AgentsConfig& cfg);

/// Pre-noise encoder outputs, the evaluation payload.
nn::Tensor latent_responses(const AgentsModel& model, const nn::Tensor& features);

nlohmann::json agents_checkpoint(AgentsModel& model);
AgentsModel agents_from_checkpoint(const nlohmann::json& ckpt);

}  // namespace tanklab::agents
