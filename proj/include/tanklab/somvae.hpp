#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tanklab/data.hpp"
#include "tanklab/layers.hpp"

namespace tanklab::somvae {

/// Rectangular self-organizing grid with 4-adjacency; embedding row k maps
/// to cell (k / cols, k % cols).
struct SomGrid {
    std::size_t rows = 2;
    std::size_t cols = 3;
    nn::Tensor embeddings;  // (rows*cols) x latent_dim

    std::size_t size() const { return rows * cols; }
};

/// 4-adjacent cell indices, in ascending order.
std::vector<std::size_t> neighbors(const SomGrid& grid, std::size_t index);

/// Closest embedding by Euclidean distance; lowest index wins ties.
std::pair<std::size_t, nn::Tensor> nearest_embedding(const nn::Tensor& z_e, const SomGrid& grid);

struct SomVaeConfig {
    std::size_t grid_rows = 2;
    std::size_t grid_cols = 3;
    std::size_t latent_dim = 16;
    std::vector<std::size_t> enc_hidden{64, 32};
    std::vector<std::size_t> dec_hidden{32, 64};
    double alpha = 1.0;
    double beta = 0.9;
    bool two_decoders = false;  // separate decoder for the quantized path
    std::size_t epochs = 40;
    std::size_t batch_size = 64;
    std::size_t steps_per_epoch = 0;  // 0 = full pass, else subsampled batches
    double lr = 1e-3;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static SomVaeConfig from_json(const nlohmann::json& j);
};

struct SomVaeModel {
    nn::Mlp encoder;
    nn::Mlp decoder;    // shared, or the z_e path when two_decoders
    nn::Mlp decoder_q;  // only used when two_decoders
    SomGrid grid;
    SomVaeConfig config;
    std::size_t input_dim = 0;

    nn::ParamSet params();
};

SomVaeModel init_somvae(std::size_t input_dim, const SomVaeConfig& cfg);

struct SomVaeBreakdown {
    double recon_q = 0.0;     // entry MSE of the quantized reconstruction
    double recon_e = 0.0;     // entry MSE of the continuous reconstruction
    double commitment = 0.0;  // mean ||z_e - z_q||^2 per sample
    double som = 0.0;         // mean sum over neighbors ||n - sg(z_e)||^2

    double total(double alpha, double beta) const {
        return recon_q + recon_e + alpha * commitment + beta * som;
    }
};

/// Plain-value loss terms on a standardized window batch.
SomVaeBreakdown somvae_loss(const SomVaeModel& model, const nn::Tensor& windows);

/// Loss tape on a caller graph: the quantized path reaches decoder and
/// selected embeddings only (the host-side argmin cuts the encoder), the
/// commitment couples encoder and selected embeddings, and the SOM term
/// updates neighbor embeddings through a stop_gradient on z_e.
struct LossTape {
    nn::Graph::NodeId recon_q;
    nn::Graph::NodeId recon_e;
    nn::Graph::NodeId commitment;
    nn::Graph::NodeId som;
    nn::Graph::NodeId total;
    std::vector<std::size_t> assignments;  // argmin embedding per batch row
};
LossTape build_loss_tape(nn::Graph& g, const SomVaeModel& model, const nn::Tensor& windows);

struct EpochStats {
    SomVaeBreakdown terms;
    double loss = 0.0;
    std::vector<std::size_t> state_counts;  // selections per embedding
};

struct SomVaeTrainResult {
    SomVaeModel model;
    std::vector<EpochStats> history;
    std::vector<bool> dead_states;  // never selected in the final epoch
};

/// Minibatch Adam over the set's sampled windows; deterministic given seed.
SomVaeTrainResult train_somvae(const data::StateSet& set, const SomVaeConfig& cfg);

struct StateTimeline {
    std::vector<int> predicted;   // embedding index per step
    std::vector<int> true_phase;  // phase label per step
    std::size_t offset = 0;       // first covered stream row (window_len - 1)
};

/// Causal sliding-window prediction over the full stream: the state at step
/// t comes from the window ending at t.
StateTimeline predict_states(const SomVaeModel& model, const data::StateSet& set);

nlohmann::json somvae_checkpoint(SomVaeModel& model);
SomVaeModel somvae_from_checkpoint(const nlohmann::json& ckpt);

}  // namespace tanklab::somvae
