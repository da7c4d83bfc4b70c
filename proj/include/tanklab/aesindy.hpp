#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "tanklab/data.hpp"
#include "tanklab/layers.hpp"
#include "tanklab/sindy.hpp"

namespace tanklab::aesindy {

struct AESindyConfig {
    double lambda1 = 1e-4;
    double lambda2 = 2e-4;
    double lambda3 = 1e-5;
    std::size_t latent_dim = 3;
    std::vector<std::size_t> enc_hidden{32, 16};
    std::vector<std::size_t> dec_hidden{16, 32};
    int poly_degree = 3;
    bool pairwise_signed_sqrt = true;
    bool unary_signed_sqrt = true;
    std::size_t epochs = 2500;
    std::size_t batch_size = 128;
    std::size_t steps_per_epoch = 4;  // subsampled minibatches per epoch
    double lr = 1e-3;
    double threshold = 0.05;
    std::size_t threshold_every = 100;
    std::size_t threshold_warmup = 500;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static AESindyConfig from_json(const nlohmann::json& j);
};

/// Encoder to a 3-dim latent, mirrored decoder, and a sparse latent
/// dynamics matrix over the latent candidate library.
struct AESindyModel {
    nn::Mlp encoder;
    nn::Mlp decoder;
    sindy::CandidateLibrary library;  // over z1..z_latent
    nn::Tensor xi;                    // library size x latent_dim
    std::vector<bool> mask;           // row-major, false = permanently pruned
    AESindyConfig config;
    std::size_t input_dim = 0;

    nn::ParamSet params();
    /// xi with the mask applied (exact zeros at pruned entries).
    nn::Tensor effective_xi() const;
};

AESindyModel init_aesindy(std::size_t input_dim, const AESindyConfig& cfg);

/// z = encoder(x); zdot = (d encoder/dx) xdot, frozen evaluation.
struct LatentState {
    nn::Tensor z;
    nn::Tensor zdot;
};
LatentState latent_state_and_derivative(const AESindyModel& model, const nn::Tensor& x,
                                        const nn::Tensor& xdot);

/// Latent field zdot = theta(z) * effective_xi for one latent row.
std::vector<double> latent_field(const AESindyModel& model, const std::vector<double>& z);

struct AESindyBreakdown {
    double recon = 0.0;    // ||x - psi(z)||^2, mean over batch
    double sindy_x = 0.0;  // ||xdot - (d psi/dz)(theta Xi)||^2, mean over batch
    double sindy_z = 0.0;  // ||(d phi/dx) xdot - theta Xi||^2, mean over batch
    double l1 = 0.0;       // sum |Xi| over unmasked entries

    double total(const AESindyConfig& c) const {
        return recon + c.lambda1 * sindy_x + c.lambda2 * sindy_z + c.lambda3 * l1;
    }
};

/// Node ids of the four loss terms and the weighted total, on a caller graph.
/// Parameters are registered in params() order, so the same builder serves
/// training, plain evaluation, and finite-difference gradient checks.
struct LossTape {
    nn::Graph::NodeId recon;
    nn::Graph::NodeId sindy_x;
    nn::Graph::NodeId sindy_z;
    nn::Graph::NodeId l1;
    nn::Graph::NodeId total;
};
LossTape build_loss_tape(nn::Graph& g, const AESindyModel& model, const nn::Tensor& x,
                         const nn::Tensor& xdot);

/// Plain-value four-term loss on a batch of (x, xdot) rows.
AESindyBreakdown aesindy_loss(const AESindyModel& model, const nn::Tensor& x,
                              const nn::Tensor& xdot);

struct EpochStats {
    AESindyBreakdown terms;
    double loss = 0.0;
    std::size_t active_entries = 0;
};

struct AESindyTrainResult {
    AESindyModel model;
    std::vector<EpochStats> history;
};

/// Adam on subsampled minibatches; sequential thresholding prunes the mask
/// every `threshold_every` epochs after `threshold_warmup`; pruned entries
/// never return. Deterministic given cfg.seed.
AESindyTrainResult train_aesindy(const data::LiftedSet& set, const AESindyConfig& cfg);

struct RoundtripResult {
    nn::Tensor predicted;  // decoded trajectory, rows match true_lifted
    double relative_mse = 0.0;
};

/// Encode row 0, integrate the latent dynamics with RK4 at dt, decode every
/// step, and compare against the full true lifted trajectory.
RoundtripResult roundtrip_eval(const AESindyModel& model, const nn::Tensor& true_lifted,
                               double dt);

nlohmann::json aesindy_checkpoint(AESindyModel& model);
AESindyModel aesindy_from_checkpoint(const nlohmann::json& ckpt);

/// The (library, coefficients, mask) part as a sindy-model JSON document.
nlohmann::json aesindy_dynamics_json(const AESindyModel& model);

}  // namespace tanklab::aesindy
