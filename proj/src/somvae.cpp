#include "tanklab/somvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tanklab/adam.hpp"
#include "tanklab/checkpoint.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/graph.hpp"
#include "tanklab/rng.hpp"

namespace tanklab::somvae {

namespace {
constexpr std::uint64_t kTagInit = 0x5001;
constexpr std::uint64_t kTagShuffle = 0x5002;
}  // namespace

LossTape build_loss_tape(nn::Graph& g, const SomVaeModel& model, const nn::Tensor& xb) {
    const std::size_t nb = xb.rows();
    nn::MlpNodes en = nn::register_mlp(g, model.encoder);
    nn::MlpNodes dn = nn::register_mlp(g, model.decoder);
    nn::MlpNodes dqn;
    if (model.config.two_decoders) dqn = nn::register_mlp(g, model.decoder_q);
    auto embed = g.param(model.grid.embeddings);

    auto x = g.input(xb);
    auto z_e = nn::mlp_forward(g, model.encoder, en, x);

    const nn::Tensor& zv = g.value(z_e);
    LossTape nodes;
    nodes.assignments.resize(nb);
    std::vector<int> assign(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        nn::Tensor row(1, zv.cols());
        for (std::size_t j = 0; j < zv.cols(); ++j) row(0, j) = zv(i, j);
        nodes.assignments[i] = nearest_embedding(row, model.grid).first;
        assign[i] = static_cast<int>(nodes.assignments[i]);
    }
    auto z_q = g.gather_rows(embed, assign);

    auto x_q = model.config.two_decoders ? nn::mlp_forward(g, model.decoder_q, dqn, z_q)
                                         : nn::mlp_forward(g, model.decoder, dn, z_q);
    auto x_e = nn::mlp_forward(g, model.decoder, dn, z_e);

    const double inv_entries = 1.0 / static_cast<double>(xb.size());
    const double inv_b = 1.0 / static_cast<double>(nb);
    nodes.recon_q = g.scale(g.sum_all(g.square(g.sub(x, x_q))), inv_entries);
    nodes.recon_e = g.scale(g.sum_all(g.square(g.sub(x, x_e))), inv_entries);
    nodes.commitment = g.scale(g.sum_all(g.square(g.sub(z_e, z_q))), inv_b);

    auto sg_ze = g.stop_gradient(z_e);
    std::vector<int> nbr_rows;
    std::vector<int> sample_rows;
    for (std::size_t i = 0; i < nb; ++i)
        for (std::size_t k : neighbors(model.grid, nodes.assignments[i])) {
            nbr_rows.push_back(static_cast<int>(k));
            sample_rows.push_back(static_cast<int>(i));
        }
    auto nbr = g.gather_rows(embed, nbr_rows);
    auto ze_rep = g.gather_rows(sg_ze, sample_rows);
    nodes.som = g.scale(g.sum_all(g.square(g.sub(nbr, ze_rep))), inv_b);

    nodes.total = g.add(g.add(nodes.recon_q, nodes.recon_e),
                        g.add(g.scale(nodes.commitment, model.config.alpha),
                              g.scale(nodes.som, model.config.beta)));
    return nodes;
}

namespace {

nn::Tensor window_features(const data::StateSet& set) {
    if (set.window_starts.empty()) throw DomainError("somvae: state set has no windows");
    nn::Tensor out(set.window_starts.size(), set.window_len * 3);
    for (std::size_t w = 0; w < set.window_starts.size(); ++w) {
        const nn::Tensor row = data::standardized_stream_window(set, set.window_starts[w]);
        for (std::size_t c = 0; c < row.size(); ++c) out(w, c) = row[c];
    }
    return out;
}

}  // namespace

std::vector<std::size_t> neighbors(const SomGrid& grid, std::size_t index) {
    if (index >= grid.size())
        throw DomainError("neighbors: index " + std::to_string(index) + " out of grid " +
                          std::to_string(grid.size()));
    const std::size_t r = index / grid.cols;
    const std::size_t c = index % grid.cols;
    std::vector<std::size_t> out;
    if (r > 0) out.push_back(index - grid.cols);
    if (c > 0) out.push_back(index - 1);
    if (c + 1 < grid.cols) out.push_back(index + 1);
    if (r + 1 < grid.rows) out.push_back(index + grid.cols);
    return out;
}

std::pair<std::size_t, nn::Tensor> nearest_embedding(const nn::Tensor& z_e, const SomGrid& grid) {
    if (z_e.size() != grid.embeddings.cols())
        throw ShapeError("nearest_embedding: query dim " + std::to_string(z_e.size()) +
                         " != embedding dim " + std::to_string(grid.embeddings.cols()));
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < z_e.size(); ++j) {
            const double diff = z_e[j] - grid.embeddings(k, j);
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    nn::Tensor z_q(1, grid.embeddings.cols());
    for (std::size_t j = 0; j < z_q.size(); ++j) z_q[j] = grid.embeddings(best, j);
    return {best, z_q};
}

void SomVaeConfig::validate() const {
    if (grid_rows == 0 || grid_cols == 0) throw ConfigError("somvae: grid must be non-empty");
    if (latent_dim == 0) throw ConfigError("somvae: latent_dim must be >= 1");
    if (enc_hidden.empty() || dec_hidden.empty())
        throw ConfigError("somvae: hidden layer lists must be non-empty");
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("somvae: alpha/beta must be >= 0");
    if (batch_size == 0) throw ConfigError("somvae: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("somvae: lr must be > 0");
}

nlohmann::json SomVaeConfig::to_json() const {
    return {{"grid_rows", grid_rows},
            {"grid_cols", grid_cols},
            {"latent_dim", latent_dim},
            {"enc_hidden", enc_hidden},
            {"dec_hidden", dec_hidden},
            {"alpha", alpha},
            {"beta", beta},
            {"two_decoders", two_decoders},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"steps_per_epoch", steps_per_epoch},
            {"lr", lr},
            {"seed", seed}};
}

SomVaeConfig SomVaeConfig::from_json(const nlohmann::json& j) {
    try {
        SomVaeConfig c;
        c.grid_rows = j.at("grid_rows").get<std::size_t>();
        c.grid_cols = j.at("grid_cols").get<std::size_t>();
        c.latent_dim = j.at("latent_dim").get<std::size_t>();
        c.enc_hidden = j.at("enc_hidden").get<std::vector<std::size_t>>();
        c.dec_hidden = j.at("dec_hidden").get<std::vector<std::size_t>>();
        c.alpha = j.at("alpha").get<double>();
        c.beta = j.at("beta").get<double>();
        c.two_decoders = j.at("two_decoders").get<bool>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.steps_per_epoch = j.at("steps_per_epoch").get<std::size_t>();
        c.lr = j.at("lr").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("somvae config: ") + e.what());
    }
}

nn::ParamSet SomVaeModel::params() {
    nn::ParamSet ps;
    nn::collect_mlp_params("enc", encoder, ps);
    nn::collect_mlp_params("dec", decoder, ps);
    if (config.two_decoders) nn::collect_mlp_params("decq", decoder_q, ps);
    ps.add("som.embeddings", grid.embeddings);
    return ps;
}

SomVaeModel init_somvae(std::size_t input_dim, const SomVaeConfig& cfg) {
    cfg.validate();
    if (input_dim == 0) throw ConfigError("somvae: input_dim must be >= 1");
    auto rng = make_rng(derive_seed(cfg.seed, kTagInit));

    SomVaeModel model;
    model.config = cfg;
    model.input_dim = input_dim;
    model.encoder = nn::make_mlp(input_dim, cfg.enc_hidden, cfg.latent_dim, nn::Activation::Tanh,
                                 nn::Activation::Identity, rng);
    model.decoder = nn::make_mlp(cfg.latent_dim, cfg.dec_hidden, input_dim, nn::Activation::Tanh,
                                 nn::Activation::Identity, rng);
    model.decoder_q = nn::make_mlp(cfg.latent_dim, cfg.dec_hidden, input_dim,
                                   nn::Activation::Tanh, nn::Activation::Identity, rng);
    model.grid.rows = cfg.grid_rows;
    model.grid.cols = cfg.grid_cols;
    model.grid.embeddings = nn::Tensor(model.grid.size(), cfg.latent_dim);
    NormalSampler normal(rng);
    for (std::size_t i = 0; i < model.grid.embeddings.size(); ++i)
        model.grid.embeddings[i] = 0.1 * normal.next();
    return model;
}

SomVaeBreakdown somvae_loss(const SomVaeModel& model, const nn::Tensor& windows) {
    nn::Graph g;
    LossTape nodes = build_loss_tape(g, model, windows);
    SomVaeBreakdown out;
    out.recon_q = g.value(nodes.recon_q)(0, 0);
    out.recon_e = g.value(nodes.recon_e)(0, 0);
    out.commitment = g.value(nodes.commitment)(0, 0);
    out.som = g.value(nodes.som)(0, 0);
    return out;
}

SomVaeTrainResult train_somvae(const data::StateSet& set, const SomVaeConfig& cfg) {
    cfg.validate();
    const nn::Tensor features = window_features(set);
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();

    SomVaeTrainResult result;
    result.model = init_somvae(d, cfg);
    SomVaeModel& model = result.model;
    nn::ParamSet ps = model.params();
    nn::AdamState adam = nn::AdamState::init(ps, cfg.lr);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng = make_rng(derive_seed(derive_seed(cfg.seed, kTagShuffle), epoch));
        const std::vector<std::size_t> order = shuffled_indices(n, shuffle_rng);
        const std::size_t steps =
            cfg.steps_per_epoch > 0
                ? std::min(cfg.steps_per_epoch, (n + cfg.batch_size - 1) / cfg.batch_size)
                : (n + cfg.batch_size - 1) / cfg.batch_size;

        EpochStats stats;
        stats.state_counts.assign(model.grid.size(), 0);
        std::size_t seen = 0;
        for (std::size_t step = 0; step < steps; ++step) {
            const std::size_t off = step * cfg.batch_size;
            const std::size_t nb = std::min(cfg.batch_size, n - off);
            if (nb == 0) break;
            nn::Tensor xb(nb, d);
            for (std::size_t r = 0; r < nb; ++r)
                for (std::size_t c = 0; c < d; ++c) xb(r, c) = features(order[off + r], c);

            nn::Graph g;
            LossTape nodes = build_loss_tape(g, model, xb);
            const double lval = g.value(nodes.total)(0, 0);
            if (!std::isfinite(lval))
                throw OptimizerError("somvae: non-finite loss at epoch " + std::to_string(epoch));
            g.backward(nodes.total);
            adam_step(adam, ps, g.param_grads());

            for (std::size_t a : nodes.assignments) ++stats.state_counts[a];
            const double w = static_cast<double>(nb);
            seen += nb;
            stats.loss += lval * w;
            stats.terms.recon_q += g.value(nodes.recon_q)(0, 0) * w;
            stats.terms.recon_e += g.value(nodes.recon_e)(0, 0) * w;
            stats.terms.commitment += g.value(nodes.commitment)(0, 0) * w;
            stats.terms.som += g.value(nodes.som)(0, 0) * w;
        }
        const double inv = 1.0 / static_cast<double>(seen);
        stats.loss *= inv;
        stats.terms.recon_q *= inv;
        stats.terms.recon_e *= inv;
        stats.terms.commitment *= inv;
        stats.terms.som *= inv;
        result.history.push_back(stats);
    }

    result.dead_states.assign(model.grid.size(), false);
    if (!result.history.empty()) {
        const auto& last = result.history.back().state_counts;
        for (std::size_t k = 0; k < last.size(); ++k) result.dead_states[k] = last[k] == 0;
    }
    return result;
}

StateTimeline predict_states(const SomVaeModel& model, const data::StateSet& set) {
    const std::size_t len = set.stream.length();
    if (len < set.window_len)
        throw DomainError("predict_states: stream shorter than one window");
    const std::size_t count = len - set.window_len + 1;
    const std::size_t d = set.window_len * 3;
    if (d != model.input_dim)
        throw ShapeError("predict_states: window dim " + std::to_string(d) + " != model input " +
                         std::to_string(model.input_dim));

    StateTimeline timeline;
    timeline.offset = set.window_len - 1;
    timeline.predicted.resize(count);
    timeline.true_phase.resize(count);

    constexpr std::size_t kChunk = 2048;
    for (std::size_t base = 0; base < count; base += kChunk) {
        const std::size_t nb = std::min(kChunk, count - base);
        nn::Tensor block(nb, d);
        for (std::size_t r = 0; r < nb; ++r) {
            const nn::Tensor row = data::standardized_stream_window(set, base + r);
            for (std::size_t c = 0; c < d; ++c) block(r, c) = row[c];
        }
        const nn::Tensor z = nn::mlp_eval(model.encoder, block);
        for (std::size_t r = 0; r < nb; ++r) {
            nn::Tensor zrow(1, z.cols());
            for (std::size_t j = 0; j < z.cols(); ++j) zrow(0, j) = z(r, j);
            timeline.predicted[base + r] =
                static_cast<int>(nearest_embedding(zrow, model.grid).first);
            timeline.true_phase[base + r] =
                static_cast<int>(set.row_phase[base + r + timeline.offset]);
        }
    }
    return timeline;
}

nlohmann::json somvae_checkpoint(SomVaeModel& model) {
    nlohmann::json extra;
    extra["input_dim"] = model.input_dim;
    return nn::checkpoint_to_json("somvae", model.config.to_json(), model.config.seed,
                                  model.params(), extra);
}

SomVaeModel somvae_from_checkpoint(const nlohmann::json& ckpt) {
    if (!ckpt.contains("model") || ckpt["model"] != "somvae")
        throw SchemaError("somvae_from_checkpoint: not a somvae checkpoint");
    const SomVaeConfig cfg = SomVaeConfig::from_json(ckpt.at("config"));
    const auto input_dim = ckpt.at("extra").at("input_dim").get<std::size_t>();
    SomVaeModel model = init_somvae(input_dim, cfg);
    nn::ParamSet ps = model.params();
    nn::checkpoint_restore(ckpt, ps);
    return model;
}

}  // namespace tanklab::somvae
