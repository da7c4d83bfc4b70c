#include "tanklab/agents.hpp"

#include <cmath>

#include "tanklab/adam.hpp"
#include "tanklab/checkpoint.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/graph.hpp"
#include "tanklab/rng.hpp"

namespace tanklab::agents {

namespace {
constexpr std::uint64_t kTagInit = 0xa601;
constexpr std::uint64_t kTagShuffle = 0xa602;
constexpr std::uint64_t kTagNoise = 0xa603;
constexpr double kInitialLogSigma = -2.0;  // near-transparent channels at start

double warmup_gamma(const AgentsConfig& cfg, std::size_t epoch) {
    const double warm =
        std::max(1.0, std::floor(cfg.warmup_fraction * static_cast<double>(cfg.epochs)));
    const double ramp = std::min(1.0, static_cast<double>(epoch + 1) / warm);
    return cfg.gamma * ramp;
}

}  // namespace

void AgentsConfig::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("agents: gamma must be > 0");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0)
        throw ConfigError("agents: warmup_fraction must be in [0, 1]");
    if (latent_dim == 0) throw ConfigError("agents: latent_dim must be >= 1");
    if (enc_hidden.empty()) throw ConfigError("agents: enc_hidden must be non-empty");
    if (batch_size == 0) throw ConfigError("agents: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("agents: lr must be > 0");
}

nlohmann::json AgentsConfig::to_json() const {
    return {{"gamma", gamma},
            {"warmup_fraction", warmup_fraction},
            {"latent_dim", latent_dim},
            {"enc_hidden", enc_hidden},
            {"dec_hidden", dec_hidden},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"seed", seed}};
}

AgentsConfig AgentsConfig::from_json(const nlohmann::json& j) {
    try {
        AgentsConfig c;
        c.gamma = j.at("gamma").get<double>();
        c.warmup_fraction = j.at("warmup_fraction").get<double>();
        c.latent_dim = j.at("latent_dim").get<std::size_t>();
        c.enc_hidden = j.at("enc_hidden").get<std::vector<std::size_t>>();
        c.dec_hidden = j.at("dec_hidden").get<std::vector<std::size_t>>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.lr = j.at("lr").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("agents config: ") + e.what());
    }
}

nn::ParamSet AgentsModel::params() {
    nn::ParamSet ps;
    nn::collect_mlp_params("enc", encoder, ps);
    ps.add("filter.logsigma", logsigma);
    for (std::size_t k = 0; k < decoders.size(); ++k)
        nn::collect_mlp_params("dec" + std::to_string(k), decoders[k], ps);
    return ps;
}

AgentsModel init_agents(std::size_t input_dim, const AgentsConfig& cfg) {
    cfg.validate();
    if (input_dim == 0) throw ConfigError("agents: input_dim must be >= 1");
    auto rng = make_rng(derive_seed(cfg.seed, kTagInit));

    AgentsModel model;
    model.config = cfg;
    model.input_dim = input_dim;
    std::vector<std::size_t> trunk_hidden(cfg.enc_hidden.begin(), cfg.enc_hidden.end() - 1);
    model.encoder = nn::make_mlp(input_dim, trunk_hidden, cfg.enc_hidden.back(),
                                 nn::Activation::Tanh, nn::Activation::Tanh, rng);
    // latent projection folded into the encoder's final linear layer
    model.encoder.layers.push_back(
        nn::make_dense(cfg.enc_hidden.back(), cfg.latent_dim, nn::Activation::Identity, rng));
    model.logsigma = nn::Tensor(cfg.latent_dim, kNumDecoders, kInitialLogSigma);
    for (std::size_t k = 0; k < kNumDecoders; ++k)
        model.decoders.push_back(nn::make_mlp(cfg.latent_dim, cfg.dec_hidden, 1,
                                              nn::Activation::Tanh, nn::Activation::Identity,
                                              rng));
    return model;
}

nn::Tensor filter_transmit(const nn::Tensor& z, const nn::Tensor& logsigma_col,
                           const nn::Tensor& noise) {
    if (z.shape() != noise.shape())
        throw ShapeError("filter_transmit: z " + z.shape_str() + " vs noise " + noise.shape_str());
    if (logsigma_col.size() != z.cols())
        throw ShapeError("filter_transmit: filter size " + std::to_string(logsigma_col.size()) +
                         " vs latent dim " + std::to_string(z.cols()));
    nn::Tensor out = z;
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j)
            out(i, j) += std::exp(logsigma_col[j]) * noise(i, j);
    return out;
}

double communication_cost(const nn::Tensor& logsigma) {
    double c = 0.0;
    for (std::size_t i = 0; i < logsigma.size(); ++i) {
        const double a = -2.0 * logsigma[i];
        // stable softplus
        c += a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
    }
    return c;
}

AgentsLossBreakdown agents_loss(const AgentsModel& model, const nn::Tensor& features,
                                const nn::Tensor& answers,
                                const std::vector<nn::Tensor>& noise) {
    if (noise.size() != kNumDecoders)
        throw ShapeError("agents_loss: need one noise draw per decoder");
    if (answers.rows() != features.rows() || answers.cols() != kNumDecoders)
        throw ShapeError("agents_loss: answers " + answers.shape_str());

    const nn::Tensor z = nn::mlp_eval(model.encoder, features);
    AgentsLossBreakdown out;
    for (std::size_t k = 0; k < kNumDecoders; ++k) {
        nn::Tensor lcol(1, model.logsigma.rows());
        for (std::size_t j = 0; j < model.logsigma.rows(); ++j)
            lcol[j] = model.logsigma(j, k);
        const nn::Tensor zk = filter_transmit(z, lcol, noise[k]);
        const nn::Tensor pred = nn::mlp_eval(model.decoders[k], zk);
        double mse = 0.0;
        for (std::size_t i = 0; i < pred.rows(); ++i) {
            const double d = pred(i, 0) - answers(i, k);
            mse += d * d;
        }
        out.mse[k] = mse / static_cast<double>(pred.rows());
    }
    out.comm = communication_cost(model.logsigma);
    return out;
}

AgentsTrainResult train_agents(const data::QASet& set, const AgentsConfig& cfg) {
    cfg.validate();
    const auto& base = set.base;
    if (base.train_idx.empty()) throw DomainError("train_agents: empty training split");

    const nn::Tensor features =
        data::standardized_features(base.windows, base.scaler, base.train_idx);
    nn::Tensor all_answers = set.answers;
    set.answer_scaler.apply(all_answers);
    const nn::Tensor answers = data::select_rows(all_answers, base.train_idx);

    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    const std::size_t m = cfg.latent_dim;

    AgentsTrainResult result;
    result.model = init_agents(d, cfg);
    AgentsModel& model = result.model;
    nn::ParamSet ps = model.params();
    nn::AdamState adam = nn::AdamState::init(ps, cfg.lr);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng = make_rng(derive_seed(derive_seed(cfg.seed, kTagShuffle), epoch));
        const std::vector<std::size_t> order = shuffled_indices(n, shuffle_rng);
        auto noise_rng = make_rng(derive_seed(derive_seed(cfg.seed, kTagNoise), epoch));
        NormalSampler normal(noise_rng);
        const double gamma = warmup_gamma(cfg, epoch);

        EpochStats stats;
        stats.gamma = gamma;
        for (std::size_t off = 0; off < n; off += cfg.batch_size) {
            const std::size_t nb = std::min(cfg.batch_size, n - off);
            nn::Tensor xb(nb, d);
            nn::Tensor ab(nb, kNumDecoders);
            for (std::size_t r = 0; r < nb; ++r) {
                for (std::size_t c = 0; c < d; ++c) xb(r, c) = features(order[off + r], c);
                for (std::size_t c = 0; c < kNumDecoders; ++c)
                    ab(r, c) = answers(order[off + r], c);
            }

            nn::Graph g;
            nn::MlpNodes en = nn::register_mlp(g, model.encoder);
            auto lsig = g.param(model.logsigma);
            std::vector<nn::MlpNodes> dns;
            for (auto& dec : model.decoders) dns.push_back(nn::register_mlp(g, dec));

            auto x = g.input(xb);
            auto z = nn::mlp_forward(g, model.encoder, en, x);
            auto a = g.input(ab);

            nn::Graph::NodeId loss = -1;
            std::array<nn::Graph::NodeId, kNumDecoders> mse_nodes{};
            for (std::size_t k = 0; k < kNumDecoders; ++k) {
                nn::Tensor epsk(nb, m);
                for (std::size_t i = 0; i < epsk.size(); ++i) epsk[i] = normal.next();
                // scale noise per latent dim: eps * exp(logsigma[:,k]), done
                // via a transpose so the (m x 1) column broadcasts
                auto sig = g.exp(g.col(lsig, k));
                auto scaled =
                    g.transpose(g.mul_colvec(g.transpose(g.input(epsk)), sig));
                auto zk = g.add(z, scaled);
                auto pred = nn::mlp_forward(g, model.decoders[k], dns[k], zk);
                auto diff = g.sub(pred, g.col(a, k));
                auto mse = g.scale(g.sum_all(g.square(diff)), 1.0 / static_cast<double>(nb));
                mse_nodes[k] = mse;
                loss = loss < 0 ? mse : g.add(loss, mse);
            }
            auto comm = g.sum_all(g.softplus(g.scale(lsig, -2.0)));
            loss = g.add(loss, g.scale(comm, gamma));

            const double lval = g.value(loss)(0, 0);
            if (!std::isfinite(lval))
                throw OptimizerError("agents: non-finite loss at epoch " + std::to_string(epoch));
            g.backward(loss);
            adam_step(adam, ps, g.param_grads());

            const double w = static_cast<double>(nb);
            stats.loss += lval * w;
            for (std::size_t k = 0; k < kNumDecoders; ++k)
                stats.mse[k] += g.value(mse_nodes[k])(0, 0) * w;
            stats.comm += g.value(comm)(0, 0) * w;
        }
        stats.loss /= static_cast<double>(n);
        stats.comm /= static_cast<double>(n);
        for (auto& v : stats.mse) v /= static_cast<double>(n);
        result.history.push_back(stats);
    }

    if (!base.eval_idx.empty()) {
        const nn::Tensor fe = data::standardized_features(base.windows, base.scaler, base.eval_idx);
        const nn::Tensor ae = data::select_rows(all_answers, base.eval_idx);
        const nn::Tensor z = latent_responses(model, fe);
        for (std::size_t k = 0; k < kNumDecoders; ++k) {
            const nn::Tensor pred = nn::mlp_eval(model.decoders[k], z);
            double mse = 0.0;
            for (std::size_t i = 0; i < pred.rows(); ++i) {
                const double d2 = pred(i, 0) - ae(i, k);
                mse += d2 * d2;
            }
            result.val_mse[k] = mse / static_cast<double>(pred.rows());
        }
    }
    return result;
}

nn::Tensor latent_responses(const AgentsModel& model, const nn::Tensor& features) {
    if (features.cols() != model.input_dim)
        throw ShapeError("latent_responses: feature dim " + std::to_string(features.cols()) +
                         " != model input " + std::to_string(model.input_dim));
    return nn::mlp_eval(model.encoder, features);
}

nlohmann::json agents_checkpoint(AgentsModel& model) {
    nlohmann::json extra;
    extra["input_dim"] = model.input_dim;
    return nn::checkpoint_to_json("agents", model.config.to_json(), model.config.seed,
                                  model.params(), extra);
}

AgentsModel agents_from_checkpoint(const nlohmann::json& ckpt) {
    if (!ckpt.contains("model") || ckpt["model"] != "agents")
        throw SchemaError("agents_from_checkpoint: not an agents checkpoint");
    const AgentsConfig cfg = AgentsConfig::from_json(ckpt.at("config"));
    const auto input_dim = ckpt.at("extra").at("input_dim").get<std::size_t>();
    AgentsModel model = init_agents(input_dim, cfg);
    nn::ParamSet ps = model.params();
    nn::checkpoint_restore(ckpt, ps);
    return model;
}

}  // namespace tanklab::agents
