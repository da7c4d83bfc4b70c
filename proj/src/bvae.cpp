#include "tanklab/bvae.hpp"

#include <cmath>

#include "tanklab/adam.hpp"
#include "tanklab/checkpoint.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/graph.hpp"
#include "tanklab/rng.hpp"

namespace tanklab::bvae {

namespace {
constexpr std::uint64_t kTagInit = 0xb101;
constexpr std::uint64_t kTagShuffle = 0xb102;
constexpr std::uint64_t kTagNoise = 0xb103;
}  // namespace

void BvaeConfig::validate() const {
    if (!(beta > 0.0)) throw ConfigError("bvae: beta must be > 0");
    if (latent_dim == 0) throw ConfigError("bvae: latent_dim must be >= 1");
    if (enc_hidden.empty() || dec_hidden.empty())
        throw ConfigError("bvae: hidden layer lists must be non-empty");
    if (batch_size == 0) throw ConfigError("bvae: batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("bvae: lr must be > 0");
}

nlohmann::json BvaeConfig::to_json() const {
    return {{"beta", beta},           {"latent_dim", latent_dim}, {"enc_hidden", enc_hidden},
            {"dec_hidden", dec_hidden}, {"epochs", epochs},       {"batch_size", batch_size},
            {"lr", lr},               {"seed", seed}};
}

BvaeConfig BvaeConfig::from_json(const nlohmann::json& j) {
    try {
        BvaeConfig c;
        c.beta = j.at("beta").get<double>();
        c.latent_dim = j.at("latent_dim").get<std::size_t>();
        c.enc_hidden = j.at("enc_hidden").get<std::vector<std::size_t>>();
        c.dec_hidden = j.at("dec_hidden").get<std::vector<std::size_t>>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.lr = j.at("lr").get<double>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bvae config: ") + e.what());
    }
}

nn::ParamSet BvaeModel::params() {
    nn::ParamSet ps;
    nn::collect_mlp_params("enc", trunk, ps);
    nn::collect_mlp_params("mu", mu_head, ps);
    nn::collect_mlp_params("logvar", logvar_head, ps);
    nn::collect_mlp_params("dec", decoder, ps);
    return ps;
}

BvaeModel init_bvae(std::size_t input_dim, const BvaeConfig& cfg) {
    cfg.validate();
    if (input_dim == 0) throw ConfigError("bvae: input_dim must be >= 1");
    auto rng = make_rng(derive_seed(cfg.seed, kTagInit));

    BvaeModel model;
    model.config = cfg;
    model.input_dim = input_dim;
    std::vector<std::size_t> trunk_hidden(cfg.enc_hidden.begin(), cfg.enc_hidden.end() - 1);
    model.trunk = nn::make_mlp(input_dim, trunk_hidden, cfg.enc_hidden.back(),
                               nn::Activation::Tanh, nn::Activation::Tanh, rng);
    model.mu_head = nn::make_mlp(cfg.enc_hidden.back(), {}, cfg.latent_dim, nn::Activation::Tanh,
                                 nn::Activation::Identity, rng);
    model.logvar_head = nn::make_mlp(cfg.enc_hidden.back(), {}, cfg.latent_dim,
                                     nn::Activation::Tanh, nn::Activation::Identity, rng);
    model.decoder = nn::make_mlp(cfg.latent_dim, cfg.dec_hidden, input_dim, nn::Activation::Tanh,
                                 nn::Activation::Identity, rng);
    return model;
}

nn::Tensor reparameterize(const nn::Tensor& mu, const nn::Tensor& logvar,
                          const nn::Tensor& noise) {
    if (mu.shape() != logvar.shape() || mu.shape() != noise.shape())
        throw ShapeError("reparameterize: shape mismatch " + mu.shape_str() + " / " +
                         logvar.shape_str() + " / " + noise.shape_str());
    nn::Tensor z = mu;
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] += std::exp(0.5 * logvar[i]) * noise[i];
    return z;
}

ElboBreakdown elbo_terms(const nn::Tensor& window, const nn::Tensor& recon, const nn::Tensor& mu,
                         const nn::Tensor& logvar) {
    if (window.shape() != recon.shape())
        throw ShapeError("elbo_terms: window " + window.shape_str() + " vs recon " +
                         recon.shape_str());
    if (mu.shape() != logvar.shape() || mu.rows() != window.rows())
        throw ShapeError("elbo_terms: posterior stats shape mismatch");
    const double b = static_cast<double>(window.rows());
    ElboBreakdown out;
    for (std::size_t i = 0; i < window.size(); ++i) {
        const double d = window[i] - recon[i];
        out.recon += d * d;
    }
    out.recon /= 2.0 * b;
    for (std::size_t i = 0; i < mu.size(); ++i)
        out.kl += std::exp(logvar[i]) + mu[i] * mu[i] - 1.0 - logvar[i];
    out.kl *= 0.5 / b;
    return out;
}

double elbo_loss(const nn::Tensor& window, const nn::Tensor& recon, const nn::Tensor& mu,
                 const nn::Tensor& logvar, double beta) {
    const ElboBreakdown t = elbo_terms(window, recon, mu, logvar);
    return t.recon + beta * t.kl;
}

BvaeTrainResult train_bvae(const data::ConceptLabeledSet& set, const BvaeConfig& cfg) {
    cfg.validate();
    if (set.train_idx.empty()) throw DomainError("train_bvae: empty training split");

    const nn::Tensor features =
        data::standardized_features(set.windows, set.scaler, set.train_idx);
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    const std::size_t m = cfg.latent_dim;

    BvaeTrainResult result;
    result.model = init_bvae(d, cfg);
    BvaeModel& model = result.model;
    nn::ParamSet ps = model.params();
    nn::AdamState adam = nn::AdamState::init(ps, cfg.lr);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto shuffle_rng = make_rng(derive_seed(derive_seed(cfg.seed, kTagShuffle), epoch));
        const std::vector<std::size_t> order = shuffled_indices(n, shuffle_rng);
        auto noise_rng = make_rng(derive_seed(derive_seed(cfg.seed, kTagNoise), epoch));
        NormalSampler normal(noise_rng);

        EpochStats stats;
        for (std::size_t off = 0; off < n; off += cfg.batch_size) {
            const std::size_t nb = std::min(cfg.batch_size, n - off);
            nn::Tensor xb(nb, d);
            for (std::size_t r = 0; r < nb; ++r)
                for (std::size_t c = 0; c < d; ++c) xb(r, c) = features(order[off + r], c);
            nn::Tensor eps(nb, m);
            for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = normal.next();

            nn::Graph g;
            nn::MlpNodes tn = nn::register_mlp(g, model.trunk);
            nn::MlpNodes mn = nn::register_mlp(g, model.mu_head);
            nn::MlpNodes ln = nn::register_mlp(g, model.logvar_head);
            nn::MlpNodes dn = nn::register_mlp(g, model.decoder);

            auto x = g.input(xb);
            auto h = nn::mlp_forward(g, model.trunk, tn, x);
            auto mu = nn::mlp_forward(g, model.mu_head, mn, h);
            auto lv = nn::mlp_forward(g, model.logvar_head, ln, h);
            auto z = g.add(mu, g.mul(g.exp(g.scale(lv, 0.5)), g.input(eps)));
            auto rec = nn::mlp_forward(g, model.decoder, dn, z);

            auto recon = g.scale(g.sum_all(g.square(g.sub(rec, x))),
                                 1.0 / (2.0 * static_cast<double>(nb)));
            auto klpre =
                g.add_const(g.add(g.add(g.exp(lv), g.square(mu)), g.scale(lv, -1.0)), -1.0);
            auto kl = g.scale(g.sum_all(klpre), 0.5 / static_cast<double>(nb));
            auto loss = g.add(recon, g.scale(kl, cfg.beta));

            const double lval = g.value(loss)(0, 0);
            if (!std::isfinite(lval))
                throw OptimizerError("bvae: non-finite loss at epoch " + std::to_string(epoch));
            g.backward(loss);
            adam_step(adam, ps, g.param_grads());

            const double w = static_cast<double>(nb);
            stats.loss += lval * w;
            stats.recon += g.value(recon)(0, 0) * w;
            stats.kl += g.value(kl)(0, 0) * w;
        }
        stats.loss /= static_cast<double>(n);
        stats.recon /= static_cast<double>(n);
        stats.kl /= static_cast<double>(n);
        result.history.push_back(stats);
    }

    if (!set.eval_idx.empty()) {
        const nn::Tensor fe = data::standardized_features(set.windows, set.scaler, set.eval_idx);
        const nn::Tensor mu = encode_means(model, fe);
        const nn::Tensor rec = nn::mlp_eval(model.decoder, mu);
        double mse = 0.0;
        for (std::size_t i = 0; i < fe.size(); ++i) {
            const double diff = rec[i] - fe[i];
            mse += diff * diff;
        }
        result.val_mse = mse / static_cast<double>(fe.size());

        std::vector<double> colmean(d, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) colmean[c] += features(r, c);
        for (double& v : colmean) v /= static_cast<double>(n);
        double base = 0.0;
        for (std::size_t r = 0; r < fe.rows(); ++r)
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = fe(r, c) - colmean[c];
                base += diff * diff;
            }
        result.mean_predictor_mse = base / static_cast<double>(fe.size());
    }
    return result;
}

EncodedStats encode_stats(const BvaeModel& model, const nn::Tensor& features) {
    if (features.cols() != model.input_dim)
        throw ShapeError("encode_stats: feature dim " + std::to_string(features.cols()) +
                         " != model input " + std::to_string(model.input_dim));
    EncodedStats out;
    const nn::Tensor h = nn::mlp_eval(model.trunk, features);
    out.mu = nn::mlp_eval(model.mu_head, h);
    out.logvar = nn::mlp_eval(model.logvar_head, h);
    return out;
}

nn::Tensor encode_means(const BvaeModel& model, const nn::Tensor& features) {
    return encode_stats(model, features).mu;
}

std::vector<double> per_dimension_kl(const BvaeModel& model, const nn::Tensor& features) {
    const EncodedStats es = encode_stats(model, features);
    std::vector<double> kl(es.mu.cols(), 0.0);
    for (std::size_t r = 0; r < es.mu.rows(); ++r)
        for (std::size_t c = 0; c < es.mu.cols(); ++c)
            kl[c] += 0.5 * (std::exp(es.logvar(r, c)) + es.mu(r, c) * es.mu(r, c) - 1.0 -
                            es.logvar(r, c));
    for (double& v : kl) v /= static_cast<double>(es.mu.rows());
    return kl;
}

std::vector<bool> inactive_dimensions(const std::vector<double>& kl, double threshold) {
    std::vector<bool> flags(kl.size());
    for (std::size_t i = 0; i < kl.size(); ++i) flags[i] = kl[i] < threshold;
    return flags;
}

nlohmann::json bvae_checkpoint(BvaeModel& model) {
    nlohmann::json extra;
    extra["input_dim"] = model.input_dim;
    return nn::checkpoint_to_json("bvae", model.config.to_json(), model.config.seed,
                                  model.params(), extra);
}

BvaeModel bvae_from_checkpoint(const nlohmann::json& ckpt) {
    if (!ckpt.contains("model") || ckpt["model"] != "bvae")
        throw SchemaError("bvae_from_checkpoint: not a bvae checkpoint");
    const BvaeConfig cfg = BvaeConfig::from_json(ckpt.at("config"));
    const auto input_dim = ckpt.at("extra").at("input_dim").get<std::size_t>();
    BvaeModel model = init_bvae(input_dim, cfg);
    nn::ParamSet ps = model.params();
    nn::checkpoint_restore(ckpt, ps);
    return model;
}

}  // namespace tanklab::bvae
