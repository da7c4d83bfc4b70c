#include "tanklab/aesindy.hpp"

#include <cmath>

#include "tanklab/adam.hpp"
#include "tanklab/checkpoint.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/graph.hpp"
#include "tanklab/metrics.hpp"
#include "tanklab/rng.hpp"
#include "tanklab/sim.hpp"

namespace tanklab::aesindy {

namespace {
constexpr std::uint64_t kTagInit = 0xae01;
constexpr std::uint64_t kTagBatch = 0xae02;

std::vector<std::string> latent_names(std::size_t dim) {
    std::vector<std::string> names;
    for (std::size_t i = 1; i <= dim; ++i) names.push_back("z" + std::to_string(i));
    return names;
}

sindy::LibrarySpec latent_spec(const AESindyConfig& cfg) {
    sindy::LibrarySpec spec;
    spec.poly_degree = cfg.poly_degree;
    spec.trig = false;
    spec.pairwise_signed_sqrt = cfg.pairwise_signed_sqrt;
    spec.unary_signed_sqrt = cfg.unary_signed_sqrt;
    return spec;
}

/// Theta(z) on the tape, column order matching sindy::build_library.
nn::Graph::NodeId theta_on_tape(nn::Graph& g, nn::Graph::NodeId z, std::size_t batch,
                                std::size_t dim, const sindy::LibrarySpec& spec) {
    std::vector<nn::Graph::NodeId> cols;
    cols.push_back(g.input(nn::Tensor(batch, 1, 1.0)));
    std::vector<nn::Graph::NodeId> zc(dim);
    for (std::size_t i = 0; i < dim; ++i) zc[i] = g.col(z, i);
    for (const auto& e : sindy::monomial_exponents(dim, spec.poly_degree)) {
        nn::Graph::NodeId acc = -1;
        for (std::size_t i = 0; i < dim; ++i)
            for (int k = 0; k < e[i]; ++k) acc = acc < 0 ? zc[i] : g.mul(acc, zc[i]);
        cols.push_back(acc);
    }
    if (spec.pairwise_signed_sqrt)
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = i + 1; j < dim; ++j)
                cols.push_back(g.signed_sqrt(g.sub(zc[i], zc[j])));
    if (spec.unary_signed_sqrt)
        for (std::size_t i = 0; i < dim; ++i) cols.push_back(g.signed_sqrt(zc[i]));
    return g.concat_cols(cols);
}

nn::Tensor mask_tensor(const AESindyModel& model) {
    nn::Tensor m(model.xi.rows(), model.xi.cols());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = model.mask[i] ? 1.0 : 0.0;
    return m;
}

}  // namespace

LossTape build_loss_tape(nn::Graph& g, const AESindyModel& model, const nn::Tensor& xb,
                         const nn::Tensor& xdotb) {
    const std::size_t nb = xb.rows();
    nn::MlpNodes en = nn::register_mlp(g, model.encoder);
    nn::MlpNodes dn = nn::register_mlp(g, model.decoder);
    auto xi = g.param(model.xi);

    auto x = g.input(xb);
    auto xdot = g.input(xdotb);
    auto enc = nn::mlp_forward_with_tangent(g, model.encoder, en, x, xdot);
    auto theta = theta_on_tape(g, enc.value, nb, model.config.latent_dim,
                               latent_spec(model.config));
    auto xi_eff = g.mul(xi, g.input(mask_tensor(model)));
    auto thetaxi = g.matmul(theta, xi_eff);
    auto dec = nn::mlp_forward_with_tangent(g, model.decoder, dn, enc.value, thetaxi);

    const double inv_b = 1.0 / static_cast<double>(nb);
    LossTape nodes;
    nodes.recon = g.scale(g.sum_all(g.square(g.sub(x, dec.value))), inv_b);
    nodes.sindy_x = g.scale(g.sum_all(g.square(g.sub(xdot, dec.tangent))), inv_b);
    nodes.sindy_z = g.scale(g.sum_all(g.square(g.sub(enc.tangent, thetaxi))), inv_b);
    nodes.l1 = g.sum_all(g.abs(xi_eff));
    nodes.total = g.add(
        g.add(nodes.recon, g.scale(nodes.sindy_x, model.config.lambda1)),
        g.add(g.scale(nodes.sindy_z, model.config.lambda2), g.scale(nodes.l1, model.config.lambda3)));
    return nodes;
}

void AESindyConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0)
        throw ConfigError("aesindy: loss weights must be >= 0");
    if (latent_dim == 0) throw ConfigError("aesindy: latent_dim must be >= 1");
    if (poly_degree < 0) throw ConfigError("aesindy: poly_degree must be >= 0");
    if (batch_size == 0 || steps_per_epoch == 0)
        throw ConfigError("aesindy: batch_size and steps_per_epoch must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("aesindy: lr must be > 0");
    if (threshold < 0.0) throw ConfigError("aesindy: threshold must be >= 0");
    if (threshold_every == 0) throw ConfigError("aesindy: threshold_every must be >= 1");
}

nlohmann::json AESindyConfig::to_json() const {
    return {{"lambda1", lambda1},
            {"lambda2", lambda2},
            {"lambda3", lambda3},
            {"latent_dim", latent_dim},
            {"enc_hidden", enc_hidden},
            {"dec_hidden", dec_hidden},
            {"poly_degree", poly_degree},
            {"pairwise_signed_sqrt", pairwise_signed_sqrt},
            {"unary_signed_sqrt", unary_signed_sqrt},
            {"epochs", epochs},
            {"batch_size", batch_size},
            {"steps_per_epoch", steps_per_epoch},
            {"lr", lr},
            {"threshold", threshold},
            {"threshold_every", threshold_every},
            {"threshold_warmup", threshold_warmup},
            {"seed", seed}};
}

AESindyConfig AESindyConfig::from_json(const nlohmann::json& j) {
    try {
        AESindyConfig c;
        c.lambda1 = j.at("lambda1").get<double>();
        c.lambda2 = j.at("lambda2").get<double>();
        c.lambda3 = j.at("lambda3").get<double>();
        c.latent_dim = j.at("latent_dim").get<std::size_t>();
        c.enc_hidden = j.at("enc_hidden").get<std::vector<std::size_t>>();
        c.dec_hidden = j.at("dec_hidden").get<std::vector<std::size_t>>();
        c.poly_degree = j.at("poly_degree").get<int>();
        c.pairwise_signed_sqrt = j.at("pairwise_signed_sqrt").get<bool>();
        c.unary_signed_sqrt = j.at("unary_signed_sqrt").get<bool>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.steps_per_epoch = j.at("steps_per_epoch").get<std::size_t>();
        c.lr = j.at("lr").get<double>();
        c.threshold = j.at("threshold").get<double>();
        c.threshold_every = j.at("threshold_every").get<std::size_t>();
        c.threshold_warmup = j.at("threshold_warmup").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("aesindy config: ") + e.what());
    }
}

nn::ParamSet AESindyModel::params() {
    nn::ParamSet ps;
    nn::collect_mlp_params("enc", encoder, ps);
    nn::collect_mlp_params("dec", decoder, ps);
    ps.add("xi", xi);
    return ps;
}

nn::Tensor AESindyModel::effective_xi() const {
    nn::Tensor out = xi;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!mask[i]) out[i] = 0.0;
    return out;
}

AESindyModel init_aesindy(std::size_t input_dim, const AESindyConfig& cfg) {
    cfg.validate();
    if (input_dim == 0) throw ConfigError("aesindy: input_dim must be >= 1");
    auto rng = make_rng(derive_seed(cfg.seed, kTagInit));

    AESindyModel model;
    model.config = cfg;
    model.input_dim = input_dim;
    model.encoder = nn::make_mlp(input_dim, cfg.enc_hidden, cfg.latent_dim, nn::Activation::Tanh,
                                 nn::Activation::Identity, rng);
    model.decoder = nn::make_mlp(cfg.latent_dim, cfg.dec_hidden, input_dim, nn::Activation::Tanh,
                                 nn::Activation::Identity, rng);
    model.library = sindy::build_library(latent_names(cfg.latent_dim), latent_spec(cfg));
    model.xi = nn::Tensor(model.library.size(), cfg.latent_dim);
    model.mask.assign(model.xi.size(), true);
    return model;
}

LatentState latent_state_and_derivative(const AESindyModel& model, const nn::Tensor& x,
                                        const nn::Tensor& xdot) {
    if (x.shape() != xdot.shape())
        throw ShapeError("latent_state_and_derivative: x " + x.shape_str() + " vs xdot " +
                         xdot.shape_str());
    LatentState out;
    out.z = nn::mlp_eval(model.encoder, x);
    out.zdot = nn::jacobian_vector(model.encoder, x, xdot);
    return out;
}

std::vector<double> latent_field(const AESindyModel& model, const std::vector<double>& z) {
    if (z.size() != model.config.latent_dim)
        throw ShapeError("latent_field: dim " + std::to_string(z.size()));
    const nn::Tensor xi = model.effective_xi();
    std::vector<double> dz(model.config.latent_dim, 0.0);
    for (std::size_t j = 0; j < model.library.size(); ++j) {
        const double tj = model.library.terms[j].fn(z);
        for (std::size_t d = 0; d < dz.size(); ++d) dz[d] += tj * xi(j, d);
    }
    return dz;
}

AESindyBreakdown aesindy_loss(const AESindyModel& model, const nn::Tensor& x,
                              const nn::Tensor& xdot) {
    nn::Graph g;
    LossTape nodes = build_loss_tape(g, model, x, xdot);
    AESindyBreakdown out;
    out.recon = g.value(nodes.recon)(0, 0);
    out.sindy_x = g.value(nodes.sindy_x)(0, 0);
    out.sindy_z = g.value(nodes.sindy_z)(0, 0);
    out.l1 = g.value(nodes.l1)(0, 0);
    return out;
}

AESindyTrainResult train_aesindy(const data::LiftedSet& set, const AESindyConfig& cfg) {
    cfg.validate();
    const std::size_t n = set.x.rows();
    if (n == 0) throw DomainError("train_aesindy: empty dataset");

    AESindyTrainResult result;
    result.model = init_aesindy(set.x.cols(), cfg);
    AESindyModel& model = result.model;
    nn::ParamSet ps = model.params();
    nn::AdamState adam = nn::AdamState::init(ps, cfg.lr);

    const std::size_t d = set.x.cols();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto rng = make_rng(derive_seed(derive_seed(cfg.seed, kTagBatch), epoch));
        EpochStats stats;
        for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
            const std::size_t nb = std::min(cfg.batch_size, n);
            nn::Tensor xb(nb, d);
            nn::Tensor xdotb(nb, d);
            for (std::size_t r = 0; r < nb; ++r) {
                const std::size_t src = static_cast<std::size_t>(rng() % n);
                for (std::size_t c = 0; c < d; ++c) {
                    xb(r, c) = set.x(src, c);
                    xdotb(r, c) = set.xdot(src, c);
                }
            }

            nn::Graph g;
            LossTape nodes = build_loss_tape(g, model, xb, xdotb);
            const double lval = g.value(nodes.total)(0, 0);
            if (!std::isfinite(lval))
                throw OptimizerError("aesindy: non-finite loss at epoch " +
                                     std::to_string(epoch));
            g.backward(nodes.total);
            adam_step(adam, ps, g.param_grads());

            stats.loss += lval;
            stats.terms.recon += g.value(nodes.recon)(0, 0);
            stats.terms.sindy_x += g.value(nodes.sindy_x)(0, 0);
            stats.terms.sindy_z += g.value(nodes.sindy_z)(0, 0);
            stats.terms.l1 += g.value(nodes.l1)(0, 0);
        }
        const double inv = 1.0 / static_cast<double>(cfg.steps_per_epoch);
        stats.loss *= inv;
        stats.terms.recon *= inv;
        stats.terms.sindy_x *= inv;
        stats.terms.sindy_z *= inv;
        stats.terms.l1 *= inv;

        if (epoch + 1 >= cfg.threshold_warmup &&
            (epoch + 1 - cfg.threshold_warmup) % cfg.threshold_every == 0) {
            for (std::size_t i = 0; i < model.xi.size(); ++i)
                if (model.mask[i] && std::fabs(model.xi[i]) < cfg.threshold)
                    model.mask[i] = false;
        }
        stats.active_entries = 0;
        for (bool b : model.mask)
            if (b) ++stats.active_entries;
        result.history.push_back(stats);
    }
    return result;
}

RoundtripResult roundtrip_eval(const AESindyModel& model, const nn::Tensor& true_lifted,
                               double dt) {
    if (true_lifted.cols() != model.input_dim)
        throw ShapeError("roundtrip_eval: trajectory dim " + std::to_string(true_lifted.cols()) +
                         " != model input " + std::to_string(model.input_dim));
    if (true_lifted.rows() < 2) throw DomainError("roundtrip_eval: need at least 2 rows");

    nn::Tensor x0(1, model.input_dim);
    for (std::size_t c = 0; c < model.input_dim; ++c) x0(0, c) = true_lifted(0, c);
    const nn::Tensor z0 = nn::mlp_eval(model.encoder, x0);
    std::vector<double> z0v(z0.size());
    for (std::size_t i = 0; i < z0.size(); ++i) z0v[i] = z0[i];

    sim::VectorField field = [&model](const std::vector<double>& z) {
        return latent_field(model, z);
    };
    const auto zs = sim::integrate_rk4(field, z0v, dt,
                                       static_cast<long>(true_lifted.rows() - 1));

    nn::Tensor zmat(zs.size(), model.config.latent_dim);
    for (std::size_t i = 0; i < zs.size(); ++i)
        for (std::size_t j = 0; j < model.config.latent_dim; ++j) zmat(i, j) = zs[i][j];

    RoundtripResult out;
    out.predicted = nn::mlp_eval(model.decoder, zmat);
    out.relative_mse = metrics::relative_trajectory_mse(out.predicted, true_lifted);
    return out;
}

nlohmann::json aesindy_checkpoint(AESindyModel& model) {
    nlohmann::json extra;
    extra["input_dim"] = model.input_dim;
    extra["mask"] = model.mask;
    return nn::checkpoint_to_json("aesindy", model.config.to_json(), model.config.seed,
                                  model.params(), extra);
}

AESindyModel aesindy_from_checkpoint(const nlohmann::json& ckpt) {
    if (!ckpt.contains("model") || ckpt["model"] != "aesindy")
        throw SchemaError("aesindy_from_checkpoint: not an aesindy checkpoint");
    const AESindyConfig cfg = AESindyConfig::from_json(ckpt.at("config"));
    const auto input_dim = ckpt.at("extra").at("input_dim").get<std::size_t>();
    AESindyModel model = init_aesindy(input_dim, cfg);
    nn::ParamSet ps = model.params();
    nn::checkpoint_restore(ckpt, ps);
    model.mask = ckpt.at("extra").at("mask").get<std::vector<bool>>();
    if (model.mask.size() != model.xi.size())
        throw SchemaError("aesindy_from_checkpoint: mask size mismatch");
    return model;
}

nlohmann::json aesindy_dynamics_json(const AESindyModel& model) {
    sindy::SindyModel view;
    view.library = model.library;
    view.state_dim = model.config.latent_dim;
    view.xi.values = model.effective_xi();
    view.xi.active = model.mask;
    return sindy::sindy_to_json(view);
}

}  // namespace tanklab::aesindy
