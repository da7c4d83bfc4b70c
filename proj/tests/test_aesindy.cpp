#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "tanklab/aesindy.hpp"
#include "tanklab/data.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/gradcheck.hpp"
#include "tanklab/graph.hpp"
#include "tanklab/rng.hpp"
#include "tanklab/sindy.hpp"

using namespace tanklab;

namespace {

nn::Mlp linear_mlp(const nn::Tensor& a) {
    auto rng = make_rng(0);
    nn::DenseLayer layer = nn::make_dense(a.cols(), a.rows(), nn::Activation::Identity, rng);
    layer.W = a;
    layer.b.fill(0.0);
    nn::Mlp mlp;
    mlp.layers.push_back(layer);
    return mlp;
}

nn::Mlp identity_mlp(std::size_t dim) {
    nn::Tensor eye(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) eye(i, i) = 1.0;
    return linear_mlp(eye);
}

/// Two-dimensional stub whose encoder/decoder are identities and whose
/// library is {1, z1, z2}; xi is left zero.
aesindy::AESindyModel stub_model() {
    aesindy::AESindyConfig cfg;
    cfg.latent_dim = 2;
    cfg.enc_hidden = {4};
    cfg.dec_hidden = {4};
    cfg.poly_degree = 1;
    cfg.pairwise_signed_sqrt = false;
    cfg.unary_signed_sqrt = false;
    cfg.seed = 61;
    aesindy::AESindyModel model = aesindy::init_aesindy(2, cfg);
    model.encoder = identity_mlp(2);
    model.decoder = identity_mlp(2);
    return model;
}

data::LiftedSet tiny_lifted() {
    data::SindyGenConfig gen;
    gen.num_ic = 12;
    gen.steps = 8;
    gen.seed = 62;
    return data::lift_dataset(data::gen_sindy_set(gen));
}

bool same_params(aesindy::AESindyModel& a, aesindy::AESindyModel& b) {
    nn::ParamSet pa = a.params();
    nn::ParamSet pb = b.params();
    if (pa.size() != pb.size() || a.mask != b.mask) return false;
    for (std::size_t t = 0; t < pa.size(); ++t) {
        if (pa.names[t] != pb.names[t]) return false;
        if (!pa.tensors[t]->same_shape(*pb.tensors[t])) return false;
        for (std::size_t i = 0; i < pa.tensors[t]->size(); ++i)
            if ((*pa.tensors[t])[i] != (*pb.tensors[t])[i]) return false;
    }
    return true;
}

}  // namespace

TEST_SUITE("aesindy.latent") {
    TEST_CASE("identity and linear encoders pass (x, xdot) through exactly") {
        aesindy::AESindyModel model = stub_model();
        nn::Tensor x(3, 2);
        nn::Tensor xdot(3, 2);
        auto rng = make_rng(63);
        NormalSampler normal(rng);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = normal.next();
            xdot[i] = normal.next();
        }
        const auto ident = aesindy::latent_state_and_derivative(model, x, xdot);
        CHECK(ident.z.values() == x.values());
        CHECK(ident.zdot.values() == xdot.values());

        nn::Tensor a(2, 2);
        a(0, 0) = 1.5;
        a(0, 1) = -0.3;
        a(1, 0) = 0.2;
        a(1, 1) = 0.8;
        model.encoder = linear_mlp(a);
        const auto lin = aesindy::latent_state_and_derivative(model, x, xdot);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t r = 0; r < 2; ++r) {
                const double z = a(r, 0) * x(i, 0) + a(r, 1) * x(i, 1);
                const double zd = a(r, 0) * xdot(i, 0) + a(r, 1) * xdot(i, 1);
                CHECK(lin.z(i, r) == doctest::Approx(z).epsilon(1e-15));
                CHECK(lin.zdot(i, r) == doctest::Approx(zd).epsilon(1e-15));
            }
    }

    TEST_CASE("tangent of a random network matches central differences") {
        aesindy::AESindyConfig cfg;
        cfg.latent_dim = 2;
        cfg.enc_hidden = {6, 4};
        cfg.seed = 64;
        aesindy::AESindyModel model = aesindy::init_aesindy(3, cfg);

        auto rng = make_rng(65);
        NormalSampler normal(rng);
        nn::Tensor x(4, 3);
        nn::Tensor xdot(4, 3);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = normal.next();
            xdot[i] = normal.next();
        }
        const auto out = aesindy::latent_state_and_derivative(model, x, xdot);
        const double h = 1e-6;
        nn::Tensor xp = x;
        nn::Tensor xm = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            xp[i] += h * xdot[i];
            xm[i] -= h * xdot[i];
        }
        const nn::Tensor zp = nn::mlp_eval(model.encoder, xp);
        const nn::Tensor zm = nn::mlp_eval(model.encoder, xm);
        for (std::size_t i = 0; i < out.zdot.size(); ++i) {
            const double fd = (zp[i] - zm[i]) / (2.0 * h);
            CHECK(out.zdot[i] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_SUITE("aesindy.loss") {
    TEST_CASE("perfect autoencoder with zero dynamics on static data gives zero loss") {
        aesindy::AESindyModel model = stub_model();
        nn::Tensor x(4, 2);
        auto rng = make_rng(66);
        NormalSampler normal(rng);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = normal.next();
        nn::Tensor xdot(4, 2);
        const auto terms = aesindy::aesindy_loss(model, x, xdot);
        CHECK(terms.recon == 0.0);
        CHECK(terms.sindy_x == 0.0);
        CHECK(terms.sindy_z == 0.0);
        CHECK(terms.l1 == 0.0);
        CHECK(terms.total(model.config) == 0.0);
    }

    TEST_CASE("zero loss weights reduce the total to plain reconstruction") {
        aesindy::AESindyConfig cfg;
        cfg.latent_dim = 2;
        cfg.enc_hidden = {5};
        cfg.dec_hidden = {5};
        cfg.poly_degree = 2;
        cfg.lambda1 = 0.0;
        cfg.lambda2 = 0.0;
        cfg.lambda3 = 0.0;
        cfg.seed = 67;
        aesindy::AESindyModel model = aesindy::init_aesindy(3, cfg);
        auto rng = make_rng(68);
        NormalSampler normal(rng);
        nn::Tensor x(5, 3);
        nn::Tensor xdot(5, 3);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = normal.next();
            xdot[i] = normal.next();
        }
        const auto terms = aesindy::aesindy_loss(model, x, xdot);
        CHECK(terms.total(cfg) == terms.recon);

        nn::Graph g;
        const auto tape = aesindy::build_loss_tape(g, model, x, xdot);
        CHECK(g.value(tape.total)(0, 0) == doctest::Approx(terms.recon).epsilon(1e-15));
    }

    TEST_CASE("tape total equals the weighted sum of its reported terms") {
        aesindy::AESindyConfig cfg;
        cfg.latent_dim = 2;
        cfg.enc_hidden = {5};
        cfg.dec_hidden = {5};
        cfg.seed = 69;
        aesindy::AESindyModel model = aesindy::init_aesindy(3, cfg);
        auto rng = make_rng(70);
        NormalSampler normal(rng);
        for (std::size_t i = 0; i < model.xi.size(); ++i) model.xi[i] = 0.4 * normal.next();
        nn::Tensor x(5, 3);
        nn::Tensor xdot(5, 3);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = normal.next();
            xdot[i] = normal.next();
        }
        const auto terms = aesindy::aesindy_loss(model, x, xdot);
        CHECK(terms.recon >= 0.0);
        CHECK(terms.sindy_x >= 0.0);
        CHECK(terms.sindy_z >= 0.0);
        CHECK(terms.l1 >= 0.0);
        nn::Graph g;
        const auto tape = aesindy::build_loss_tape(g, model, x, xdot);
        CHECK(g.value(tape.total)(0, 0) ==
              doctest::Approx(terms.total(model.config)).epsilon(1e-14));
    }

    TEST_CASE("all parameter gradients including xi match finite differences") {
        aesindy::AESindyConfig cfg;
        cfg.latent_dim = 2;
        cfg.enc_hidden = {5};
        cfg.dec_hidden = {5};
        cfg.poly_degree = 2;
        cfg.seed = 71;
        aesindy::AESindyModel model = aesindy::init_aesindy(4, cfg);
        auto rng = make_rng(72);
        NormalSampler normal(rng);
        for (std::size_t i = 0; i < model.xi.size(); ++i)
            model.xi[i] = 0.3 + 0.2 * normal.next();
        nn::Tensor x(3, 4);
        nn::Tensor xdot(3, 4);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = normal.next();
            xdot[i] = normal.next();
        }
        auto build = [&](nn::Graph& g) {
            return aesindy::build_loss_tape(g, model, x, xdot).total;
        };
        nn::ParamSet ps = model.params();
        const auto report = nn::check_gradients(build, ps.tensors);
        CHECK_MESSAGE(report.ok, report.worst, " err=", report.max_err);
    }
}

TEST_SUITE("aesindy.training") {
    TEST_CASE("zero epochs return the freshly initialized model") {
        const auto set = tiny_lifted();
        aesindy::AESindyConfig cfg;
        cfg.epochs = 0;
        cfg.seed = 73;
        auto result = train_aesindy(set, cfg);
        CHECK(result.history.empty());
        aesindy::AESindyModel fresh = aesindy::init_aesindy(set.x.cols(), cfg);
        CHECK(same_params(result.model, fresh));
    }

    TEST_CASE("training is deterministic across runs") {
        const auto set = tiny_lifted();
        aesindy::AESindyConfig cfg;
        cfg.epochs = 4;
        cfg.steps_per_epoch = 2;
        cfg.batch_size = 16;
        cfg.seed = 74;
        auto a = train_aesindy(set, cfg);
        auto b = train_aesindy(set, cfg);
        CHECK(same_params(a.model, b.model));
        REQUIRE(a.history.size() == 4);
        CHECK(a.history.back().loss == b.history.back().loss);
    }

    TEST_CASE("thresholding prunes permanently and keeps masked entries at zero") {
        const auto set = tiny_lifted();
        aesindy::AESindyConfig cfg;
        cfg.epochs = 6;
        cfg.steps_per_epoch = 1;
        cfg.batch_size = 16;
        cfg.threshold = 10.0;  // everything falls below this
        cfg.threshold_warmup = 2;
        cfg.threshold_every = 1;
        cfg.seed = 75;
        auto result = train_aesindy(set, cfg);
        REQUIRE(result.history.size() == 6);
        CHECK(result.history[0].active_entries == result.model.xi.size());
        CHECK(result.history[1].active_entries == 0);
        for (std::size_t e = 1; e < 6; ++e) {
            CHECK(result.history[e].active_entries == 0);
            CHECK(result.history[e].active_entries <= result.history[e - 1].active_entries);
        }
        const nn::Tensor eff = result.model.effective_xi();
        for (std::size_t i = 0; i < eff.size(); ++i) CHECK(eff[i] == 0.0);
        // the raw xi keeps training values, only the mask silences them
        CHECK(std::none_of(result.model.mask.begin(), result.model.mask.end(),
                           [](bool b) { return b; }));
    }
}

TEST_SUITE("aesindy.roundtrip") {
    TEST_CASE("identity stubs with a linear latent system match the closed form") {
        aesindy::AESindyModel model = stub_model();
        // library {1, z1, z2}: zdot = diag(-0.5, -1.0) z
        model.xi(1, 0) = -0.5;
        model.xi(2, 1) = -1.0;

        CHECK(aesindy::latent_field(model, {2.0, 3.0}) ==
              std::vector<double>{-1.0, -3.0});

        const double dt = 0.1;
        const long steps = 50;
        nn::Tensor truth(steps + 1, 2);
        for (long k = 0; k <= steps; ++k) {
            const double t = dt * static_cast<double>(k);
            truth(k, 0) = 2.0 * std::exp(-0.5 * t);
            truth(k, 1) = 3.0 * std::exp(-1.0 * t);
        }
        const auto rt = aesindy::roundtrip_eval(model, truth, dt);
        REQUIRE(rt.predicted.rows() == truth.rows());
        for (std::size_t i = 0; i < truth.size(); ++i)
            CHECK(rt.predicted[i] == doctest::Approx(truth[i]).epsilon(1e-3));
        CHECK(rt.relative_mse < 1e-8);
    }

    TEST_CASE("the first roundtrip row is exactly the autoencoder reconstruction") {
        aesindy::AESindyConfig cfg;
        cfg.latent_dim = 2;
        cfg.enc_hidden = {6};
        cfg.dec_hidden = {6};
        cfg.seed = 76;
        aesindy::AESindyModel model = aesindy::init_aesindy(3, cfg);
        auto rng = make_rng(77);
        NormalSampler normal(rng);
        nn::Tensor truth(5, 3);
        for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = normal.next();
        const auto rt = aesindy::roundtrip_eval(model, truth, 0.05);

        nn::Tensor x0(1, 3);
        for (std::size_t c = 0; c < 3; ++c) x0(0, c) = truth(0, c);
        const nn::Tensor rec = nn::mlp_eval(model.decoder, nn::mlp_eval(model.encoder, x0));
        for (std::size_t c = 0; c < 3; ++c) CHECK(rt.predicted(0, c) == rec(0, c));
    }
}

TEST_SUITE("aesindy.persistence") {
    TEST_CASE("checkpoints round-trip parameters and the pruning mask") {
        const auto set = tiny_lifted();
        aesindy::AESindyConfig cfg;
        cfg.epochs = 3;
        cfg.steps_per_epoch = 1;
        cfg.batch_size = 16;
        cfg.threshold = 0.01;
        cfg.threshold_warmup = 1;
        cfg.threshold_every = 1;
        cfg.seed = 78;
        auto result = train_aesindy(set, cfg);
        const nlohmann::json ckpt = aesindy::aesindy_checkpoint(result.model);
        aesindy::AESindyModel back = aesindy::aesindy_from_checkpoint(ckpt);
        CHECK(same_params(result.model, back));

        nlohmann::json wrong = ckpt;
        wrong["model"] = "other";
        CHECK_THROWS_AS(aesindy::aesindy_from_checkpoint(wrong), SchemaError);
    }

    TEST_CASE("exported dynamics form a loadable sparse-model document") {
        aesindy::AESindyModel model = stub_model();
        model.xi(1, 0) = -0.5;
        model.xi(2, 1) = -1.0;
        const nlohmann::json doc = aesindy::aesindy_dynamics_json(model);
        const auto loaded = sindy::sindy_from_json(doc);
        for (double z1 : {0.4, 1.7})
            for (double z2 : {-0.8, 0.9}) {
                const auto direct = aesindy::latent_field(model, {z1, z2});
                nn::Tensor zrow(1, 2);
                zrow(0, 0) = z1;
                zrow(0, 1) = z2;
                const nn::Tensor theta = sindy::build_theta(zrow, loaded.library);
                for (std::size_t d = 0; d < 2; ++d) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < loaded.library.size(); ++j)
                        v += theta(0, j) * loaded.xi.values(j, d);
                    CHECK(v == doctest::Approx(direct[d]).epsilon(1e-14));
                }
            }
    }
}
