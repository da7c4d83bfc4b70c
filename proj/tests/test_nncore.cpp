#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "tanklab/adam.hpp"
#include "tanklab/checkpoint.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/gradcheck.hpp"
#include "tanklab/graph.hpp"
#include "tanklab/layers.hpp"
#include "tanklab/rng.hpp"
#include "tanklab/tensor.hpp"

using namespace tanklab;
using namespace tanklab::nn;

TEST_CASE("splitmix64 matches the reference vectors") {
    CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(1234567) == 6457827717110365317ULL);
    CHECK(splitmix64(~0ULL) == 0xe4d971771b652c20ULL);
}

TEST_CASE("derive_seed separates streams and is reproducible") {
    CHECK(derive_seed(42, 0) == derive_seed(42, 0));
    CHECK(derive_seed(42, 0) != derive_seed(42, 1));
    CHECK(derive_seed(42, 0) != derive_seed(43, 0));
}

TEST_CASE("tensor shape checks") {
    CHECK_THROWS_AS(Tensor::from_rows(2, 3, {1, 2, 3}), ShapeError);
    Tensor t(2, 2);
    CHECK_THROWS_AS(t.item(), ShapeError);
    CHECK(Tensor::scalar(7.0).item() == 7.0);
    Tensor r = Tensor::row({1, 2, 3});
    CHECK(r.rows() == 1);
    CHECK(r.cols() == 3);
    CHECK(r(0, 2) == 3.0);
}

TEST_CASE("graph forward values") {
    Graph g;
    auto a = g.input(Tensor::from_rows(2, 2, {1, 2, 3, 4}));
    auto b = g.input(Tensor::from_rows(2, 2, {5, 6, 7, 8}));
    auto c = g.matmul(a, b);
    const Tensor& v = g.value(c);
    CHECK(v(0, 0) == 19.0);
    CHECK(v(0, 1) == 22.0);
    CHECK(v(1, 0) == 43.0);
    CHECK(v(1, 1) == 50.0);

    auto s = g.signed_sqrt(g.input(Tensor::row({4.0, -9.0, 0.0})));
    CHECK(g.value(s)(0, 0) == doctest::Approx(2.0));
    CHECK(g.value(s)(0, 1) == doctest::Approx(-3.0));
    CHECK(g.value(s)(0, 2) == 0.0);

    auto sp = g.softplus(g.input(Tensor::row({1000.0, -1000.0, 0.0})));
    CHECK(g.value(sp)(0, 0) == doctest::Approx(1000.0));
    CHECK(g.value(sp)(0, 1) == doctest::Approx(0.0));
    CHECK(g.value(sp)(0, 2) == doctest::Approx(std::log(2.0)));

    auto sg = g.sigmoid(g.input(Tensor::row({-800.0, 800.0})));
    CHECK(g.value(sg)(0, 0) >= 0.0);
    CHECK(g.value(sg)(0, 1) == doctest::Approx(1.0));
    CHECK(g.value(sg).all_finite());

    auto mm = g.mean_all(g.input(Tensor::from_rows(2, 2, {1, 2, 3, 6})));
    CHECK(g.value(mm).item() == doctest::Approx(3.0));
}

TEST_CASE("graph shape errors carry diagnostics") {
    Graph g;
    auto a = g.input(Tensor(2, 3));
    auto b = g.input(Tensor(2, 3));
    CHECK_THROWS_AS(g.matmul(a, b), ShapeError);
    try {
        g.matmul(a, b);
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("2x3") != std::string::npos);
    }
}

TEST_CASE("backward of sum of squares is 2x") {
    Graph g;
    Tensor x = Tensor::row({1.5, -2.0, 0.5});
    auto xi = g.input(x);
    g.backward(g.sum_all(g.square(xi)));
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(g.grad(xi)(0, j) == doctest::Approx(2.0 * x(0, j)));
}

TEST_CASE("signed sqrt backward: smooth region and kink floor") {
    Graph g;
    auto xi = g.input(Tensor::row({4.0, -4.0, 0.0}));
    g.backward(g.sum_all(g.signed_sqrt(xi)));
    CHECK(g.grad(xi)(0, 0) == doctest::Approx(0.25));
    CHECK(g.grad(xi)(0, 1) == doctest::Approx(0.25));
    // at the kink the 1/(2 sqrt|x|) factor is floored, not infinite
    CHECK(g.grad(xi)(0, 2) == doctest::Approx(0.5 / Graph::kSignedSqrtGradFloor));
}

TEST_CASE("stop_gradient blocks the wrapped path only") {
    Graph g;
    Tensor x = Tensor::row({2.0, -3.0});
    auto xi = g.input(x);
    // d/dx sum(sg(x) * x) = sg(x) = x
    g.backward(g.sum_all(g.mul(g.stop_gradient(xi), xi)));
    CHECK(g.grad(xi)(0, 0) == doctest::Approx(2.0));
    CHECK(g.grad(xi)(0, 1) == doctest::Approx(-3.0));
}

TEST_CASE("gather_rows forward and scatter-add backward") {
    Graph g;
    auto p = g.param(Tensor::from_rows(4, 2, {0, 1, 10, 11, 20, 21, 30, 31}));
    auto sel = g.gather_rows(p, {2, 0, 2});
    CHECK(g.value(sel)(0, 0) == 20.0);
    CHECK(g.value(sel)(1, 1) == 1.0);
    g.backward(g.sum_all(sel));
    CHECK(g.grad(p)(0, 0) == doctest::Approx(1.0));
    CHECK(g.grad(p)(1, 0) == doctest::Approx(0.0));
    CHECK(g.grad(p)(2, 0) == doctest::Approx(2.0));
    CHECK(g.grad(p)(3, 1) == doctest::Approx(0.0));
}

TEST_CASE("col and concat_cols round-trip") {
    Graph g;
    Tensor x = Tensor::from_rows(2, 3, {1, 2, 3, 4, 5, 6});
    auto xi = g.input(x);
    auto back = g.concat_cols({g.col(xi, 0), g.col(xi, 1), g.col(xi, 2)});
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(g.value(back)(i, j) == x(i, j));
    g.backward(g.sum_all(g.square(back)));
    CHECK(g.grad(xi)(1, 2) == doctest::Approx(12.0));
}

TEST_CASE("finite differences confirm gradients of a mixed op chain") {
    std::mt19937_64 rng(make_rng(derive_seed(7, 1)));
    std::uniform_real_distribution<double> away(0.1, 2.0);
    std::bernoulli_distribution flip(0.5);
    Tensor x(3, 4);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = away(rng) * (flip(rng) ? 1.0 : -1.0);
    Tensor w(4, 2);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = away(rng) * (flip(rng) ? 1.0 : -1.0);

    auto build = [&](Graph& g) {
        auto xn = g.param(x);
        auto wn = g.param(w);
        auto h = g.matmul(g.signed_sqrt(xn), wn);
        auto mix = g.add(g.sin(h), g.mul(g.cos(h), g.tanh(h)));
        auto more = g.add(g.softplus(mix), g.abs(g.scale(mix, 0.5)));
        return g.mean_all(g.square(more));
    };
    auto report = check_gradients(build, {&x, &w});
    INFO(report.worst, " err=", report.max_err);
    CHECK(report.ok);
}

TEST_CASE("finite differences confirm exp/log/sigmoid/colvec gradients") {
    Tensor x = Tensor::from_rows(2, 3, {0.5, 1.2, 0.8, 1.5, 0.3, 2.0});
    Tensor c = Tensor::from_rows(2, 1, {0.7, -1.3});
    auto build = [&](Graph& g) {
        auto xn = g.param(x);
        auto cn = g.param(c);
        auto y = g.mul_colvec(g.log(xn), cn);
        auto z = g.add_rowvec(g.exp(g.scale(y, 0.3)), g.input(Tensor::row({0.1, 0.2, 0.3})));
        return g.sum_all(g.mul(z, g.sigmoid(xn)));
    };
    auto report = check_gradients(build, {&x, &c});
    INFO(report.worst, " err=", report.max_err);
    CHECK(report.ok);
}

TEST_CASE("mlp forward matches eval and jvp matches finite differences") {
    std::mt19937_64 rng = make_rng(derive_seed(11, 0));
    Mlp mlp = make_mlp(3, {8, 6}, 2, Activation::Tanh, Activation::Identity, rng);
    Tensor x = Tensor::from_rows(2, 3, {0.4, -0.2, 0.9, 1.1, 0.3, -0.5});

    Graph g;
    MlpNodes nodes = register_mlp(g, mlp);
    auto y = mlp_forward(g, mlp, nodes, g.input(x));
    Tensor direct = mlp_eval(mlp, x);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(g.value(y)(i, j) == doctest::Approx(direct(i, j)).epsilon(1e-12));

    Tensor v = Tensor::from_rows(2, 3, {1.0, -0.5, 0.25, 0.0, 2.0, -1.0});
    Tensor jv = jacobian_vector(mlp, x, v);
    const double eps = 1e-6;
    Tensor xp = x, xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + eps * v[i];
        xm[i] = x[i] - eps * v[i];
    }
    Tensor fp = mlp_eval(mlp, xp), fm = mlp_eval(mlp, xm);
    for (std::size_t i = 0; i < jv.size(); ++i) {
        double fd = (fp[i] - fm[i]) / (2.0 * eps);
        CHECK(jv[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("vector_jacobian matches finite differences") {
    std::mt19937_64 rng = make_rng(derive_seed(11, 1));
    Mlp mlp = make_mlp(3, {5}, 4, Activation::Sigmoid, Activation::Tanh, rng);
    Tensor x = Tensor::from_rows(1, 3, {0.2, -0.7, 1.3});
    Tensor ct = Tensor::from_rows(1, 4, {1.0, -2.0, 0.5, 0.25});
    Tensor vj = vector_jacobian(mlp, x, ct);
    const double eps = 1e-6;
    for (std::size_t i = 0; i < 3; ++i) {
        Tensor xp = x, xm = x;
        xp[i] += eps;
        xm[i] -= eps;
        Tensor fp = mlp_eval(mlp, xp), fm = mlp_eval(mlp, xm);
        double dp = 0.0, dm = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            dp += fp[j] * ct[j];
            dm += fm[j] * ct[j];
        }
        CHECK(vj[i] == doctest::Approx((dp - dm) / (2.0 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("reverse mode differentiates through the tangent path") {
    // the chained dynamics loss needs d/dtheta of a JVP; verify that the
    // tangent forward is itself made of differentiable tape ops
    std::mt19937_64 rng = make_rng(derive_seed(13, 0));
    Mlp mlp = make_mlp(2, {6}, 2, Activation::Tanh, Activation::Identity, rng);
    Tensor x = Tensor::from_rows(3, 2, {0.3, -0.4, 1.0, 0.5, -0.8, 0.2});
    Tensor dx = Tensor::from_rows(3, 2, {0.5, 1.0, -0.25, 0.75, 1.5, -0.5});

    auto build = [&](Graph& g) {
        MlpNodes nodes;
        for (const auto& layer : mlp.layers) {
            nodes.W.push_back(g.param(layer.W));
            nodes.b.push_back(g.param(layer.b));
        }
        auto vt = mlp_forward_with_tangent(g, mlp, nodes, g.input(x), g.input(dx));
        return g.mean_all(g.square(vt.tangent));
    };
    std::vector<Tensor*> checked;
    for (auto& layer : mlp.layers) {
        checked.push_back(&layer.W);
        checked.push_back(&layer.b);
    }
    auto report = check_gradients(build, checked);
    INFO(report.worst, " err=", report.max_err);
    CHECK(report.ok);
}

TEST_CASE("adam takes lr/(1+eps)-size steps under unit gradient") {
    Tensor w = Tensor::scalar(1.0);
    ParamSet ps;
    ps.add("w", w);
    AdamState st = AdamState::init(ps, 0.1);
    std::vector<Tensor> grads = {Tensor::scalar(1.0)};
    // constant gradient makes both bias-corrected moments exactly 1 every step
    for (int k = 1; k <= 3; ++k) {
        adam_step(st, ps, grads);
        CHECK(w.item() == doctest::Approx(1.0 - k * 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
    }
    CHECK(st.step == 3);
}

TEST_CASE("adam rejects non-finite gradients by name") {
    Tensor w = Tensor::scalar(1.0);
    ParamSet ps;
    ps.add("enc.W0", w);
    AdamState st = AdamState::init(ps);
    std::vector<Tensor> grads = {Tensor::scalar(std::numeric_limits<double>::quiet_NaN())};
    try {
        adam_step(st, ps, grads);
        FAIL("expected OptimizerError");
    } catch (const OptimizerError& e) {
        CHECK(std::string(e.what()).find("enc.W0") != std::string::npos);
    }
}

TEST_CASE("base64 matches RFC 4648 vectors") {
    auto enc = [](const std::string& s) {
        return base64_encode(reinterpret_cast<const unsigned char*>(s.data()), s.size());
    };
    CHECK(enc("") == "");
    CHECK(enc("M") == "TQ==");
    CHECK(enc("Ma") == "TWE=");
    CHECK(enc("Man") == "TWFu");
    CHECK(enc("foobar") == "Zm9vYmFy");
    auto dec = base64_decode("Zm9vYmFy");
    CHECK(std::string(dec.begin(), dec.end()) == "foobar");
    CHECK_THROWS_AS(base64_decode("a!=="), SchemaError);
    CHECK_THROWS_AS(base64_decode("abc"), SchemaError);
}

TEST_CASE("checkpoint round-trips parameters bit exactly") {
    std::mt19937_64 rng = make_rng(derive_seed(21, 0));
    Mlp a = make_mlp(3, {7}, 2, Activation::Tanh, Activation::Identity, rng);
    ParamSet pa;
    collect_mlp_params("enc", a, pa);
    nlohmann::json ckpt = checkpoint_to_json("probe", {{"latent", 2}}, 99, pa);

    std::mt19937_64 rng2 = make_rng(derive_seed(21, 1));
    Mlp b = make_mlp(3, {7}, 2, Activation::Tanh, Activation::Identity, rng2);
    ParamSet pb;
    collect_mlp_params("enc", b, pb);
    checkpoint_restore(ckpt, pb);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (std::size_t i = 0; i < a.layers[l].W.size(); ++i)
            CHECK(a.layers[l].W[i] == b.layers[l].W[i]);
        for (std::size_t i = 0; i < a.layers[l].b.size(); ++i)
            CHECK(a.layers[l].b[i] == b.layers[l].b[i]);
    }
    CHECK(ckpt.at("seed").get<std::uint64_t>() == 99);
    CHECK(ckpt.at("format") == "tanklab-checkpoint-v1");

    // renaming a parameter must be caught
    ckpt["params"][0]["name"] = "dec.W0";
    CHECK_THROWS_AS(checkpoint_restore(ckpt, pb), SchemaError);
}

TEST_CASE("checkpoint files survive a disk round trip") {
    Tensor w = Tensor::from_rows(2, 2, {1.0, -2.5, 3.25, 0.125});
    ParamSet ps;
    ps.add("w", w);
    nlohmann::json ckpt = checkpoint_to_json("probe", nlohmann::json::object(), 5, ps);
    std::string path = "ckpt_roundtrip_test.json";
    save_checkpoint(path, ckpt);
    nlohmann::json loaded = load_checkpoint(path);
    Tensor w2(2, 2);
    ParamSet ps2;
    ps2.add("w", w2);
    checkpoint_restore(loaded, ps2);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == w2[i]);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_checkpoint("no_such_checkpoint.json"), MissingInputError);
}

TEST_CASE("backward demands a scalar loss") {
    Graph g;
    auto x = g.input(Tensor(2, 2, 1.0));
    CHECK_THROWS_AS(g.backward(x), ShapeError);
}

TEST_CASE("glorot init respects the fan bound and the seed") {
    std::mt19937_64 r1 = make_rng(123), r2 = make_rng(123);
    DenseLayer a = make_dense(10, 5, Activation::Tanh, r1);
    DenseLayer b = make_dense(10, 5, Activation::Tanh, r2);
    double bound = std::sqrt(6.0 / (10 + 5));
    for (std::size_t i = 0; i < a.W.size(); ++i) {
        CHECK(std::fabs(a.W[i]) <= bound);
        CHECK(a.W[i] == b.W[i]);
    }
    for (std::size_t i = 0; i < a.b.size(); ++i) CHECK(a.b[i] == 0.0);
}
