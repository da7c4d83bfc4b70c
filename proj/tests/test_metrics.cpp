#include <doctest.h>

#include <cmath>
#include <vector>

#include "tanklab/errors.hpp"
#include "tanklab/metrics.hpp"
#include "tanklab/rng.hpp"

using namespace tanklab;

TEST_SUITE("metrics.pearson") {
    TEST_CASE("exact endpoints and a hand-computed interior value") {
        std::vector<double> x{1.0, 2.0, 3.0, 4.0};
        CHECK(metrics::pearson(x, x) == doctest::Approx(1.0).epsilon(1e-15));
        std::vector<double> neg{-1.0, -2.0, -3.0, -4.0};
        CHECK(metrics::pearson(x, neg) == doctest::Approx(-1.0).epsilon(1e-15));
        std::vector<double> y{1.0, 3.0, 2.0, 4.0};
        CHECK(metrics::pearson(x, y) == doctest::Approx(0.8).epsilon(1e-15));
    }

    TEST_CASE("affine invariance up to the sign of the slope") {
        std::vector<double> x{0.3, -1.2, 2.7, 0.9, -0.4};
        std::vector<double> y{1.1, 0.2, -0.7, 2.4, 0.5};
        const double r = metrics::pearson(x, y);
        std::vector<double> up(x.size());
        std::vector<double> down(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            up[i] = 2.0 * x[i] + 3.0;
            down[i] = -0.5 * x[i] + 1.0;
        }
        CHECK(metrics::pearson(up, y) == doctest::Approx(r).epsilon(1e-12));
        CHECK(metrics::pearson(down, y) == doctest::Approx(-r).epsilon(1e-12));
    }

    TEST_CASE("rejects mismatched, short, and constant inputs") {
        std::vector<double> x{1.0, 2.0, 3.0};
        CHECK_THROWS_AS(metrics::pearson(x, {1.0, 2.0}), DomainError);
        CHECK_THROWS_AS(metrics::pearson({1.0}, {2.0}), DomainError);
        CHECK_THROWS_AS(metrics::pearson(x, {5.0, 5.0, 5.0}), DomainError);
    }
}

TEST_SUITE("metrics.correlation_matrix") {
    TEST_CASE("latents equal to concepts give an identity pattern") {
        nn::Tensor data(4, 3);
        auto rng = make_rng(11);
        for (std::size_t i = 0; i < data.size(); ++i)
            data[i] = static_cast<double>(rng() % 97) / 7.0;
        const auto rep = metrics::correlation_matrix(data, data);
        REQUIRE(rep.r.rows() == 3);
        REQUIRE(rep.r.cols() == 3);
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(rep.r(c, c) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(rep.best_latent[c] == c);
            CHECK(rep.best_abs_r[c] == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    TEST_CASE("assignment recovers a permutation with negative slopes") {
        auto rng = make_rng(12);
        const std::size_t n = 50;
        nn::Tensor concepts(n, 3);
        for (std::size_t i = 0; i < concepts.size(); ++i)
            concepts[i] = static_cast<double>(rng() % 1000) / 31.0;
        // latent j carries concept perm[j], scaled by -2 and shifted
        const std::size_t perm[3] = {2, 0, 1};
        nn::Tensor latents(n, 3);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                latents(i, j) = -2.0 * concepts(i, perm[j]) + 7.0;
        const auto rep = metrics::correlation_matrix(latents, concepts);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(rep.best_latent[perm[j]] == j);
            CHECK(rep.r(perm[j], j) == doctest::Approx(-1.0).epsilon(1e-12));
        }
    }

    TEST_CASE("independent random latents stay below 0.1 at N=10000") {
        auto rng = make_rng(13);
        NormalSampler normal(rng);
        const std::size_t n = 10000;
        nn::Tensor latents(n, 5);
        nn::Tensor concepts(n, 4);
        for (std::size_t i = 0; i < latents.size(); ++i) latents[i] = normal.next();
        for (std::size_t i = 0; i < concepts.size(); ++i) concepts[i] = normal.next();
        const auto rep = metrics::correlation_matrix(latents, concepts);
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t j = 0; j < 5; ++j) CHECK(std::fabs(rep.r(c, j)) < 0.1);
    }

    TEST_CASE("zero-variance latent columns are recorded as missing") {
        nn::Tensor latents(6, 2);
        nn::Tensor concepts(6, 1);
        for (std::size_t i = 0; i < 6; ++i) {
            concepts(i, 0) = static_cast<double>(i);
            latents(i, 0) = 4.0;  // dead column
            latents(i, 1) = 2.0 * static_cast<double>(i) + 1.0;
        }
        const auto rep = metrics::correlation_matrix(latents, concepts);
        CHECK(std::isnan(rep.r(0, 0)));
        CHECK(rep.missing_cells[0]);
        CHECK_FALSE(rep.missing_cells[1]);
        CHECK(rep.best_latent[0] == 1);
        CHECK(rep.best_abs_r[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_SUITE("metrics.disentanglement") {
    TEST_CASE("perfect one-to-one correlations score 1") {
        // +-1 design columns are exactly orthogonal, so the cross terms vanish
        nn::Tensor concepts(4, 2);
        const double c0[4] = {1.0, 1.0, -1.0, -1.0};
        const double c1[4] = {1.0, -1.0, 1.0, -1.0};
        for (std::size_t i = 0; i < 4; ++i) {
            concepts(i, 0) = c0[i];
            concepts(i, 1) = c1[i];
        }
        const auto rep = metrics::correlation_matrix(concepts, concepts);
        CHECK(std::fabs(rep.r(0, 1)) < 1e-14);
        CHECK(metrics::disentanglement_score(rep) == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("all-equal correlations score 0") {
        nn::Tensor concepts(6, 1);
        nn::Tensor latents(6, 3);
        for (std::size_t i = 0; i < 6; ++i) {
            concepts(i, 0) = static_cast<double>(i);
            for (std::size_t j = 0; j < 3; ++j) latents(i, j) = static_cast<double>(i) * (j + 1.0);
        }
        const auto rep = metrics::correlation_matrix(latents, concepts);
        CHECK(metrics::disentanglement_score(rep) == doctest::Approx(0.0).epsilon(1e-12));
    }

    TEST_CASE("missing cells do not compete and a dead row contributes 0") {
        nn::Tensor latents(8, 2);
        nn::Tensor concepts(8, 2);
        for (std::size_t i = 0; i < 8; ++i) {
            concepts(i, 0) = static_cast<double>(i);
            concepts(i, 1) = 3.0;  // constant concept: its whole row is missing
            latents(i, 0) = static_cast<double>(i);
            latents(i, 1) = 5.0;  // dead latent: column missing everywhere
        }
        const auto rep = metrics::correlation_matrix(latents, concepts);
        // row 0: best |r|=1 at latent 0, the dead latent is excluded -> gap 1
        // row 1: fully missing -> contributes 0; mean over 2 concepts = 0.5
        CHECK(metrics::disentanglement_score(rep) == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_SUITE("metrics.nmi") {
    TEST_CASE("bijective relabeling gives 1") {
        std::vector<int> truth;
        for (int i = 0; i < 60; ++i) truth.push_back(i % 3);
        std::vector<int> pred(truth.size());
        for (std::size_t i = 0; i < truth.size(); ++i) pred[i] = 7 - 2 * truth[i];
        CHECK(metrics::nmi(pred, truth) == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("constant prediction gives 0") {
        std::vector<int> truth{0, 1, 2, 0, 1, 2};
        std::vector<int> pred(truth.size(), 4);
        CHECK(metrics::nmi(pred, truth) == 0.0);
        CHECK(metrics::nmi(truth, pred) == 0.0);
    }

    TEST_CASE("hand-computed partial overlap") {
        // joint counts (0,0):2 (0,1):1 (1,1):1 give
        // 2I/(Ha+Hb) = 0.3437110184854508
        std::vector<int> pred{0, 0, 0, 1};
        std::vector<int> truth{0, 0, 1, 1};
        CHECK(metrics::nmi(pred, truth) == doctest::Approx(0.3437110184854508).epsilon(1e-14));
    }

    TEST_CASE("independent uniform noise is near 0 at length 1e5") {
        auto rng = make_rng(21);
        std::vector<int> a(100000);
        std::vector<int> b(100000);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = static_cast<int>(rng() % 4);
            b[i] = static_cast<int>(rng() % 4);
        }
        CHECK(metrics::nmi(a, b) < 0.01);
    }

    TEST_CASE("label-permutation invariance") {
        auto rng = make_rng(22);
        std::vector<int> a(500);
        std::vector<int> b(500);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = static_cast<int>(rng() % 3);
            b[i] = static_cast<int>(rng() % 4);
        }
        const double base = metrics::nmi(a, b);
        std::vector<int> a2(a.size());
        const int relabel[3] = {2, 0, 1};
        for (std::size_t i = 0; i < a.size(); ++i) a2[i] = relabel[a[i]];
        CHECK(metrics::nmi(a2, b) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_SUITE("metrics.timeline") {
    TEST_CASE("state autocorrelation counts exact matches") {
        std::vector<int> s{0, 1, 0, 1, 0, 1};
        CHECK(metrics::state_autocorrelation(s, 2) == 1.0);
        CHECK(metrics::state_autocorrelation(s, 1) == 0.0);
        CHECK(metrics::state_autocorrelation(s, 3) == 0.0);
        CHECK_THROWS_AS(metrics::state_autocorrelation(s, 0), DomainError);
        CHECK_THROWS_AS(metrics::state_autocorrelation(s, 6), DomainError);
    }

    TEST_CASE("prominence of a clean period-4 pattern is 1") {
        std::vector<int> s;
        for (int i = 0; i < 40; ++i) s.push_back(i % 4);
        CHECK(metrics::cycle_prominence(s, 4) == doctest::Approx(1.0));
    }

    TEST_CASE("prominence of an uninformative pattern is not positive") {
        std::vector<int> s(40, 3);
        CHECK(metrics::cycle_prominence(s, 4) == doctest::Approx(0.0));
    }

    TEST_CASE("best_lag recovers the delay of a shifted copy") {
        std::vector<int> truth;
        for (int i = 0; i < 400; ++i) truth.push_back((i / 25) % 4);
        const long shift = 3;
        std::vector<int> pred(truth.size());
        for (std::size_t i = 0; i < truth.size(); ++i)
            pred[i] = i < static_cast<std::size_t>(shift)
                          ? truth[0]
                          : truth[i - static_cast<std::size_t>(shift)];
        CHECK(metrics::best_lag(pred, truth, 10) == shift);
        CHECK(metrics::best_lag(truth, truth, 10) == 0);
    }
}

TEST_SUITE("metrics.scalars") {
    TEST_CASE("relative trajectory mse against the mean-centred norm") {
        nn::Tensor truth(2, 2);
        truth(0, 0) = 0.0;
        truth(0, 1) = 0.0;
        truth(1, 0) = 2.0;
        truth(1, 1) = 2.0;
        nn::Tensor pred(2, 2);
        for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = 1.0;
        // numerator 4, column-centred denominator 4
        CHECK(metrics::relative_trajectory_mse(pred, truth) == doctest::Approx(1.0));
        CHECK(metrics::relative_trajectory_mse(truth, truth) == 0.0);
        nn::Tensor flat(2, 2);
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = 3.0;
        CHECK_THROWS_AS(metrics::relative_trajectory_mse(pred, flat), DomainError);
    }

    TEST_CASE("median of odd and even counts") {
        CHECK(metrics::median({3.0, 1.0, 2.0}) == 2.0);
        CHECK(metrics::median({4.0, 1.0, 3.0, 2.0}) == 2.5);
        CHECK(metrics::median({5.0}) == 5.0);
        CHECK_THROWS_AS(metrics::median({}), DomainError);
    }
}
