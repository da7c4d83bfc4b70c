#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "tanklab/data.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/sim.hpp"

using namespace tanklab;
using namespace tanklab::data;

namespace {

ConceptGenConfig small_concept_cfg(std::size_t count, std::uint64_t seed) {
    ConceptGenConfig cfg;
    cfg.count = count;
    cfg.window_len = 20;
    cfg.seed = seed;
    return cfg;
}

ConceptRanges degenerate_reference_ranges() {
    ConceptRanges r;
    r.bounds = {{{1.0, 1.0}, {2.0, 2.0}, {1.0, 1.0}, {0.5, 0.5}}};
    return r;
}

}  // namespace

TEST_CASE("degenerate ranges reproduce the reference parameter setting") {
    ConceptGenConfig cfg = small_concept_cfg(1, 3);
    cfg.ranges = degenerate_reference_ranges();
    ConceptLabeledSet set = gen_concept_set(cfg);
    CHECK(set.concepts(0, 0) == 1.0);
    CHECK(set.concepts(0, 1) == 2.0);
    CHECK(set.concepts(0, 2) == 1.0);
    CHECK(set.concepts(0, 3) == 0.5);

    // the window is exactly the plain simulation from the shared start state
    sim::TankParams p;
    p.q1 = 1.0;
    p.q3 = 2.0;
    p.kv12 = 1.0;
    p.kv23 = 0.5;
    p.kv3 = sim::kDefaultKv3;
    sim::Trajectory traj = sim::simulate({30, 10, 90}, p, cfg.dt, 19);
    for (std::size_t t = 0; t < 20; ++t) {
        CHECK(set.windows[0].values(t, 0) == traj.states[t].h1);
        CHECK(set.windows[0].values(t, 1) == traj.states[t].h2);
        CHECK(set.windows[0].values(t, 2) == traj.states[t].h3);
    }
}

TEST_CASE("concept sampling stays inside the ranges and is seed-deterministic") {
    ConceptGenConfig cfg = small_concept_cfg(500, 11);
    cfg.window_len = 2;
    ConceptLabeledSet a = gen_concept_set(cfg);
    ConceptLabeledSet b = gen_concept_set(cfg);
    for (std::size_t i = 0; i < 500; ++i)
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(a.concepts(i, k) >= cfg.ranges.bounds[k].first);
            CHECK(a.concepts(i, k) <= cfg.ranges.bounds[k].second);
            CHECK(a.concepts(i, k) == b.concepts(i, k));
        }
    ConceptGenConfig other = cfg;
    other.seed = 12;
    ConceptLabeledSet c = gen_concept_set(other);
    int diffs = 0;
    for (std::size_t i = 0; i < 500; ++i)
        if (a.concepts(i, 0) != c.concepts(i, 0)) ++diffs;
    CHECK(diffs > 450);
}

TEST_CASE("train/eval split is 90/10, disjoint, and covering") {
    ConceptGenConfig cfg = small_concept_cfg(200, 5);
    cfg.window_len = 2;
    ConceptLabeledSet set = gen_concept_set(cfg);
    CHECK(set.train_idx.size() == 180);
    CHECK(set.eval_idx.size() == 20);
    std::set<std::size_t> all(set.train_idx.begin(), set.train_idx.end());
    all.insert(set.eval_idx.begin(), set.eval_idx.end());
    CHECK(all.size() == 200);
}

TEST_CASE("window scaler standardizes the training channels") {
    ConceptGenConfig cfg = small_concept_cfg(50, 7);
    ConceptLabeledSet set = gen_concept_set(cfg);
    CHECK(set.scaler.mean.size() == 3);
    double sum = 0.0, sumsq = 0.0;
    std::size_t count = 0;
    for (std::size_t wi : set.train_idx) {
        nn::Tensor v = set.windows[wi].values;
        set.scaler.apply(v);
        for (std::size_t i = 0; i < v.rows(); ++i) {
            sum += v(i, 0);
            sumsq += v(i, 0) * v(i, 0);
        }
        count += v.rows();
    }
    double mean = sum / count;
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(sumsq / count - mean * mean == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("invalid sampling ranges are rejected") {
    ConceptGenConfig cfg = small_concept_cfg(1, 0);
    cfg.ranges.bounds[2] = {1.5, 0.3};
    CHECK_THROWS_AS(gen_concept_set(cfg), DomainError);
    cfg.ranges.bounds[2] = {-0.5, 0.3};
    CHECK_THROWS_AS(gen_concept_set(cfg), DomainError);
}

TEST_CASE("fill answers are exact and scale inversely with the pumps") {
    QaGenConfig cfg;
    cfg.base = small_concept_cfg(40, 9);
    QASet set = gen_qa_set(cfg);
    for (std::size_t i = 0; i < 40; ++i) {
        // a1*q1 recovers C*h_max up to one rounding of the division
        CHECK(set.answers(i, 0) * set.base.concepts(i, 0) ==
              doctest::Approx(cfg.base.C * cfg.h_max).epsilon(1e-14));
        CHECK(set.answers(i, 1) * set.base.concepts(i, 1) ==
              doctest::Approx(cfg.base.C * cfg.h_max).epsilon(1e-14));
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(set.answers(i, k) > 0.0);
            CHECK(std::isfinite(set.answers(i, k)));
        }
    }

    // doubling q1 exactly halves a1
    QaGenConfig lo = cfg;
    lo.base.count = 1;
    lo.base.ranges.bounds = {{{1.0, 1.0}, {2.0, 2.0}, {1.0, 1.0}, {1.0, 1.0}}};
    QaGenConfig hi = lo;
    hi.base.ranges.bounds[0] = {2.0, 2.0};
    CHECK(gen_qa_set(lo).answers(0, 0) == 2.0 * gen_qa_set(hi).answers(0, 0));
}

TEST_CASE("drain answers fall as the outlet opens further") {
    QaGenConfig cfg;
    cfg.base = small_concept_cfg(1, 2);
    cfg.base.ranges = degenerate_reference_ranges();
    double prev = 1e300;
    for (double kv3 : {0.5, 1.0, 2.0}) {
        cfg.drain_kv3 = kv3;
        QASet set = gen_qa_set(cfg);
        CHECK(set.answers(0, 2) < prev);
        prev = set.answers(0, 2);
    }
}

TEST_CASE("drain budget violations carry a domain error") {
    QaGenConfig cfg;
    cfg.base = small_concept_cfg(1, 2);
    cfg.base.ranges = degenerate_reference_ranges();
    cfg.drain_budget = 10;
    CHECK_THROWS_AS(gen_qa_set(cfg), DomainError);
}

TEST_CASE("sample rows count trajectories times steps with analytic derivatives") {
    SindyGenConfig cfg;
    cfg.num_ic = 20;
    cfg.steps = 50;
    cfg.seed = 4;
    SindySet set = gen_sindy_set(cfg);
    CHECK(set.x.rows() == 1000);
    CHECK(set.series.front() == 0);
    CHECK(set.series.back() == 19);
    for (std::size_t r = 0; r < set.x.rows(); r += 97) {
        sim::SystemState s{set.x(r, 0), set.x(r, 1), set.x(r, 2)};
        sim::StateDerivative d = sim::derivatives(s, set.params);
        for (std::size_t j = 0; j < 3; ++j) CHECK(set.xdot(r, j) == d[j]);
    }
    // initial rows respect the sampling box
    for (std::size_t ic = 0; ic < 20; ++ic) {
        std::size_t r = ic * 50;
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(set.x(r, j) >= cfg.ic_box.first);
            CHECK(set.x(r, j) <= cfg.ic_box.second);
        }
    }
}

TEST_CASE("numerical differentiation converges at second order away from level crossings") {
    // Ordered, well separated levels keep |h_i - h_j| bounded away from the
    // square-root kink over the whole horizon, so the classic O(dt^2) rate
    // applies at every row including the one-sided ends.
    sim::TankParams p{0.0, 0.0, 1.0, 0.5, 0.2};
    sim::SystemState x0{80.0, 45.0, 15.0};

    auto max_err = [&](double dt, std::size_t steps) {
        sim::Trajectory traj = sim::simulate(x0, p, dt, steps);
        Tensor xd = numerical_derivative(traj);
        double worst = 0.0;
        for (std::size_t i = 0; i < traj.states.size(); ++i) {
            sim::StateDerivative d = sim::derivatives(traj.states[i], p);
            for (std::size_t j = 0; j < 3; ++j)
                worst = std::max(worst, std::fabs(xd(i, j) - d[j]));
        }
        return worst;
    };
    double coarse = max_err(0.1, 10);
    double fine = max_err(0.05, 20);
    INFO("coarse=", coarse, " fine=", fine);
    CHECK(coarse < 1e-3);
    CHECK(coarse / fine > 3.4);
    CHECK(coarse / fine < 4.6);
}

TEST_CASE("numerical derivative mode replaces the analytic field") {
    SindyGenConfig cfg;
    cfg.num_ic = 5;
    cfg.steps = 40;
    cfg.seed = 21;
    cfg.numerical_derivatives = true;
    SindySet numeric = gen_sindy_set(cfg);

    std::vector<double> errs;
    for (std::size_t r = 0; r < numeric.x.rows(); ++r) {
        sim::SystemState s{numeric.x(r, 0), numeric.x(r, 1), numeric.x(r, 2)};
        sim::StateDerivative d = sim::derivatives(s, numeric.params);
        for (std::size_t j = 0; j < 3; ++j)
            errs.push_back(std::fabs(numeric.xdot(r, j) - d[j]));
    }
    std::sort(errs.begin(), errs.end());
    // the switch really produced finite differences, not analytic values
    CHECK(errs.back() > 0.0);
    // and they track the field closely at most rows (crossings spoil a few)
    CHECK(errs[errs.size() / 2] < 5e-3);
    CHECK(errs[errs.size() * 9 / 10] < 5e-2);
}

TEST_CASE("polynomial lift enumerates 56 graded monomials") {
    // independent count: sum over degrees of C(d+2,2)
    std::size_t expected = 0;
    for (int d = 0; d <= 5; ++d) expected += static_cast<std::size_t>((d + 1) * (d + 2) / 2);
    CHECK(expected == kLiftDim);
    CHECK(lift_exponents().size() == kLiftDim);

    auto at_zero = poly_lift({0, 0, 0});
    CHECK(at_zero[0] == 1.0);
    for (std::size_t j = 1; j < kLiftDim; ++j) CHECK(at_zero[j] == 0.0);

    auto at_one = poly_lift({1, 1, 1});
    for (double v : at_one) CHECK(v == 1.0);

    // graded-lex spot checks at (2, 3, 5)
    auto v = poly_lift({2, 3, 5});
    CHECK(v[1] == 2.0);    // z1
    CHECK(v[2] == 3.0);    // z2
    CHECK(v[3] == 5.0);    // z3
    CHECK(v[4] == 4.0);    // z1^2
    CHECK(v[5] == 6.0);    // z1 z2
    CHECK(v[6] == 10.0);   // z1 z3
    CHECK(v[7] == 9.0);    // z2^2
    CHECK(v[9] == 25.0);   // z3^2
    CHECK(v[10] == 8.0);   // z1^3
    CHECK(v[55] == 3125.0);  // z3^5
}

TEST_CASE("lift derivative obeys the product rule against finite differences") {
    std::array<double, 3> z{1.3, 0.7, 2.1};
    std::array<double, 3> zd{-0.4, 0.9, 0.25};
    auto ld = lift_derivative(z, zd);
    CHECK(ld[0] == 0.0);
    CHECK(ld[1] == zd[0]);
    CHECK(ld[2] == zd[1]);
    CHECK(ld[3] == zd[2]);

    const double h = 1e-6;
    std::array<double, 3> zp, zm;
    for (int i = 0; i < 3; ++i) {
        zp[i] = z[i] + h * zd[i];
        zm[i] = z[i] - h * zd[i];
    }
    auto fp = poly_lift(zp), fm = poly_lift(zm);
    for (std::size_t j = 0; j < kLiftDim; ++j) {
        double fd = (fp[j] - fm[j]) / (2 * h);
        CHECK(ld[j] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("numerical differentiation is exact on quadratic trajectories") {
    sim::Trajectory traj;
    traj.dt = 0.25;
    for (int i = 0; i < 9; ++i) {
        double t = 0.25 * i;
        traj.states.push_back({3.0 * t + 1.0, t * t, 2.0});
    }
    nn::Tensor d = numerical_derivative(traj);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(d(i, 0) == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(d(i, 1) == doctest::Approx(2.0 * 0.25 * i).epsilon(1e-10));
        CHECK(d(i, 2) == doctest::Approx(0.0));
    }
    sim::Trajectory tiny;
    tiny.dt = 0.1;
    tiny.states = {{1, 1, 1}, {2, 2, 2}};
    CHECK_THROWS_AS(numerical_derivative(tiny), DomainError);
}

TEST_CASE("state stream has the documented shape and settles into an exact period") {
    StateGenConfig cfg;
    cfg.cycles = 6;
    cfg.window_count = 200;
    cfg.seed = 31;
    StateSet set = gen_state_set(cfg);
    const std::size_t cycle = 1450;
    CHECK(set.stream.length() == 6 * cycle + 1);
    CHECK(set.row_phase.size() == set.stream.length());

    // the drain leaves a small clamp residue, so consecutive cycles differ
    // slightly at first; the cycle map settles into a bitwise orbit of period
    // at most two cycles by cycle 3, after which the stream repeats exactly
    for (std::size_t i = 3 * cycle; i + 2 * cycle < set.stream.length(); i += 97) {
        CHECK(set.stream.states[i].h1 == set.stream.states[i + 2 * cycle].h1);
        CHECK(set.stream.states[i].h2 == set.stream.states[i + 2 * cycle].h2);
        CHECK(set.stream.states[i].h3 == set.stream.states[i + 2 * cycle].h3);
    }
    // and every cycle agrees with the next to within the residue
    for (std::size_t i = 0; i + cycle < set.stream.length(); i += 97) {
        CHECK(std::fabs(set.stream.states[i].h1 - set.stream.states[i + cycle].h1) < 0.2);
        CHECK(std::fabs(set.stream.states[i].h2 - set.stream.states[i + cycle].h2) < 0.2);
        CHECK(std::fabs(set.stream.states[i].h3 - set.stream.states[i + cycle].h3) < 0.2);
    }

    // all four phases appear; three fill segments per cycle; capacity respected
    std::array<std::size_t, 4> phase_rows{0, 0, 0, 0};
    for (Phase p : set.row_phase) ++phase_rows[static_cast<int>(p)];
    for (std::size_t c : phase_rows) CHECK(c > 0);
    int fills = 0;
    int prev_seg = -1;
    for (std::size_t i = 0; i + 1 < set.stream.length(); ++i) {
        int seg = set.stream.segments[i];
        if (seg != prev_seg && set.row_phase[i + 1] == Phase::Fill) ++fills;
        prev_seg = seg;
    }
    CHECK(fills == 18);
    double peak = 0.0;
    for (const auto& s : set.stream.states) peak = std::max({peak, s.h1, s.h2, s.h3});
    CHECK(peak < sim::kTankCapacity);

    // each cycle ends essentially drained (a clamp residue below 0.2 remains)
    for (std::size_t c = 1; c <= 6; ++c) {
        const auto& e = set.stream.states[c * cycle];
        CHECK(e.h1 + e.h2 + e.h3 < 0.2);
    }

    // window labels match the phase at the final row
    for (std::size_t w = 0; w < set.window_starts.size(); ++w) {
        CHECK(set.window_labels[w] ==
              set.row_phase[set.window_starts[w] + set.window_len - 1]);
        CHECK(set.window_starts[w] + set.window_len <= set.stream.length());
    }

    Window win = state_window(set, 0);
    CHECK(win.values.rows() == 100);
    CHECK(win.values(0, 0) == set.stream.states[set.window_starts[0]].h1);
}

TEST_CASE("default state config yields the full-length stream") {
    StateGenConfig cfg;
    cfg.window_count = 1;
    cfg.seed = 1;
    StateSet set = gen_state_set(cfg);
    CHECK(set.stream.length() == 145001);
}

TEST_CASE("concept set survives a csv round trip") {
    ConceptGenConfig cfg = small_concept_cfg(12, 17);
    ConceptLabeledSet set = gen_concept_set(cfg);
    std::string path = "concept_roundtrip.csv";
    save_concept_set(path, set, {{"note", "test"}});
    ConceptLabeledSet loaded = load_concept_set(path);
    REQUIRE(loaded.windows.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t k = 0; k < 4; ++k) CHECK(loaded.concepts(i, k) == set.concepts(i, k));
        for (std::size_t t = 0; t < 20; ++t)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(loaded.windows[i].values(t, j) == set.windows[i].values(t, j));
    }
    CHECK(loaded.train_idx == set.train_idx);
    CHECK(loaded.eval_idx == set.eval_idx);
    CHECK(loaded.scaler.mean == set.scaler.mean);
    CHECK(load_manifest(path).at("seed").get<std::uint64_t>() == 17);
    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
}

TEST_CASE("qa set survives a csv round trip") {
    QaGenConfig cfg;
    cfg.base = small_concept_cfg(8, 23);
    QASet set = gen_qa_set(cfg);
    std::string path = "qa_roundtrip.csv";
    save_qa_set(path, set, nlohmann::json::object());
    QASet loaded = load_qa_set(path);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(loaded.answers(i, k) == set.answers(i, k));
            CHECK(loaded.base.concepts(i, k) == set.base.concepts(i, k));
        }
    CHECK(loaded.answer_scaler.mean == set.answer_scaler.mean);
    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
}

TEST_CASE("lifted set embeds raw coordinates and survives a round trip") {
    SindyGenConfig cfg;
    cfg.num_ic = 3;
    cfg.steps = 10;
    cfg.seed = 29;
    SindySet raw = gen_sindy_set(cfg);
    LiftedSet lifted = lift_dataset(raw);
    REQUIRE(lifted.x.rows() == 30);
    for (std::size_t r = 0; r < 30; ++r) {
        CHECK(lifted.x(r, 0) == 1.0);
        CHECK(lifted.xdot(r, 0) == 0.0);
        // the degree-1 block carries the raw data verbatim
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(lifted.x(r, 1 + j) == raw.x(r, j));
            CHECK(lifted.xdot(r, 1 + j) == raw.xdot(r, j));
            CHECK(lifted.z_true(r, j) == raw.x(r, j));
        }
    }
    std::string path = "lifted_roundtrip.csv";
    save_lifted_set(path, lifted, nlohmann::json::object());
    LiftedSet loaded = load_lifted_set(path);
    for (std::size_t r = 0; r < 30; ++r)
        for (std::size_t j = 0; j < kLiftDim; ++j) {
            CHECK(loaded.x(r, j) == lifted.x(r, j));
            CHECK(loaded.xdot(r, j) == lifted.xdot(r, j));
        }
    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
}

TEST_CASE("raw sample set survives a csv round trip") {
    SindyGenConfig cfg;
    cfg.num_ic = 4;
    cfg.steps = 6;
    cfg.kv12 = 0.8;
    cfg.seed = 31;
    SindySet set = gen_sindy_set(cfg);
    std::string path = "sindy_roundtrip.csv";
    save_sindy_set(path, set, {{"note", "test"}});
    SindySet loaded = load_sindy_set(path);
    REQUIRE(loaded.x.rows() == set.x.rows());
    for (std::size_t r = 0; r < set.x.rows(); ++r)
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(loaded.x(r, j) == set.x(r, j));
            CHECK(loaded.xdot(r, j) == set.xdot(r, j));
        }
    CHECK(loaded.series == set.series);
    CHECK(loaded.dt == set.dt);
    CHECK(loaded.seed == set.seed);
    CHECK(loaded.params.kv12 == set.params.kv12);
    CHECK(loaded.params.q1 == set.params.q1);
    CHECK(load_manifest(path).at("config").at("note") == "test");

    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
    CHECK_THROWS_AS(load_sindy_set(path), MissingInputError);
}

TEST_CASE("state set survives a csv round trip") {
    StateGenConfig cfg;
    cfg.cycles = 1;
    cfg.window_count = 50;
    cfg.seed = 37;
    StateSet set = gen_state_set(cfg);
    std::string path = "state_roundtrip.csv";
    save_state_set(path, set, nlohmann::json::object());
    StateSet loaded = load_state_set(path);
    REQUIRE(loaded.stream.length() == set.stream.length());
    for (std::size_t i = 0; i < set.stream.length(); i += 13) {
        CHECK(loaded.stream.states[i].h1 == set.stream.states[i].h1);
        CHECK(loaded.row_phase[i] == set.row_phase[i]);
    }
    CHECK(loaded.window_starts == set.window_starts);
    CHECK(loaded.window_labels == set.window_labels);
    CHECK(loaded.scaler.mean == set.scaler.mean);
    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
}

TEST_CASE("header mismatches name the offending column") {
    std::string path = "bad_header.csv";
    {
        std::ofstream out(path);
        out << "series_id,t,h1,h2,WRONG,q1,q3,kv12,kv23\n";
    }
    {
        std::ofstream out(path + ".manifest.json");
        out << R"({"kind":"concept-set","series":1,"window_len":2,"dt":0.5,"seed":0,)"
            << R"("train_fraction":0.9,"scaler":{"mean":[0,0,0],"stdev":[1,1,1]},"config":{}})";
    }
    try {
        load_concept_set(path);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        std::string msg = e.what();
        CHECK(msg.find("WRONG") != std::string::npos);
        CHECK(msg.find("h3") != std::string::npos);
    }
    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
    CHECK_THROWS_AS(load_concept_set("missing_dataset.csv"), MissingInputError);
}
