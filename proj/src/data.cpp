#include "tanklab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "tanklab/csvio.hpp"
#include "tanklab/errors.hpp"
#include "tanklab/rng.hpp"

namespace tanklab::data {

namespace {

// seed-stream tags so independent draws never share a generator
constexpr std::uint64_t kTagSeries = 0x11;
constexpr std::uint64_t kTagSplit = 0x22;
constexpr std::uint64_t kTagWindows = 0x33;

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double fraction,
                                                                            std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(derive_seed(seed, kTagSplit));
    std::vector<std::size_t> order = shuffled_indices(n, rng);
    auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    std::vector<std::size_t> train(order.begin(), order.begin() + n_train);
    std::vector<std::size_t> eval(order.begin() + n_train, order.end());
    std::sort(train.begin(), train.end());
    std::sort(eval.begin(), eval.end());
    return {std::move(train), std::move(eval)};
}

Scaler fit_window_channels(const std::vector<Window>& windows,
                           const std::vector<std::size_t>& idx) {
    Scaler s;
    if (windows.empty()) return s;
    std::size_t channels = windows.front().values.cols();
    std::vector<double> sum(channels, 0.0), sumsq(channels, 0.0);
    std::size_t count = 0;
    for (std::size_t wi : idx) {
        const Tensor& v = windows[wi].values;
        for (std::size_t i = 0; i < v.rows(); ++i)
            for (std::size_t j = 0; j < channels; ++j) {
                sum[j] += v(i, j);
                sumsq[j] += v(i, j) * v(i, j);
            }
        count += windows[wi].values.rows();
    }
    s.mean.resize(channels);
    s.stdev.resize(channels);
    for (std::size_t j = 0; j < channels; ++j) {
        s.mean[j] = sum[j] / static_cast<double>(count);
        double var = sumsq[j] / static_cast<double>(count) - s.mean[j] * s.mean[j];
        s.stdev[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Window simulate_window(const sim::SystemState& x0, const sim::TankParams& p, double dt,
                       std::size_t len) {
    sim::Trajectory traj = sim::simulate(x0, p, dt, static_cast<long>(len) - 1);
    Window w;
    w.dt = dt;
    w.values = Tensor(len, 3);
    for (std::size_t i = 0; i < len; ++i) {
        w.values(i, 0) = traj.states[i].h1;
        w.values(i, 1) = traj.states[i].h2;
        w.values(i, 2) = traj.states[i].h3;
    }
    return w;
}

sim::TankParams params_from_concepts(const std::array<double, 4>& c, double kv3, double C) {
    sim::TankParams p;
    p.q1 = c[0];
    p.q3 = c[1];
    p.kv12 = c[2];
    p.kv23 = c[3];
    p.kv3 = kv3;
    p.C = C;
    return p;
}

}  // namespace

void ConceptRanges::validate() const {
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        auto [lo, hi] = bounds[i];
        if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi || lo < 0.0)
            throw DomainError(std::string("bad sampling range for ") + kConceptNames[i]);
    }
}

Scaler Scaler::fit(const Tensor& rows) {
    Scaler s;
    std::size_t n = rows.rows(), m = rows.cols();
    if (n == 0) throw ShapeError("Scaler::fit on empty matrix");
    s.mean.assign(m, 0.0);
    s.stdev.assign(m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) s.mean[j] += rows(i, j);
    for (std::size_t j = 0; j < m; ++j) s.mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double d = rows(i, j) - s.mean[j];
            s.stdev[j] += d * d;
        }
    for (std::size_t j = 0; j < m; ++j) {
        double var = s.stdev[j] / static_cast<double>(n);
        s.stdev[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return s;
}

void Scaler::apply(Tensor& rows) const {
    if (rows.cols() != mean.size())
        throw ShapeError("Scaler::apply: " + std::to_string(rows.cols()) + " columns vs scaler " +
                         std::to_string(mean.size()));
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t j = 0; j < rows.cols(); ++j)
            rows(i, j) = (rows(i, j) - mean[j]) / stdev[j];
}

void Scaler::invert(Tensor& rows) const {
    if (rows.cols() != mean.size())
        throw ShapeError("Scaler::invert: " + std::to_string(rows.cols()) + " columns vs scaler " +
                         std::to_string(mean.size()));
    for (std::size_t i = 0; i < rows.rows(); ++i)
        for (std::size_t j = 0; j < rows.cols(); ++j) rows(i, j) = rows(i, j) * stdev[j] + mean[j];
}

nlohmann::json Scaler::to_json() const { return {{"mean", mean}, {"stdev", stdev}}; }

Scaler Scaler::from_json(const nlohmann::json& j) {
    Scaler s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stdev = j.at("stdev").get<std::vector<double>>();
    if (s.mean.size() != s.stdev.size()) throw SchemaError("scaler mean/stdev size mismatch");
    return s;
}

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::Fill: return "fill";
        case Phase::Stop: return "stop";
        case Phase::Mix: return "mix";
        case Phase::Drain: return "drain";
    }
    throw DomainError("unknown phase");
}

Phase phase_from_name(const std::string& name) {
    if (name == "fill") return Phase::Fill;
    if (name == "stop") return Phase::Stop;
    if (name == "mix") return Phase::Mix;
    if (name == "drain") return Phase::Drain;
    throw SchemaError("unknown phase name '" + name + "'");
}

Window state_window(const StateSet& set, std::size_t i) {
    if (i >= set.window_starts.size()) throw ShapeError("window index out of range");
    std::size_t b = set.window_starts[i];
    Window w;
    w.dt = set.stream.dt;
    w.values = Tensor(set.window_len, 3);
    for (std::size_t r = 0; r < set.window_len; ++r) {
        const sim::SystemState& s = set.stream.states[b + r];
        w.values(r, 0) = s.h1;
        w.values(r, 1) = s.h2;
        w.values(r, 2) = s.h3;
    }
    return w;
}

Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
    Tensor out(idx.size(), t.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= t.rows())
            throw ShapeError("select_rows: index " + std::to_string(idx[r]) + " out of " +
                             std::to_string(t.rows()));
        for (std::size_t c = 0; c < t.cols(); ++c) out(r, c) = t(idx[r], c);
    }
    return out;
}

Tensor standardized_features(const std::vector<Window>& windows, const Scaler& scaler,
                             const std::vector<std::size_t>& idx) {
    if (windows.empty() || idx.empty()) throw ShapeError("standardized_features: empty input");
    const std::size_t s = windows.front().values.rows();
    const std::size_t n = windows.front().values.cols();
    Tensor out(idx.size(), s * n);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= windows.size())
            throw ShapeError("standardized_features: window index " + std::to_string(idx[r]) +
                             " out of " + std::to_string(windows.size()));
        Tensor w = windows[idx[r]].values;
        scaler.apply(w);
        for (std::size_t i = 0; i < s * n; ++i) out(r, i) = w[i];
    }
    return out;
}

Tensor standardized_stream_window(const StateSet& set, std::size_t start) {
    if (start + set.window_len > set.stream.length())
        throw ShapeError("standardized_stream_window: start " + std::to_string(start) +
                         " past stream end");
    Tensor w(set.window_len, 3);
    for (std::size_t r = 0; r < set.window_len; ++r) {
        const sim::SystemState& st = set.stream.states[start + r];
        w(r, 0) = st.h1;
        w(r, 1) = st.h2;
        w(r, 2) = st.h3;
    }
    set.scaler.apply(w);
    Tensor out(1, set.window_len * 3);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[i];
    return out;
}

ConceptLabeledSet gen_concept_set(const ConceptGenConfig& cfg) {
    cfg.ranges.validate();
    if (cfg.count < 1) throw DomainError("series count must be >= 1");
    if (cfg.window_len < 2) throw DomainError("window length must be >= 2");

    ConceptLabeledSet set;
    set.dt = cfg.dt;
    set.seed = cfg.seed;
    set.concepts = Tensor(cfg.count, 4);
    set.windows.reserve(cfg.count);
    std::uint64_t stream_seed = derive_seed(cfg.seed, kTagSeries);
    for (std::size_t i = 0; i < cfg.count; ++i) {
        std::mt19937_64 rng = make_rng(derive_seed(stream_seed, i));
        std::array<double, 4> c;
        for (std::size_t k = 0; k < 4; ++k)
            c[k] = uniform_in(rng, cfg.ranges.bounds[k].first, cfg.ranges.bounds[k].second);
        for (std::size_t k = 0; k < 4; ++k) set.concepts(i, k) = c[k];
        set.windows.push_back(
            simulate_window(cfg.x0, params_from_concepts(c, cfg.kv3, cfg.C), cfg.dt,
                            cfg.window_len));
    }
    auto [train, eval] = split_indices(cfg.count, cfg.train_fraction, cfg.seed);
    set.train_idx = std::move(train);
    set.eval_idx = std::move(eval);
    set.scaler = fit_window_channels(set.windows, set.train_idx);
    return set;
}

namespace {

double drain_time(const sim::SystemState& h0, const sim::TankParams& p, double dt, double eps,
                  long budget) {
    sim::SystemState h = h0;
    for (long step = 0; step < budget; ++step) {
        if (h.h1 + h.h2 + h.h3 < eps) return dt * static_cast<double>(step);
        h = sim::rk4_step(h, p, dt);
    }
    throw DomainError("drain simulation exceeded its step budget (degenerate parameters?)");
}

}  // namespace

QASet gen_qa_set(const QaGenConfig& cfg) {
    if (cfg.base.ranges.bounds[0].first <= 0.0 || cfg.base.ranges.bounds[1].first <= 0.0)
        throw DomainError("fill-time answers need strictly positive pump ranges");
    QASet set;
    set.base = gen_concept_set(cfg.base);
    std::size_t n = set.base.windows.size();
    set.answers = Tensor(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
        double q1 = set.base.concepts(i, 0);
        double q3 = set.base.concepts(i, 1);
        sim::TankParams drain;
        drain.kv12 = set.base.concepts(i, 2);
        drain.kv23 = set.base.concepts(i, 3);
        drain.kv3 = cfg.drain_kv3;
        drain.C = cfg.base.C;
        set.answers(i, 0) = cfg.base.C * cfg.h_max / q1;
        set.answers(i, 1) = cfg.base.C * cfg.h_max / q3;
        set.answers(i, 2) = drain_time({cfg.h_max, 0.0, 0.0}, drain, cfg.drain_dt, cfg.drain_eps,
                                       cfg.drain_budget);
        set.answers(i, 3) = drain_time({0.0, cfg.h_max, 0.0}, drain, cfg.drain_dt, cfg.drain_eps,
                                       cfg.drain_budget);
    }
    Tensor train_answers(set.base.train_idx.size(), 4);
    for (std::size_t r = 0; r < set.base.train_idx.size(); ++r)
        for (std::size_t k = 0; k < 4; ++k)
            train_answers(r, k) = set.answers(set.base.train_idx[r], k);
    set.answer_scaler = Scaler::fit(train_answers);
    return set;
}

SindySet gen_sindy_set(const SindyGenConfig& cfg) {
    if (cfg.num_ic < 1 || cfg.steps < 1) throw DomainError("need at least one trajectory and step");
    if (cfg.ic_box.first > cfg.ic_box.second) throw DomainError("bad initial-condition box");
    SindySet set;
    set.dt = cfg.dt;
    set.seed = cfg.seed;
    set.params.q1 = 0.0;
    set.params.q3 = 0.0;
    set.params.kv12 = cfg.kv12;
    set.params.kv23 = cfg.kv23;
    set.params.kv3 = cfg.kv3;
    std::size_t rows = cfg.num_ic * static_cast<std::size_t>(cfg.steps);
    set.x = Tensor(rows, 3);
    set.xdot = Tensor(rows, 3);
    set.series.resize(rows);

    std::uint64_t stream_seed = derive_seed(cfg.seed, kTagSeries);
    std::size_t r = 0;
    for (std::size_t ic = 0; ic < cfg.num_ic; ++ic) {
        std::mt19937_64 rng = make_rng(derive_seed(stream_seed, ic));
        sim::SystemState x0{uniform_in(rng, cfg.ic_box.first, cfg.ic_box.second),
                            uniform_in(rng, cfg.ic_box.first, cfg.ic_box.second),
                            uniform_in(rng, cfg.ic_box.first, cfg.ic_box.second)};
        sim::Trajectory traj = sim::simulate(x0, set.params, cfg.dt, cfg.steps);
        Tensor numeric;
        if (cfg.numerical_derivatives) numeric = numerical_derivative(traj);
        for (long t = 0; t < cfg.steps; ++t, ++r) {
            const sim::SystemState& s = traj.states[t];
            set.x(r, 0) = s.h1;
            set.x(r, 1) = s.h2;
            set.x(r, 2) = s.h3;
            if (cfg.numerical_derivatives) {
                for (std::size_t j = 0; j < 3; ++j) set.xdot(r, j) = numeric(t, j);
            } else {
                sim::StateDerivative d = sim::derivatives(s, set.params);
                for (std::size_t j = 0; j < 3; ++j) set.xdot(r, j) = d[j];
            }
            set.series[r] = static_cast<int>(ic);
        }
    }
    return set;
}

const std::vector<std::array<int, 3>>& lift_exponents() {
    static const std::vector<std::array<int, 3>> table = [] {
        std::vector<std::array<int, 3>> t;
        for (int d = 0; d <= 5; ++d)
            for (int i = d; i >= 0; --i)
                for (int j = d - i; j >= 0; --j) t.push_back({i, j, d - i - j});
        return t;
    }();
    return table;
}

namespace {

// pows[v][e] = z_v^e for e <= 5
void fill_powers(const std::array<double, 3>& z, double pows[3][6]) {
    for (int v = 0; v < 3; ++v) {
        pows[v][0] = 1.0;
        for (int e = 1; e <= 5; ++e) pows[v][e] = pows[v][e - 1] * z[v];
    }
}

}  // namespace

std::vector<double> poly_lift(const std::array<double, 3>& z) {
    double pows[3][6];
    fill_powers(z, pows);
    const auto& exps = lift_exponents();
    std::vector<double> out(exps.size());
    for (std::size_t m = 0; m < exps.size(); ++m)
        out[m] = pows[0][exps[m][0]] * pows[1][exps[m][1]] * pows[2][exps[m][2]];
    return out;
}

std::vector<double> lift_derivative(const std::array<double, 3>& z,
                                    const std::array<double, 3>& zdot) {
    double pows[3][6];
    fill_powers(z, pows);
    const auto& exps = lift_exponents();
    std::vector<double> out(exps.size(), 0.0);
    for (std::size_t m = 0; m < exps.size(); ++m) {
        const auto& e = exps[m];
        double acc = 0.0;
        if (e[0] > 0) acc += e[0] * pows[0][e[0] - 1] * pows[1][e[1]] * pows[2][e[2]] * zdot[0];
        if (e[1] > 0) acc += e[1] * pows[0][e[0]] * pows[1][e[1] - 1] * pows[2][e[2]] * zdot[1];
        if (e[2] > 0) acc += e[2] * pows[0][e[0]] * pows[1][e[1]] * pows[2][e[2] - 1] * zdot[2];
        out[m] = acc;
    }
    return out;
}

LiftedSet lift_dataset(const SindySet& raw) {
    LiftedSet out;
    out.dt = raw.dt;
    out.seed = raw.seed;
    std::size_t n = raw.x.rows();
    out.x = Tensor(n, kLiftDim);
    out.xdot = Tensor(n, kLiftDim);
    out.z_true = raw.x;
    for (std::size_t r = 0; r < n; ++r) {
        std::array<double, 3> z{raw.x(r, 0), raw.x(r, 1), raw.x(r, 2)};
        std::array<double, 3> zd{raw.xdot(r, 0), raw.xdot(r, 1), raw.xdot(r, 2)};
        std::vector<double> lx = poly_lift(z);
        std::vector<double> ld = lift_derivative(z, zd);
        for (std::size_t j = 0; j < kLiftDim; ++j) {
            out.x(r, j) = lx[j];
            out.xdot(r, j) = ld[j];
        }
    }
    return out;
}

Tensor numerical_derivative(const sim::Trajectory& traj) {
    std::size_t n = traj.length();
    if (n < 3) throw DomainError("numerical differentiation needs at least 3 samples");
    Tensor out(n, 3);
    auto level = [&](std::size_t i, std::size_t j) {
        const sim::SystemState& s = traj.states[i];
        return j == 0 ? s.h1 : (j == 1 ? s.h2 : s.h3);
    };
    double inv2dt = 1.0 / (2.0 * traj.dt);
    for (std::size_t j = 0; j < 3; ++j) {
        out(0, j) = (-3.0 * level(0, j) + 4.0 * level(1, j) - level(2, j)) * inv2dt;
        for (std::size_t i = 1; i + 1 < n; ++i)
            out(i, j) = (level(i + 1, j) - level(i - 1, j)) * inv2dt;
        out(n - 1, j) = (3.0 * level(n - 1, j) - 4.0 * level(n - 2, j) + level(n - 3, j)) * inv2dt;
    }
    return out;
}

StateSet gen_state_set(const StateGenConfig& cfg) {
    if (cfg.cycles < 1) throw DomainError("need at least one cycle");
    if (cfg.window_len < 2) throw DomainError("window length must be >= 2");

    sim::TankParams fill;
    fill.q1 = cfg.fill_q;
    fill.q3 = cfg.fill_q;
    sim::TankParams stop;
    sim::TankParams mix;
    mix.kv12 = cfg.mix_kv;
    mix.kv23 = cfg.mix_kv;
    sim::TankParams drain;
    drain.kv12 = cfg.drain_kv;
    drain.kv23 = cfg.drain_kv;
    drain.kv3 = cfg.drain_kv3;

    std::vector<sim::Segment> segments;
    std::vector<Phase> segment_phase;
    for (int c = 0; c < cfg.cycles; ++c) {
        for (int rep = 0; rep < 3; ++rep) {
            segments.push_back({fill, cfg.fill_steps});
            segment_phase.push_back(Phase::Fill);
            segments.push_back({stop, cfg.stop_steps});
            segment_phase.push_back(Phase::Stop);
            segments.push_back({mix, cfg.mix_steps});
            segment_phase.push_back(Phase::Mix);
        }
        segments.push_back({drain, cfg.drain_steps});
        segment_phase.push_back(Phase::Drain);
    }

    StateSet set;
    set.seed = cfg.seed;
    set.window_len = cfg.window_len;
    set.stream = sim::simulate_schedule({0.0, 0.0, 0.0}, segments, cfg.dt);

    std::size_t rows = set.stream.length();
    set.row_phase.resize(rows);
    set.row_phase[0] = segment_phase.front();
    for (std::size_t i = 1; i < rows; ++i)
        set.row_phase[i] = segment_phase[set.stream.segments[i - 1]];

    if (rows < cfg.window_len) throw DomainError("stream shorter than one window");
    std::mt19937_64 rng = make_rng(derive_seed(cfg.seed, kTagWindows));
    std::uniform_int_distribution<std::size_t> start(0, rows - cfg.window_len);
    set.window_starts.resize(cfg.window_count);
    set.window_labels.resize(cfg.window_count);
    for (std::size_t w = 0; w < cfg.window_count; ++w) {
        set.window_starts[w] = start(rng);
        set.window_labels[w] = set.row_phase[set.window_starts[w] + cfg.window_len - 1];
    }

    Tensor stacked(rows, 3);
    for (std::size_t i = 0; i < rows; ++i) {
        stacked(i, 0) = set.stream.states[i].h1;
        stacked(i, 1) = set.stream.states[i].h2;
        stacked(i, 2) = set.stream.states[i].h3;
    }
    set.scaler = Scaler::fit(stacked);
    return set;
}

// --------------------------------------------------------------- persistence

namespace {

void write_manifest(const std::string& dataset_path, nlohmann::json manifest) {
    std::ofstream out(dataset_path + ".manifest.json");
    if (!out) throw IoError("cannot open for writing: " + dataset_path + ".manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + dataset_path + ".manifest.json");
}

}  // namespace

nlohmann::json load_manifest(const std::string& dataset_path) {
    std::string path = dataset_path + ".manifest.json";
    std::ifstream in(path);
    if (!in) throw MissingInputError("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    return j;
}

static const std::vector<std::string> kConceptHeader = {"series_id", "t",  "h1",   "h2",  "h3",
                                                        "q1",        "q3", "kv12", "kv23"};

void save_concept_set(const std::string& path, const ConceptLabeledSet& set,
                      const nlohmann::json& config) {
    io::CsvWriter w(path, kConceptHeader);
    std::vector<double> row(kConceptHeader.size());
    for (std::size_t i = 0; i < set.windows.size(); ++i) {
        const Tensor& v = set.windows[i].values;
        for (std::size_t t = 0; t < v.rows(); ++t) {
            row[0] = static_cast<double>(i);
            row[1] = set.dt * static_cast<double>(t);
            row[2] = v(t, 0);
            row[3] = v(t, 1);
            row[4] = v(t, 2);
            for (std::size_t k = 0; k < 4; ++k) row[5 + k] = set.concepts(i, k);
            w.write(row);
        }
    }
    w.close();
    write_manifest(path, {{"kind", "concept-set"},
                          {"series", set.windows.size()},
                          {"window_len", set.windows.empty() ? 0 : set.windows[0].values.rows()},
                          {"dt", set.dt},
                          {"seed", set.seed},
                          {"train_fraction",
                           static_cast<double>(set.train_idx.size()) /
                               static_cast<double>(set.windows.size())},
                          {"scaler", set.scaler.to_json()},
                          {"config", config}});
}

namespace {

ConceptLabeledSet load_concept_rows(io::CsvReader& reader, const nlohmann::json& manifest,
                                    Tensor* answers) {
    ConceptLabeledSet set;
    set.dt = manifest.at("dt").get<double>();
    set.seed = manifest.at("seed").get<std::uint64_t>();
    auto series = manifest.at("series").get<std::size_t>();
    auto window_len = manifest.at("window_len").get<std::size_t>();
    if (series == 0 || window_len < 2) throw SchemaError("manifest: degenerate dataset shape");

    set.concepts = Tensor(series, 4);
    if (answers) *answers = Tensor(series, 4);
    set.windows.assign(series, Window{});
    std::vector<std::string> fields;
    std::size_t expect_series = 0, expect_t = 0;
    while (reader.next(fields)) {
        auto sid = static_cast<std::size_t>(reader.as_double(fields, 0));
        if (sid != expect_series)
            throw SchemaError("row " + std::to_string(reader.row()) + ": series " +
                              std::to_string(sid) + " out of order");
        Window& w = set.windows[sid];
        if (w.values.rows() == 0) {
            w.values = Tensor(window_len, 3);
            w.dt = set.dt;
            expect_t = 0;
        }
        if (expect_t >= window_len)
            throw SchemaError("row " + std::to_string(reader.row()) + ": series too long");
        for (std::size_t j = 0; j < 3; ++j) w.values(expect_t, j) = reader.as_double(fields, 2 + j);
        for (std::size_t k = 0; k < 4; ++k)
            set.concepts(sid, k) = reader.as_double(fields, 5 + k);
        if (answers)
            for (std::size_t k = 0; k < 4; ++k)
                (*answers)(sid, k) = reader.as_double(fields, 9 + k);
        ++expect_t;
        if (expect_t == window_len) {
            ++expect_series;
        }
    }
    if (expect_series != series)
        throw SchemaError("expected " + std::to_string(series) + " series, found " +
                          std::to_string(expect_series));

    auto [train, eval] = split_indices(series, manifest.at("train_fraction").get<double>(),
                                       set.seed);
    set.train_idx = std::move(train);
    set.eval_idx = std::move(eval);
    set.scaler = Scaler::from_json(manifest.at("scaler"));
    return set;
}

}  // namespace

ConceptLabeledSet load_concept_set(const std::string& path) {
    nlohmann::json manifest = load_manifest(path);
    if (manifest.at("kind") != "concept-set") throw SchemaError(path + ": not a concept-set");
    io::CsvReader reader(path);
    reader.require_header(kConceptHeader);
    return load_concept_rows(reader, manifest, nullptr);
}

static const std::vector<std::string> kQaHeader = {"series_id", "t",    "h1",   "h2", "h3",
                                                   "q1",        "q3",   "kv12", "kv23",
                                                   "a1",        "a2",   "a3",   "a4"};

void save_qa_set(const std::string& path, const QASet& set, const nlohmann::json& config) {
    io::CsvWriter w(path, kQaHeader);
    std::vector<double> row(kQaHeader.size());
    for (std::size_t i = 0; i < set.base.windows.size(); ++i) {
        const Tensor& v = set.base.windows[i].values;
        for (std::size_t t = 0; t < v.rows(); ++t) {
            row[0] = static_cast<double>(i);
            row[1] = set.base.dt * static_cast<double>(t);
            row[2] = v(t, 0);
            row[3] = v(t, 1);
            row[4] = v(t, 2);
            for (std::size_t k = 0; k < 4; ++k) row[5 + k] = set.base.concepts(i, k);
            for (std::size_t k = 0; k < 4; ++k) row[9 + k] = set.answers(i, k);
            w.write(row);
        }
    }
    w.close();
    write_manifest(path,
                   {{"kind", "qa-set"},
                    {"series", set.base.windows.size()},
                    {"window_len",
                     set.base.windows.empty() ? 0 : set.base.windows[0].values.rows()},
                    {"dt", set.base.dt},
                    {"seed", set.base.seed},
                    {"train_fraction",
                     static_cast<double>(set.base.train_idx.size()) /
                         static_cast<double>(set.base.windows.size())},
                    {"scaler", set.base.scaler.to_json()},
                    {"answer_scaler", set.answer_scaler.to_json()},
                    {"config", config}});
}

QASet load_qa_set(const std::string& path) {
    nlohmann::json manifest = load_manifest(path);
    if (manifest.at("kind") != "qa-set") throw SchemaError(path + ": not a qa-set");
    io::CsvReader reader(path);
    reader.require_header(kQaHeader);
    QASet set;
    set.base = load_concept_rows(reader, manifest, &set.answers);
    set.answer_scaler = Scaler::from_json(manifest.at("answer_scaler"));
    return set;
}

namespace {

const std::vector<std::string> kSindyHeader = {"h1",  "h2",  "h3",    "dh1",
                                               "dh2", "dh3", "series"};

}  // namespace

void save_sindy_set(const std::string& path, const SindySet& set, const nlohmann::json& config) {
    io::CsvWriter w(path, kSindyHeader);
    for (std::size_t r = 0; r < set.x.rows(); ++r) {
        std::string line;
        for (std::size_t j = 0; j < 3; ++j) {
            line += io::format_g17(set.x(r, j));
            line += ',';
        }
        for (std::size_t j = 0; j < 3; ++j) {
            line += io::format_g17(set.xdot(r, j));
            line += ',';
        }
        line += std::to_string(set.series[r]);
        w.write_raw(line);
    }
    w.close();
    write_manifest(path, {{"kind", "sindy-set"},
                          {"rows", set.x.rows()},
                          {"dt", set.dt},
                          {"seed", set.seed},
                          {"params",
                           {{"q1", set.params.q1},
                            {"q3", set.params.q3},
                            {"kv12", set.params.kv12},
                            {"kv23", set.params.kv23},
                            {"kv3", set.params.kv3},
                            {"C", set.params.C}}},
                          {"config", config}});
}

SindySet load_sindy_set(const std::string& path) {
    nlohmann::json manifest = load_manifest(path);
    if (manifest.at("kind") != "sindy-set") throw SchemaError(path + ": not a sindy-set");
    io::CsvReader reader(path);
    reader.require_header(kSindyHeader);
    SindySet set;
    set.dt = manifest.at("dt").get<double>();
    set.seed = manifest.at("seed").get<std::uint64_t>();
    const nlohmann::json& p = manifest.at("params");
    set.params.q1 = p.at("q1").get<double>();
    set.params.q3 = p.at("q3").get<double>();
    set.params.kv12 = p.at("kv12").get<double>();
    set.params.kv23 = p.at("kv23").get<double>();
    set.params.kv3 = p.at("kv3").get<double>();
    set.params.C = p.at("C").get<double>();
    auto rows = manifest.at("rows").get<std::size_t>();
    set.x = Tensor(rows, 3);
    set.xdot = Tensor(rows, 3);
    set.series.resize(rows);
    std::vector<std::string> fields;
    std::size_t r = 0;
    while (reader.next(fields)) {
        if (r >= rows) throw SchemaError(path + ": more rows than manifest declares");
        for (std::size_t j = 0; j < 3; ++j) set.x(r, j) = reader.as_double(fields, j);
        for (std::size_t j = 0; j < 3; ++j) set.xdot(r, j) = reader.as_double(fields, 3 + j);
        set.series[r] = static_cast<int>(reader.as_double(fields, 6));
        ++r;
    }
    if (r != rows)
        throw SchemaError(path + ": expected " + std::to_string(rows) + " rows, found " +
                          std::to_string(r));
    return set;
}

namespace {

std::vector<std::string> lifted_header() {
    std::vector<std::string> h;
    for (std::size_t j = 0; j < kLiftDim; ++j) h.push_back("x" + std::to_string(j));
    for (std::size_t j = 0; j < kLiftDim; ++j) h.push_back("xdot" + std::to_string(j));
    h.push_back("z1");
    h.push_back("z2");
    h.push_back("z3");
    return h;
}

}  // namespace

void save_lifted_set(const std::string& path, const LiftedSet& set, const nlohmann::json& config) {
    io::CsvWriter w(path, lifted_header());
    std::vector<double> row(2 * kLiftDim + 3);
    for (std::size_t r = 0; r < set.x.rows(); ++r) {
        for (std::size_t j = 0; j < kLiftDim; ++j) row[j] = set.x(r, j);
        for (std::size_t j = 0; j < kLiftDim; ++j) row[kLiftDim + j] = set.xdot(r, j);
        for (std::size_t j = 0; j < 3; ++j) row[2 * kLiftDim + j] = set.z_true(r, j);
        w.write(row);
    }
    w.close();
    write_manifest(path, {{"kind", "lifted-set"},
                          {"rows", set.x.rows()},
                          {"dt", set.dt},
                          {"seed", set.seed},
                          {"config", config}});
}

LiftedSet load_lifted_set(const std::string& path) {
    nlohmann::json manifest = load_manifest(path);
    if (manifest.at("kind") != "lifted-set") throw SchemaError(path + ": not a lifted-set");
    io::CsvReader reader(path);
    reader.require_header(lifted_header());
    LiftedSet set;
    set.dt = manifest.at("dt").get<double>();
    set.seed = manifest.at("seed").get<std::uint64_t>();
    auto rows = manifest.at("rows").get<std::size_t>();
    set.x = Tensor(rows, kLiftDim);
    set.xdot = Tensor(rows, kLiftDim);
    set.z_true = Tensor(rows, 3);
    std::vector<std::string> fields;
    std::size_t r = 0;
    while (reader.next(fields)) {
        if (r >= rows) throw SchemaError(path + ": more rows than manifest declares");
        for (std::size_t j = 0; j < kLiftDim; ++j) set.x(r, j) = reader.as_double(fields, j);
        for (std::size_t j = 0; j < kLiftDim; ++j)
            set.xdot(r, j) = reader.as_double(fields, kLiftDim + j);
        for (std::size_t j = 0; j < 3; ++j)
            set.z_true(r, j) = reader.as_double(fields, 2 * kLiftDim + j);
        ++r;
    }
    if (r != rows)
        throw SchemaError(path + ": expected " + std::to_string(rows) + " rows, found " +
                          std::to_string(r));
    return set;
}

static const std::vector<std::string> kStateHeader = {"t", "h1", "h2", "h3", "segment", "phase"};

void save_state_set(const std::string& path, const StateSet& set, const nlohmann::json& config) {
    io::CsvWriter w(path, kStateHeader);
    for (std::size_t i = 0; i < set.stream.length(); ++i) {
        const sim::SystemState& s = set.stream.states[i];
        int seg = i == 0 ? set.stream.segments.front() : set.stream.segments[i - 1];
        std::string line = io::format_g17(set.stream.dt * static_cast<double>(i));
        line += ',';
        line += io::format_g17(s.h1);
        line += ',';
        line += io::format_g17(s.h2);
        line += ',';
        line += io::format_g17(s.h3);
        line += ',';
        line += std::to_string(seg);
        line += ',';
        line += phase_name(set.row_phase[i]);
        w.write_raw(line);
    }
    w.close();
    write_manifest(path, {{"kind", "state-set"},
                          {"rows", set.stream.length()},
                          {"dt", set.stream.dt},
                          {"seed", set.seed},
                          {"window_len", set.window_len},
                          {"window_count", set.window_starts.size()},
                          {"scaler", set.scaler.to_json()},
                          {"config", config}});
}

StateSet load_state_set(const std::string& path) {
    nlohmann::json manifest = load_manifest(path);
    if (manifest.at("kind") != "state-set") throw SchemaError(path + ": not a state-set");
    io::CsvReader reader(path);
    reader.require_header(kStateHeader);
    StateSet set;
    set.seed = manifest.at("seed").get<std::uint64_t>();
    set.window_len = manifest.at("window_len").get<std::size_t>();
    auto rows = manifest.at("rows").get<std::size_t>();
    auto window_count = manifest.at("window_count").get<std::size_t>();
    set.stream.dt = manifest.at("dt").get<double>();
    set.stream.states.reserve(rows);
    set.stream.segments.reserve(rows > 0 ? rows - 1 : 0);
    set.row_phase.reserve(rows);
    std::vector<std::string> fields;
    while (reader.next(fields)) {
        sim::SystemState s{reader.as_double(fields, 1), reader.as_double(fields, 2),
                           reader.as_double(fields, 3)};
        set.stream.states.push_back(s);
        int seg = static_cast<int>(reader.as_double(fields, 4));
        if (set.stream.states.size() > 1) set.stream.segments.push_back(seg);
        set.row_phase.push_back(phase_from_name(fields[5]));
    }
    if (set.stream.length() != rows)
        throw SchemaError(path + ": expected " + std::to_string(rows) + " rows, found " +
                          std::to_string(set.stream.length()));

    std::mt19937_64 rng = make_rng(derive_seed(set.seed, kTagWindows));
    std::uniform_int_distribution<std::size_t> start(0, rows - set.window_len);
    set.window_starts.resize(window_count);
    set.window_labels.resize(window_count);
    for (std::size_t w = 0; w < window_count; ++w) {
        set.window_starts[w] = start(rng);
        set.window_labels[w] = set.row_phase[set.window_starts[w] + set.window_len - 1];
    }
    set.scaler = Scaler::from_json(manifest.at("scaler"));
    return set;
}

}  // namespace tanklab::data
