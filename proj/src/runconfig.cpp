#include "tanklab/runconfig.hpp"

#include <fstream>

#include "tanklab/errors.hpp"

namespace tanklab::cli {

namespace {

[[noreturn]] void bad(const std::string& ctx, const std::string& why) {
    throw ConfigError(ctx + ": " + why);
}

double num(const nlohmann::json& j, const std::string& ctx) {
    if (!j.is_number()) bad(ctx, "expected a number");
    return j.get<double>();
}

std::uint64_t uns(const nlohmann::json& j, const std::string& ctx) {
    if (!j.is_number_unsigned()) bad(ctx, "expected a nonnegative integer");
    return j.get<std::uint64_t>();
}

long integer(const nlohmann::json& j, const std::string& ctx) {
    if (!j.is_number_integer()) bad(ctx, "expected an integer");
    return j.get<long>();
}

bool boolean(const nlohmann::json& j, const std::string& ctx) {
    if (!j.is_boolean()) bad(ctx, "expected a boolean");
    return j.get<bool>();
}

// ------------------------------------------------- data section serializers

nlohmann::json concept_gen_to_json(const data::ConceptGenConfig& c) {
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& [lo, hi] : c.ranges.bounds) ranges.push_back({lo, hi});
    return {{"count", c.count},
            {"window_len", c.window_len},
            {"dt", c.dt},
            {"ranges", ranges},
            {"kv3", c.kv3},
            {"C", c.C},
            {"x0", {c.x0.h1, c.x0.h2, c.x0.h3}},
            {"train_fraction", c.train_fraction}};
}

data::ConceptGenConfig concept_gen_from_json(const nlohmann::json& j, const std::string& ctx) {
    data::ConceptGenConfig c;
    c.count = uns(j.at("count"), ctx + ".count");
    c.window_len = uns(j.at("window_len"), ctx + ".window_len");
    c.dt = num(j.at("dt"), ctx + ".dt");
    const nlohmann::json& ranges = j.at("ranges");
    if (!ranges.is_array() || ranges.size() != 4) bad(ctx + ".ranges", "expected 4 [lo, hi] pairs");
    for (std::size_t i = 0; i < 4; ++i) {
        if (!ranges[i].is_array() || ranges[i].size() != 2)
            bad(ctx + ".ranges", "expected 4 [lo, hi] pairs");
        c.ranges.bounds[i] = {num(ranges[i][0], ctx + ".ranges"), num(ranges[i][1], ctx + ".ranges")};
    }
    c.kv3 = num(j.at("kv3"), ctx + ".kv3");
    c.C = num(j.at("C"), ctx + ".C");
    const nlohmann::json& x0 = j.at("x0");
    if (!x0.is_array() || x0.size() != 3) bad(ctx + ".x0", "expected 3 levels");
    c.x0 = {num(x0[0], ctx + ".x0"), num(x0[1], ctx + ".x0"), num(x0[2], ctx + ".x0")};
    c.train_fraction = num(j.at("train_fraction"), ctx + ".train_fraction");
    if (c.count == 0) bad(ctx + ".count", "must be positive");
    if (c.window_len < 2) bad(ctx + ".window_len", "must be at least 2");
    if (!(c.dt > 0.0)) bad(ctx + ".dt", "must be positive");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
        bad(ctx + ".train_fraction", "must lie in (0, 1)");
    try {
        c.ranges.validate();
    } catch (const Error& e) {
        bad(ctx + ".ranges", e.what());
    }
    return c;
}

nlohmann::json qa_gen_to_json(const data::QaGenConfig& c) {
    return {{"base", concept_gen_to_json(c.base)}, {"h_max", c.h_max},
            {"drain_kv3", c.drain_kv3},            {"drain_dt", c.drain_dt},
            {"drain_eps", c.drain_eps},            {"drain_budget", c.drain_budget}};
}

data::QaGenConfig qa_gen_from_json(const nlohmann::json& j, const std::string& ctx) {
    data::QaGenConfig c;
    c.base = concept_gen_from_json(j.at("base"), ctx + ".base");
    c.h_max = num(j.at("h_max"), ctx + ".h_max");
    c.drain_kv3 = num(j.at("drain_kv3"), ctx + ".drain_kv3");
    c.drain_dt = num(j.at("drain_dt"), ctx + ".drain_dt");
    c.drain_eps = num(j.at("drain_eps"), ctx + ".drain_eps");
    c.drain_budget = integer(j.at("drain_budget"), ctx + ".drain_budget");
    if (!(c.h_max > 0.0)) bad(ctx + ".h_max", "must be positive");
    if (!(c.drain_dt > 0.0)) bad(ctx + ".drain_dt", "must be positive");
    if (!(c.drain_eps > 0.0)) bad(ctx + ".drain_eps", "must be positive");
    if (c.drain_budget <= 0) bad(ctx + ".drain_budget", "must be positive");
    return c;
}

nlohmann::json sindy_gen_to_json(const data::SindyGenConfig& c) {
    return {{"num_ic", c.num_ic},
            {"steps", c.steps},
            {"dt", c.dt},
            {"kv12", c.kv12},
            {"kv23", c.kv23},
            {"kv3", c.kv3},
            {"ic_box", {c.ic_box.first, c.ic_box.second}},
            {"numerical_derivatives", c.numerical_derivatives}};
}

data::SindyGenConfig sindy_gen_from_json(const nlohmann::json& j, const std::string& ctx) {
    data::SindyGenConfig c;
    c.num_ic = uns(j.at("num_ic"), ctx + ".num_ic");
    c.steps = integer(j.at("steps"), ctx + ".steps");
    c.dt = num(j.at("dt"), ctx + ".dt");
    c.kv12 = num(j.at("kv12"), ctx + ".kv12");
    c.kv23 = num(j.at("kv23"), ctx + ".kv23");
    c.kv3 = num(j.at("kv3"), ctx + ".kv3");
    const nlohmann::json& box = j.at("ic_box");
    if (!box.is_array() || box.size() != 2) bad(ctx + ".ic_box", "expected [lo, hi]");
    c.ic_box = {num(box[0], ctx + ".ic_box"), num(box[1], ctx + ".ic_box")};
    c.numerical_derivatives = boolean(j.at("numerical_derivatives"), ctx + ".numerical_derivatives");
    if (c.num_ic == 0) bad(ctx + ".num_ic", "must be positive");
    if (c.steps < 2) bad(ctx + ".steps", "must be at least 2");
    if (!(c.dt > 0.0)) bad(ctx + ".dt", "must be positive");
    if (!(c.ic_box.first < c.ic_box.second)) bad(ctx + ".ic_box", "needs lo < hi");
    return c;
}

nlohmann::json state_gen_to_json(const data::StateGenConfig& c) {
    return {{"cycles", c.cycles},
            {"window_count", c.window_count},
            {"window_len", c.window_len},
            {"dt", c.dt},
            {"fill_steps", c.fill_steps},
            {"stop_steps", c.stop_steps},
            {"mix_steps", c.mix_steps},
            {"drain_steps", c.drain_steps},
            {"fill_q", c.fill_q},
            {"mix_kv", c.mix_kv},
            {"drain_kv", c.drain_kv},
            {"drain_kv3", c.drain_kv3}};
}

data::StateGenConfig state_gen_from_json(const nlohmann::json& j, const std::string& ctx) {
    data::StateGenConfig c;
    c.cycles = static_cast<int>(integer(j.at("cycles"), ctx + ".cycles"));
    c.window_count = uns(j.at("window_count"), ctx + ".window_count");
    c.window_len = uns(j.at("window_len"), ctx + ".window_len");
    c.dt = num(j.at("dt"), ctx + ".dt");
    c.fill_steps = integer(j.at("fill_steps"), ctx + ".fill_steps");
    c.stop_steps = integer(j.at("stop_steps"), ctx + ".stop_steps");
    c.mix_steps = integer(j.at("mix_steps"), ctx + ".mix_steps");
    c.drain_steps = integer(j.at("drain_steps"), ctx + ".drain_steps");
    c.fill_q = num(j.at("fill_q"), ctx + ".fill_q");
    c.mix_kv = num(j.at("mix_kv"), ctx + ".mix_kv");
    c.drain_kv = num(j.at("drain_kv"), ctx + ".drain_kv");
    c.drain_kv3 = num(j.at("drain_kv3"), ctx + ".drain_kv3");
    if (c.cycles <= 0) bad(ctx + ".cycles", "must be positive");
    if (c.window_count == 0) bad(ctx + ".window_count", "must be positive");
    if (c.window_len == 0) bad(ctx + ".window_len", "must be positive");
    if (!(c.dt > 0.0)) bad(ctx + ".dt", "must be positive");
    if (c.fill_steps <= 0 || c.stop_steps <= 0 || c.mix_steps <= 0 || c.drain_steps <= 0)
        bad(ctx, "every phase needs a positive step count");
    return c;
}

// ----------------------------------------------------- strict section merge

/// Overlays `given` onto `defaults`, recursing into nested objects. Unknown
/// keys, section-level seeds, and type-category changes are rejected, so a
/// typo never silently falls back to a default.
nlohmann::json merge_section(const nlohmann::json& defaults, const nlohmann::json& given,
                             const std::string& ctx) {
    if (!given.is_object()) bad(ctx, "expected an object");
    nlohmann::json out = defaults;
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string key = it.key();
        const std::string where = ctx + "." + key;
        if (key == "seed") bad(where, "the seed is set at the top level");
        if (!defaults.contains(key)) bad(where, "unknown key");
        const nlohmann::json& dv = defaults.at(key);
        const nlohmann::json& gv = it.value();
        if (dv.is_object()) {
            out[key] = merge_section(dv, gv, where);
            continue;
        }
        const bool same_kind = (dv.is_boolean() && gv.is_boolean()) ||
                               (dv.is_string() && gv.is_string()) ||
                               (dv.is_array() && gv.is_array()) ||
                               (dv.is_number() && gv.is_number());
        if (!same_kind) bad(where, "type mismatch");
        out[key] = gv;
    }
    return out;
}

nlohmann::json data_defaults(Experiment e) {
    switch (e) {
        case Experiment::Bvae: return concept_gen_to_json(data::ConceptGenConfig{});
        case Experiment::Agents: return qa_gen_to_json(data::QaGenConfig{});
        case Experiment::Sindy:
        case Experiment::AESindy: return sindy_gen_to_json(data::SindyGenConfig{});
        case Experiment::SomVae: return state_gen_to_json(data::StateGenConfig{});
    }
    throw StateError("data_defaults: unhandled experiment");
}

nlohmann::json train_defaults(Experiment e) {
    nlohmann::json j;
    switch (e) {
        case Experiment::Sindy: return SindyFitConfig{}.to_json();
        case Experiment::Bvae: j = bvae::BvaeConfig{}.to_json(); break;
        case Experiment::Agents: j = agents::AgentsConfig{}.to_json(); break;
        case Experiment::AESindy: j = aesindy::AESindyConfig{}.to_json(); break;
        case Experiment::SomVae: j = somvae::SomVaeConfig{}.to_json(); break;
    }
    j.erase("seed");
    return j;
}

/// Parses the merged section through its owning typed config (which applies
/// its own validation) and re-serializes, so the stored copy is canonical.
nlohmann::json canonical_section(Experiment e, const char* which, const nlohmann::json& merged,
                                 const std::string& ctx) {
    try {
        if (std::string(which) == "data") {
            switch (e) {
                case Experiment::Bvae: return concept_gen_to_json(concept_gen_from_json(merged, ctx));
                case Experiment::Agents: return qa_gen_to_json(qa_gen_from_json(merged, ctx));
                case Experiment::Sindy:
                case Experiment::AESindy:
                    return sindy_gen_to_json(sindy_gen_from_json(merged, ctx));
                case Experiment::SomVae: return state_gen_to_json(state_gen_from_json(merged, ctx));
            }
            throw StateError("canonical_section: unhandled experiment");
        }
        nlohmann::json withseed = merged;
        withseed["seed"] = 0;
        nlohmann::json out;
        switch (e) {
            case Experiment::Sindy: {
                SindyFitConfig c = SindyFitConfig::from_json(merged);
                c.validate();
                return c.to_json();
            }
            case Experiment::Bvae: {
                auto c = bvae::BvaeConfig::from_json(withseed);
                c.validate();
                out = c.to_json();
                break;
            }
            case Experiment::Agents: {
                auto c = agents::AgentsConfig::from_json(withseed);
                c.validate();
                out = c.to_json();
                break;
            }
            case Experiment::AESindy: {
                auto c = aesindy::AESindyConfig::from_json(withseed);
                c.validate();
                out = c.to_json();
                break;
            }
            case Experiment::SomVae: {
                auto c = somvae::SomVaeConfig::from_json(withseed);
                c.validate();
                out = c.to_json();
                break;
            }
        }
        out.erase("seed");
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        bad(ctx, e.what());
    } catch (const nlohmann::json::exception& e) {
        bad(ctx, e.what());
    }
}

}  // namespace

const char* experiment_name(Experiment e) {
    switch (e) {
        case Experiment::Sindy: return "sindy";
        case Experiment::Bvae: return "bvae";
        case Experiment::Agents: return "agents";
        case Experiment::AESindy: return "aesindy";
        case Experiment::SomVae: return "somvae";
    }
    throw StateError("experiment_name: unhandled experiment");
}

Experiment experiment_from_name(const std::string& name) {
    if (name == "sindy") return Experiment::Sindy;
    if (name == "bvae") return Experiment::Bvae;
    if (name == "agents") return Experiment::Agents;
    if (name == "aesindy") return Experiment::AESindy;
    if (name == "somvae") return Experiment::SomVae;
    throw ConfigError("unknown experiment '" + name +
                      "' (expected sindy, bvae, agents, aesindy, or somvae)");
}

void SindyFitConfig::validate() const {
    if (library.poly_degree < 0) throw ConfigError("sindy fit: poly_degree must be nonnegative");
    if (stlsq.threshold < 0.0) throw ConfigError("sindy fit: threshold must be nonnegative");
    if (stlsq.iterations < 1) throw ConfigError("sindy fit: iterations must be positive");
    if (stlsq.ridge < 0.0) throw ConfigError("sindy fit: ridge must be nonnegative");
}

nlohmann::json SindyFitConfig::to_json() const {
    return {{"poly_degree", library.poly_degree},
            {"trig", library.trig},
            {"pairwise_signed_sqrt", library.pairwise_signed_sqrt},
            {"unary_signed_sqrt", library.unary_signed_sqrt},
            {"threshold", stlsq.threshold},
            {"iterations", stlsq.iterations},
            {"ridge", stlsq.ridge}};
}

SindyFitConfig SindyFitConfig::from_json(const nlohmann::json& j) {
    SindyFitConfig c;
    c.library.poly_degree = static_cast<int>(integer(j.at("poly_degree"), "train.poly_degree"));
    c.library.trig = boolean(j.at("trig"), "train.trig");
    c.library.pairwise_signed_sqrt =
        boolean(j.at("pairwise_signed_sqrt"), "train.pairwise_signed_sqrt");
    c.library.unary_signed_sqrt = boolean(j.at("unary_signed_sqrt"), "train.unary_signed_sqrt");
    c.stlsq.threshold = num(j.at("threshold"), "train.threshold");
    c.stlsq.iterations = static_cast<int>(integer(j.at("iterations"), "train.iterations"));
    c.stlsq.ridge = num(j.at("ridge"), "train.ridge");
    return c;
}

void SimulateConfig::validate() const {
    try {
        params.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("simulate.params: ") + e.what());
    }
    if (!(dt > 0.0)) throw ConfigError("simulate.dt: must be positive");
    if (steps <= 0) throw ConfigError("simulate.steps: must be positive");
    if (x0.h1 < 0.0 || x0.h2 < 0.0 || x0.h3 < 0.0)
        throw ConfigError("simulate.x0: levels must be nonnegative");
}

nlohmann::json SimulateConfig::to_json() const {
    return {{"x0", {x0.h1, x0.h2, x0.h3}},
            {"params",
             {{"q1", params.q1},
              {"q3", params.q3},
              {"kv12", params.kv12},
              {"kv23", params.kv23},
              {"kv3", params.kv3},
              {"C", params.C}}},
            {"dt", dt},
            {"steps", steps}};
}

SimulateConfig SimulateConfig::from_json(const nlohmann::json& j) {
    SimulateConfig c;
    const nlohmann::json& x0 = j.at("x0");
    if (!x0.is_array() || x0.size() != 3) bad("simulate.x0", "expected 3 levels");
    c.x0 = {num(x0[0], "simulate.x0"), num(x0[1], "simulate.x0"), num(x0[2], "simulate.x0")};
    const nlohmann::json& p = j.at("params");
    c.params.q1 = num(p.at("q1"), "simulate.params.q1");
    c.params.q3 = num(p.at("q3"), "simulate.params.q3");
    c.params.kv12 = num(p.at("kv12"), "simulate.params.kv12");
    c.params.kv23 = num(p.at("kv23"), "simulate.params.kv23");
    c.params.kv3 = num(p.at("kv3"), "simulate.params.kv3");
    c.params.C = num(p.at("C"), "simulate.params.C");
    c.dt = num(j.at("dt"), "simulate.dt");
    c.steps = integer(j.at("steps"), "simulate.steps");
    return c;
}

RunConfig RunConfig::defaults(Experiment e) {
    RunConfig c;
    c.experiment = e;
    c.data = data_defaults(e);
    c.train = train_defaults(e);
    c.simulate = SimulateConfig{}.to_json();
    return c;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("run config: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k != "experiment" && k != "seed" && k != "output_dir" && k != "evaluate" &&
            k != "data" && k != "train" && k != "simulate")
            throw ConfigError("run config: unknown key '" + k + "'");
    }
    if (!j.contains("experiment")) throw ConfigError("run config: missing 'experiment'");
    if (!j.at("experiment").is_string()) throw ConfigError("run config: experiment must be a string");

    RunConfig c;
    c.experiment = experiment_from_name(j.at("experiment").get<std::string>());
    if (j.contains("seed")) c.seed = uns(j.at("seed"), "run config.seed");
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string() || j.at("output_dir").get<std::string>().empty())
            throw ConfigError("run config: output_dir must be a nonempty string");
        c.output_dir = j.at("output_dir").get<std::string>();
    }
    if (j.contains("evaluate")) {
        const nlohmann::json& ev = j.at("evaluate");
        if (!ev.is_object()) throw ConfigError("run config: evaluate must be an object");
        for (auto it = ev.begin(); it != ev.end(); ++it)
            if (it.key() != "seeds")
                throw ConfigError("run config: evaluate." + it.key() + ": unknown key");
        if (ev.contains("seeds")) c.eval_seeds = uns(ev.at("seeds"), "run config.evaluate.seeds");
        if (c.eval_seeds < 1 || c.eval_seeds > 100)
            throw ConfigError("run config: evaluate.seeds must lie in [1, 100]");
    }

    const nlohmann::json empty = nlohmann::json::object();
    c.data = canonical_section(c.experiment, "data",
                               merge_section(data_defaults(c.experiment),
                                             j.contains("data") ? j.at("data") : empty, "data"),
                               "data");
    c.train = canonical_section(c.experiment, "train",
                                merge_section(train_defaults(c.experiment),
                                              j.contains("train") ? j.at("train") : empty, "train"),
                                "train");
    {
        const nlohmann::json merged = merge_section(
            SimulateConfig{}.to_json(), j.contains("simulate") ? j.at("simulate") : empty,
            "simulate");
        try {
            SimulateConfig s = SimulateConfig::from_json(merged);
            s.validate();
            c.simulate = s.to_json();
        } catch (const ConfigError&) {
            throw;
        } catch (const nlohmann::json::exception& e) {
            bad("simulate", e.what());
        }
    }
    return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInputError("config file not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    return {{"experiment", experiment_name(experiment)},
            {"seed", seed},
            {"output_dir", output_dir},
            {"evaluate", {{"seeds", eval_seeds}}},
            {"data", data},
            {"train", train},
            {"simulate", simulate}};
}

namespace {

void require_experiment(Experiment have, Experiment want, const char* accessor) {
    if (have != want)
        throw StateError(std::string(accessor) + ": config belongs to experiment '" +
                         experiment_name(have) + "'");
}

}  // namespace

data::ConceptGenConfig RunConfig::concept_gen() const {
    require_experiment(experiment, Experiment::Bvae, "concept_gen");
    data::ConceptGenConfig c = concept_gen_from_json(data, "data");
    c.seed = seed;
    return c;
}

data::QaGenConfig RunConfig::qa_gen() const {
    require_experiment(experiment, Experiment::Agents, "qa_gen");
    data::QaGenConfig c = qa_gen_from_json(data, "data");
    c.base.seed = seed;
    return c;
}

data::SindyGenConfig RunConfig::sindy_gen() const {
    if (experiment != Experiment::Sindy && experiment != Experiment::AESindy)
        throw StateError("sindy_gen: config belongs to experiment '" +
                         std::string(experiment_name(experiment)) + "'");
    data::SindyGenConfig c = sindy_gen_from_json(data, "data");
    c.seed = seed;
    return c;
}

data::StateGenConfig RunConfig::state_gen() const {
    require_experiment(experiment, Experiment::SomVae, "state_gen");
    data::StateGenConfig c = state_gen_from_json(data, "data");
    c.seed = seed;
    return c;
}

bvae::BvaeConfig RunConfig::bvae_train() const {
    require_experiment(experiment, Experiment::Bvae, "bvae_train");
    nlohmann::json t = train;
    t["seed"] = seed;
    return bvae::BvaeConfig::from_json(t);
}

agents::AgentsConfig RunConfig::agents_train() const {
    require_experiment(experiment, Experiment::Agents, "agents_train");
    nlohmann::json t = train;
    t["seed"] = seed;
    return agents::AgentsConfig::from_json(t);
}

aesindy::AESindyConfig RunConfig::aesindy_train() const {
    require_experiment(experiment, Experiment::AESindy, "aesindy_train");
    nlohmann::json t = train;
    t["seed"] = seed;
    return aesindy::AESindyConfig::from_json(t);
}

somvae::SomVaeConfig RunConfig::somvae_train() const {
    require_experiment(experiment, Experiment::SomVae, "somvae_train");
    nlohmann::json t = train;
    t["seed"] = seed;
    return somvae::SomVaeConfig::from_json(t);
}

SindyFitConfig RunConfig::sindy_train() const {
    require_experiment(experiment, Experiment::Sindy, "sindy_train");
    return SindyFitConfig::from_json(train);
}

SimulateConfig RunConfig::simulate_config() const { return SimulateConfig::from_json(simulate); }

RunConfig RunConfig::with_seed(std::uint64_t s) const {
    RunConfig c = *this;
    c.seed = s;
    return c;
}

}  // namespace tanklab::cli
