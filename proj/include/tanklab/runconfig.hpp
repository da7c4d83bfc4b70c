#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "tanklab/aesindy.hpp"
#include "tanklab/agents.hpp"
#include "tanklab/bvae.hpp"
#include "tanklab/data.hpp"
#include "tanklab/sim.hpp"
#include "tanklab/sindy.hpp"
#include "tanklab/somvae.hpp"

namespace tanklab::cli {

enum class Experiment { Sindy, Bvae, Agents, AESindy, SomVae };

const char* experiment_name(Experiment e);
/// Throws ConfigError on an unknown name.
Experiment experiment_from_name(const std::string& name);

/// Candidate library plus regression options for the sparse-fit experiment.
struct SindyFitConfig {
    sindy::LibrarySpec library;
    sindy::StlsqOptions stlsq;

    void validate() const;
    nlohmann::json to_json() const;
    static SindyFitConfig from_json(const nlohmann::json& j);
};

/// Scenario for the `simulate` subcommand: fixed inputs, fixed valves.
struct SimulateConfig {
    sim::SystemState x0{30.0, 10.0, 90.0};
    sim::TankParams params{0.4, 0.4, 1.0, 1.0, sim::kDefaultKv3, sim::kDefaultC};
    double dt = sim::kDefaultDt;
    long steps = 400;

    void validate() const;
    nlohmann::json to_json() const;
    static SimulateConfig from_json(const nlohmann::json& j);
};

/// One experiment run: which pipeline, its seed, and the three config
/// sections (data generation, training, simulate scenario), each held as a
/// fully materialized JSON object so the provenance copy has zero hidden
/// defaults. Unknown keys anywhere are rejected; section seeds are banned
/// (the top-level seed feeds every stage).
struct RunConfig {
    Experiment experiment = Experiment::Sindy;
    std::uint64_t seed = 0;
    std::string output_dir = "runs";
    std::size_t eval_seeds = 1;
    nlohmann::json data;
    nlohmann::json train;
    nlohmann::json simulate;

    /// All defaults for the experiment, sections materialized.
    static RunConfig defaults(Experiment e);
    /// Strict parse: schema-validated, defaults merged in, then every
    /// section re-validated by its owning module config.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load_file(const std::string& path);

    /// Complete provenance copy; feeding it back to from_json reproduces
    /// this config exactly.
    nlohmann::json to_json() const;

    /// Typed section accessors; each injects the run seed. Calling an
    /// accessor that does not belong to the experiment throws StateError.
    data::ConceptGenConfig concept_gen() const;
    data::QaGenConfig qa_gen() const;
    data::SindyGenConfig sindy_gen() const;
    data::StateGenConfig state_gen() const;
    bvae::BvaeConfig bvae_train() const;
    agents::AgentsConfig agents_train() const;
    aesindy::AESindyConfig aesindy_train() const;
    somvae::SomVaeConfig somvae_train() const;
    SindyFitConfig sindy_train() const;
    SimulateConfig simulate_config() const;

    /// Same run pointed at a different seed (sections unchanged).
    RunConfig with_seed(std::uint64_t s) const;
};

}  // namespace tanklab::cli
