#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tanklab/sim.hpp"
#include "tanklab/tensor.hpp"

namespace tanklab::data {

using nn::Tensor;

/// One training slice: s consecutive sensor rows at a fixed step.
struct Window {
    Tensor values;  // s x 3
    double dt = 0.0;
};

inline constexpr std::array<const char*, 4> kConceptNames = {"q1", "q3", "kv12", "kv23"};

/// Per-concept uniform sampling intervals, ordered as kConceptNames.
struct ConceptRanges {
    std::array<std::pair<double, double>, 4> bounds{
        {{0.5, 2.5}, {0.5, 2.5}, {0.3, 1.5}, {0.3, 1.5}}};

    void validate() const;
};

/// Column-wise affine normalization fitted on training rows. A constant
/// column gets stdev 1 so applying the scaler maps it to zero.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> stdev;

    static Scaler fit(const Tensor& rows);
    void apply(Tensor& rows) const;
    void invert(Tensor& rows) const;
    nlohmann::json to_json() const;
    static Scaler from_json(const nlohmann::json& j);
};

/// Windows labeled with the generating physical concepts.
struct ConceptLabeledSet {
    std::vector<Window> windows;
    Tensor concepts;  // N x 4, kConceptNames order
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> eval_idx;
    Scaler scaler;  // per-channel, fitted on training windows
    double dt = 0.0;
    std::uint64_t seed = 0;
};

/// Concept set plus the four question answers per series.
struct QASet {
    ConceptLabeledSet base;
    Tensor answers;  // N x 4 in raw time units
    Scaler answer_scaler;
};

/// Flat (state, derivative) sample rows from many short trajectories.
struct SindySet {
    Tensor x;     // N x 3
    Tensor xdot;  // N x 3
    std::vector<int> series;
    double dt = 0.0;
    sim::TankParams params;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kLiftDim = 56;  // monomials of degree <= 5 in 3 vars

/// The same samples observed through the degree-5 polynomial lift.
struct LiftedSet {
    Tensor x;       // N x 56
    Tensor xdot;    // N x 56
    Tensor z_true;  // N x 3
    double dt = 0.0;
    std::uint64_t seed = 0;
};

enum class Phase : int { Fill = 0, Stop = 1, Mix = 2, Drain = 3 };
const char* phase_name(Phase p);
Phase phase_from_name(const std::string& name);

/// Long periodic stream cycling through operating phases, plus sampled
/// training windows (stored as start offsets into the stream).
struct StateSet {
    sim::Trajectory stream;
    std::vector<Phase> row_phase;  // per stream row
    std::vector<std::size_t> window_starts;
    std::size_t window_len = 100;
    std::vector<Phase> window_labels;  // phase at each window's final row
    Scaler scaler;                     // per-channel, fitted on the stream
    std::uint64_t seed = 0;
};

/// Materializes window i of a state set (unscaled).
Window state_window(const StateSet& set, std::size_t i);

// -------------------------------------------------------------- feature prep

/// Row subset of a matrix, in the order of `idx`.
Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& idx);

/// Flattened (row-major) windows for the given indices, standardized per
/// channel with `scaler` first: output is idx.size() x (s*n).
Tensor standardized_features(const std::vector<Window>& windows, const Scaler& scaler,
                             const std::vector<std::size_t>& idx);

/// Same flattening for one stream window starting at `start` (somvae input).
Tensor standardized_stream_window(const StateSet& set, std::size_t start);

// ---------------------------------------------------------------- generators

struct ConceptGenConfig {
    std::size_t count = 10000;
    std::size_t window_len = 50;
    double dt = sim::kDefaultDt;
    ConceptRanges ranges;
    double kv3 = sim::kDefaultKv3;
    double C = sim::kDefaultC;
    sim::SystemState x0{30.0, 10.0, 90.0};
    double train_fraction = 0.9;
    std::uint64_t seed = 0;
};

struct QaGenConfig {
    ConceptGenConfig base;
    double h_max = sim::kTankCapacity;
    // the "all valves open" drain scenario: sampled kv12/kv23 plus a fully
    // open outlet; dt below 0.5 because the clamped integrator can stall
    // just above the stop volume at coarse steps
    double drain_kv3 = 1.0;
    double drain_dt = 0.1;
    double drain_eps = 0.1;
    long drain_budget = 1000000;
};

struct SindyGenConfig {
    std::size_t num_ic = 1000;
    long steps = 50;
    double dt = sim::kDefaultDt;
    double kv12 = 1.0;
    double kv23 = 1.0;
    double kv3 = sim::kDefaultKv3;
    std::pair<double, double> ic_box{10.0, 90.0};
    bool numerical_derivatives = false;
    std::uint64_t seed = 0;
};

struct StateGenConfig {
    int cycles = 100;
    std::size_t window_count = 10000;
    std::size_t window_len = 100;
    double dt = sim::kDefaultDt;
    long fill_steps = 150;
    long stop_steps = 100;
    long mix_steps = 150;
    long drain_steps = 250;
    double fill_q = 0.4;    // both pumps during fill, valves closed
    double mix_kv = 1.0;    // kv12 = kv23 during mix, outlet closed
    double drain_kv = 1.0;  // kv12 = kv23 during drain
    double drain_kv3 = 0.5;
    std::uint64_t seed = 0;
};

ConceptLabeledSet gen_concept_set(const ConceptGenConfig& cfg);
QASet gen_qa_set(const QaGenConfig& cfg);
SindySet gen_sindy_set(const SindyGenConfig& cfg);
LiftedSet lift_dataset(const SindySet& raw);
StateSet gen_state_set(const StateGenConfig& cfg);

/// All monomials of total degree <= 5 in (z1, z2, z3), graded-lex order
/// (degree ascending, within a degree z1-major descending): 1, z1, z2, z3,
/// z1^2, z1z2, z1z3, z2^2, z2z3, z3^2, z1^3, ...
std::vector<double> poly_lift(const std::array<double, 3>& z);

/// Exponent triples in poly_lift order.
const std::vector<std::array<int, 3>>& lift_exponents();

/// Time derivative of each monomial by the product rule.
std::vector<double> lift_derivative(const std::array<double, 3>& z,
                                    const std::array<double, 3>& zdot);

/// Central differences inside, second-order one-sided at the ends.
Tensor numerical_derivative(const sim::Trajectory& traj);

// --------------------------------------------------------------- persistence

/// Each save writes `<path>` plus `<path>.manifest.json` carrying the
/// generating config, seed, and any fitted scalers; loads validate the
/// header and restore from both files.
void save_concept_set(const std::string& path, const ConceptLabeledSet& set,
                      const nlohmann::json& config);
ConceptLabeledSet load_concept_set(const std::string& path);

void save_qa_set(const std::string& path, const QASet& set, const nlohmann::json& config);
QASet load_qa_set(const std::string& path);

void save_sindy_set(const std::string& path, const SindySet& set, const nlohmann::json& config);
SindySet load_sindy_set(const std::string& path);

void save_lifted_set(const std::string& path, const LiftedSet& set, const nlohmann::json& config);
LiftedSet load_lifted_set(const std::string& path);

void save_state_set(const std::string& path, const StateSet& set, const nlohmann::json& config);
StateSet load_state_set(const std::string& path);

nlohmann::json load_manifest(const std::string& dataset_path);

}  // namespace tanklab::data
