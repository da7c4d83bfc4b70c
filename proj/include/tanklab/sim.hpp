#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tanklab/errors.hpp"

namespace tanklab::sim {

/// Physical parameters of the three-tank system: pump inflows q1/q3, the
/// coupling valve coefficients kv12/kv23, the outlet valve kv3 and the
/// cross-section constant C.
struct TankParams {
    double q1 = 0.0;
    double q3 = 0.0;
    double kv12 = 0.0;
    double kv23 = 0.0;
    double kv3 = 0.0;
    double C = 1.0;

    void validate() const;
};

/// Fill levels of the three tanks; nonnegative after every integration step.
struct SystemState {
    double h1 = 0.0;
    double h2 = 0.0;
    double h3 = 0.0;

    std::array<double, 3> to_array() const { return {h1, h2, h3}; }
    static SystemState from_array(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }
};

using StateDerivative = std::array<double, 3>;

/// Uniform-grid trajectory. `segments`, when nonempty, labels each step with
/// the index of the schedule segment that produced it (size = states-1).
struct Trajectory {
    double dt = 0.0;
    std::vector<SystemState> states;
    TankParams params;
    std::vector<int> segments;

    std::size_t length() const { return states.size(); }
};

/// Defaults the reference runs use for everything the tank description
/// leaves open; all overridable through configuration.
inline constexpr double kDefaultC = 1.0;
inline constexpr double kDefaultKv3 = 0.2;
inline constexpr double kDefaultDt = 0.5;
inline constexpr double kTankCapacity = 100.0;

/// sign with sign(0) = 0, so equal levels produce zero flow.
inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// sign(x) * sqrt(|x|), the Torricelli-style valve flow shape.
inline double signed_sqrt(double x) { return sign(x) * std::sqrt(std::fabs(x)); }

/// Right-hand side of the tank dynamics. The inter-tank terms enter the two
/// coupled equations with opposite signs, so a closed system conserves
/// volume exactly; h3 is clamped at zero before the outlet sqrt.
StateDerivative derivatives(const SystemState& state, const TankParams& params);

/// One classical RK4 step; the result is clamped to nonnegative levels.
SystemState rk4_step(const SystemState& state, const TankParams& params, double dt);

/// Fixed-step trajectory of length steps+1 starting at x0.
Trajectory simulate(const SystemState& x0, const TankParams& params, double dt, long steps);

/// Piecewise-constant parameter schedule; each segment starts from the final
/// state of the previous one and per-step segment labels are retained.
struct Segment {
    TankParams params;
    long steps = 0;
};
Trajectory simulate_schedule(const SystemState& x0, const std::vector<Segment>& segments,
                             double dt);

/// Generic fixed-step RK4 on a vector field, shared with the identified-model
/// re-simulation. Throws IntegrationError when a state stops being finite or
/// its max-norm exceeds escape_bound.
using VectorField = std::function<std::vector<double>(const std::vector<double>&)>;
std::vector<std::vector<double>> integrate_rk4(const VectorField& f, std::vector<double> x0,
                                               double dt, long steps,
                                               double escape_bound = 1e6);

/// CSV export: header `t,h1,h2,h3[,segment]`, 17 significant digits.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace tanklab::sim
