#include "tanklab/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tanklab::sim {

void TankParams::validate() const {
    auto check = [](double v, const char* name) {
        if (!std::isfinite(v)) throw DomainError(std::string("non-finite parameter ") + name);
        if (v < 0.0) throw DomainError(std::string("negative parameter ") + name);
    };
    check(q1, "q1");
    check(q3, "q3");
    check(kv12, "kv12");
    check(kv23, "kv23");
    check(kv3, "kv3");
    if (!std::isfinite(C) || C <= 0.0) throw DomainError("cross-section C must be positive");
}

StateDerivative derivatives(const SystemState& state, const TankParams& params) {
    params.validate();
    if (!std::isfinite(state.h1) || !std::isfinite(state.h2) || !std::isfinite(state.h3))
        throw DomainError("non-finite tank state");

    const double f12 = (params.kv12 / params.C) * signed_sqrt(state.h1 - state.h2);
    const double f23 = (params.kv23 / params.C) * signed_sqrt(state.h2 - state.h3);
    const double out3 = params.kv3 * std::sqrt(std::max(state.h3, 0.0));

    return {params.q1 / params.C - f12,
            f12 - f23,
            params.q3 / params.C + f23 - out3};
}

namespace {

SystemState axpy(const SystemState& s, const StateDerivative& d, double a) {
    return {s.h1 + a * d[0], s.h2 + a * d[1], s.h3 + a * d[2]};
}

}  // namespace

SystemState rk4_step(const SystemState& state, const TankParams& params, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("step size must be positive");
    const StateDerivative k1 = derivatives(state, params);
    const StateDerivative k2 = derivatives(axpy(state, k1, 0.5 * dt), params);
    const StateDerivative k3 = derivatives(axpy(state, k2, 0.5 * dt), params);
    const StateDerivative k4 = derivatives(axpy(state, k3, dt), params);

    SystemState next{
        state.h1 + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state.h2 + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        state.h3 + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])};
    next.h1 = std::max(next.h1, 0.0);
    next.h2 = std::max(next.h2, 0.0);
    next.h3 = std::max(next.h3, 0.0);
    return next;
}

Trajectory simulate(const SystemState& x0, const TankParams& params, double dt, long steps) {
    if (steps < 1) throw DomainError("step count must be >= 1");
    Trajectory traj;
    traj.dt = dt;
    traj.params = params;
    traj.states.reserve(static_cast<std::size_t>(steps) + 1);
    traj.states.push_back(x0);
    SystemState cur = x0;
    for (long i = 0; i < steps; ++i) {
        cur = rk4_step(cur, params, dt);
        traj.states.push_back(cur);
    }
    return traj;
}

Trajectory simulate_schedule(const SystemState& x0, const std::vector<Segment>& segments,
                             double dt) {
    if (segments.empty()) throw DomainError("empty parameter schedule");
    Trajectory traj;
    traj.dt = dt;
    traj.states.push_back(x0);
    traj.params = segments.front().params;
    SystemState cur = x0;
    for (std::size_t si = 0; si < segments.size(); ++si) {
        const Segment& seg = segments[si];
        if (seg.steps < 0) throw DomainError("negative segment length");
        for (long i = 0; i < seg.steps; ++i) {
            cur = rk4_step(cur, seg.params, dt);
            traj.states.push_back(cur);
            traj.segments.push_back(static_cast<int>(si));
        }
    }
    return traj;
}

std::vector<std::vector<double>> integrate_rk4(const VectorField& f, std::vector<double> x0,
                                               double dt, long steps, double escape_bound) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw DomainError("step size must be positive");
    const std::size_t n = x0.size();
    auto check = [&](const std::vector<double>& x, long step) {
        for (double v : x) {
            if (!std::isfinite(v))
                throw IntegrationError("state became non-finite", dt * step, step);
            if (std::fabs(v) > escape_bound)
                throw IntegrationError("state escaped integration bound", dt * step, step);
        }
    };
    auto add_scaled = [n](const std::vector<double>& x, const std::vector<double>& d, double a) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = x[i] + a * d[i];
        return r;
    };
    auto eval = [&](const std::vector<double>& x) {
        std::vector<double> d = f(x);
        if (d.size() != n) throw ShapeError("vector field changed dimension");
        return d;
    };

    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(steps) + 1);
    check(x0, 0);
    out.push_back(x0);
    std::vector<double> cur = std::move(x0);
    for (long s = 0; s < steps; ++s) {
        const auto k1 = eval(cur);
        const auto k2 = eval(add_scaled(cur, k1, 0.5 * dt));
        const auto k3 = eval(add_scaled(cur, k2, 0.5 * dt));
        const auto k4 = eval(add_scaled(cur, k3, dt));
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i)
            next[i] = cur[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        check(next, s + 1);
        out.push_back(next);
        cur = std::move(next);
    }
    return out;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    const bool labeled = !traj.segments.empty();
    out << (labeled ? "t,h1,h2,h3,segment\n" : "t,h1,h2,h3\n");
    char buf[256];
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const SystemState& s = traj.states[i];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g", traj.dt * static_cast<double>(i),
                      s.h1, s.h2, s.h3);
        out << buf;
        if (labeled) {
            // The label of row i is the segment that produced the step into it;
            // the initial state inherits the first segment's label.
            const int seg = i == 0 ? traj.segments.front() : traj.segments[i - 1];
            out << ',' << seg;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace tanklab::sim
