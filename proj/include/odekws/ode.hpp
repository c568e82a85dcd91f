#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "odekws/errors.hpp"
#include "odekws/ops.hpp"
#include "odekws/tape.hpp"
#include "odekws/tensor.hpp"

namespace odekws {

/// Settings for integrating dy/dt = f(y, t) over t in [0, depth].
struct OdeConfig {
    double tolerance = 1e-3;
    double depth = 1.0;
    double initial_step = 0.0;  // 0 picks depth / 10
    int max_steps = 1000;       // attempted steps, accepted or not
    double safety = 0.9;
    double min_factor = 0.2;
    double max_factor = 10.0;
    double step_floor = 1e-10;  // relative to depth

    void validate() const {
        if (!(tolerance > 0.0)) throw ConfigError("solver tolerance must be positive");
        if (!(depth > 0.0)) throw ConfigError("integration depth must be positive");
        if (initial_step < 0.0) throw ConfigError("initial step cannot be negative");
        if (max_steps < 1) throw ConfigError("step budget must be at least one");
        if (!(safety > 0.0 && safety <= 1.0))
            throw ConfigError("safety factor must be in (0, 1]");
        if (!(min_factor > 0.0 && min_factor < 1.0 && max_factor > 1.0))
            throw ConfigError("step factors must bracket 1");
    }
};

struct SolveStats {
    int nfe = 0;
    int accepted = 0;
    int rejected = 0;
    std::vector<double> visited_times;  // every time the dynamics ran, in order
};

template <class Real>
using DynamicsFn = std::function<Value(Tape<Real>&, Value, double)>;

namespace detail {

// Dormand-Prince 5(4) tableau. The fifth-order row equals the seventh
// stage's combination, so the last stage of an accepted step is the first
// stage of the next (FSAL).
struct Dopri5 {
    static constexpr std::array<double, 7> c = {0.0,     1.0 / 5, 3.0 / 10, 4.0 / 5,
                                                8.0 / 9, 1.0,     1.0};
    static constexpr std::array<std::array<double, 6>, 7> a = {{
        {},
        {1.0 / 5},
        {3.0 / 40, 9.0 / 40},
        {44.0 / 45, -56.0 / 15, 32.0 / 9},
        {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
        {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
        {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
    }};
    // difference between the 5th and 4th order solution weights
    static constexpr std::array<double, 7> e = {
        71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920, -17253.0 / 339200,
        22.0 / 525,   -1.0 / 40};
};

template <class Real>
void check_finite(const Tensor<Real>& v, const char* what) {
    if (!v.all_finite())
        throw NonFiniteStateError(std::string(what) + " is no longer finite");
}

/// One full round of stages 2..7 from (t, y, k1) with step h. Stage seven
/// is evaluated at the candidate end state, which is also the fifth-order
/// solution.
template <class Real>
struct StageSweep {
    std::array<Value, 7> k;
    Value y_next;
};

template <class Real, class F>
StageSweep<Real> run_stages(Tape<Real>& tape, F&& f, Value y,
                            Value k1, double t, double h, SolveStats& stats) {
    StageSweep<Real> sweep;
    sweep.k[0] = k1;
    for (int s = 1; s < 7; ++s) {
        std::vector<std::pair<double, Value>> terms;
        terms.reserve(static_cast<size_t>(s) + 1);
        terms.emplace_back(1.0, y);
        for (int j = 0; j < s; ++j)
            if (Dopri5::a[static_cast<size_t>(s)][static_cast<size_t>(j)] != 0.0)
                terms.emplace_back(h * Dopri5::a[static_cast<size_t>(s)][static_cast<size_t>(j)],
                                   sweep.k[static_cast<size_t>(j)]);
        const Value stage_in = lincomb(tape, terms);
        const double ts = t + Dopri5::c[static_cast<size_t>(s)] * h;
        if (s == 6) sweep.y_next = stage_in;
        stats.visited_times.push_back(ts);
        sweep.k[static_cast<size_t>(s)] = f(tape, stage_in, ts);
        ++stats.nfe;
        check_finite(tape.value(sweep.k[static_cast<size_t>(s)]), "solver stage");
    }
    check_finite(tape.value(sweep.y_next), "solver state");
    return sweep;
}

/// Weighted RMS of the embedded error estimate: each component is scaled
/// by tol * (1 + max(|before|, |after|)) and the result must be <= 1 to
/// accept the step. Accumulated in double regardless of the state type.
template <class Real>
double error_norm(Tape<Real>& tape, const StageSweep<Real>& sweep, Value y_before,
                  double h, double tol) {
    const Tensor<Real>& before = tape.value(y_before);
    const Tensor<Real>& after = tape.value(sweep.y_next);
    const int64_t n = before.size();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double err = 0.0;
        for (int s = 0; s < 7; ++s)
            if (Dopri5::e[static_cast<size_t>(s)] != 0.0)
                err += Dopri5::e[static_cast<size_t>(s)] *
                       static_cast<double>(tape.value(sweep.k[static_cast<size_t>(s)])[i]);
        err *= h;
        const double scale =
            tol + tol * std::max(std::abs(static_cast<double>(before[i])),
                                 std::abs(static_cast<double>(after[i])));
        const double r = err / scale;
        acc += r * r;
    }
    if (!std::isfinite(acc)) throw NonFiniteStateError("error estimate is not finite");
    return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace detail

/// Integrate with adaptive Dormand-Prince 5(4). Rejected trial steps are
/// erased from the tape (their first stage survives: FSAL), so gradients
/// flow only through the accepted path; step-size control itself carries
/// no gradient. Function evaluations follow nfe = 1 + 6 * attempts.
template <class Real, class F>
std::pair<Value, SolveStats> dopri5_solve(Tape<Real>& tape, F&& f,
                                          Value y0, const OdeConfig& cfg) {
    cfg.validate();
    const double T = cfg.depth;
    SolveStats stats;

    double t = 0.0;
    double h = cfg.initial_step > 0.0 ? std::min(cfg.initial_step, T) : T / 10.0;
    Value y = y0;

    stats.visited_times.push_back(0.0);
    Value k1 = f(tape, y, 0.0);
    stats.nfe = 1;
    detail::check_finite(tape.value(k1), "solver stage");

    int attempts = 0;
    while (true) {
        if (h < cfg.step_floor * T)
            throw StepUnderflowError("step size underflowed at t = " + std::to_string(t));
        if (attempts >= cfg.max_steps)
            throw StepBudgetExceededError("no convergence within " +
                                          std::to_string(cfg.max_steps) + " steps");

        const bool final_step = t + h >= T * (1.0 - 1e-14);
        if (final_step) h = T - t;

        const size_t mark = tape.size();
        const auto sweep = detail::run_stages(tape, f, y, k1, t, h, stats);
        const double err = detail::error_norm(tape, sweep, y, h, cfg.tolerance);
        ++attempts;

        if (err <= 1.0) {
            ++stats.accepted;
            y = sweep.y_next;
            k1 = sweep.k[6];
            t = final_step ? T : t + h;
            if (t >= T) break;
            const double factor =
                err == 0.0 ? cfg.max_factor
                           : std::clamp(cfg.safety * std::pow(err, -0.2), cfg.min_factor,
                                        cfg.max_factor);
            h *= factor;
        } else {
            ++stats.rejected;
            tape.truncate(mark);
            h *= std::clamp(cfg.safety * std::pow(err, -0.2), cfg.min_factor,
                            cfg.max_factor);
        }
    }
    return {y, stats};
}

/// The same integrator with n equal steps and no error control. Used where
/// a differentiable, perturbation-stable solve is needed (gradient
/// verification), since the adaptive accept/reject sequence may flip under
/// tiny input changes.
template <class Real, class F>
std::pair<Value, SolveStats> fixed_step_solve(Tape<Real>& tape, F&& f,
                                              Value y0, double depth, int n_steps) {
    if (!(depth > 0.0)) throw ConfigError("integration depth must be positive");
    if (n_steps < 1) throw ConfigError("need at least one step");
    const double h = depth / n_steps;
    SolveStats stats;

    Value y = y0;
    stats.visited_times.push_back(0.0);
    Value k1 = f(tape, y, 0.0);
    stats.nfe = 1;
    detail::check_finite(tape.value(k1), "solver stage");

    for (int j = 0; j < n_steps; ++j) {
        const double t = j * h;
        const auto sweep = detail::run_stages(tape, f, y, k1, t, h, stats);
        y = sweep.y_next;
        k1 = sweep.k[6];
        ++stats.accepted;
    }
    return {y, stats};
}

}  // namespace odekws
