#pragma once

// Step-size control and the flow driver that records energy traces.

#include "dgflow/steppers.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgflow {

enum class StepMode { Fixed, Adaptive };

struct StepController
{
    StepMode mode = StepMode::Fixed;
    double tau = 1.0;
    double tau_min = 1e-7;
    double tau_max = 1e3;

    static StepController fixed(double tau, double tau_min = 1e-7, double tau_max = 1e3)
    {
        StepController c{StepMode::Fixed, tau, tau_min, tau_max};
        c.validate();
        return c;
    }
    static StepController adaptive(double tau, double tau_min = 1e-7, double tau_max = 1e3)
    {
        StepController c{StepMode::Adaptive, tau, tau_min, tau_max};
        c.validate();
        return c;
    }

    // 0 < tau_min <= tau <= tau_max < inf
    void validate() const
    {
        if (!(tau_min > 0.0) || !(tau_min <= tau) || !(tau <= tau_max) || !std::isfinite(tau_max))
            throw std::invalid_argument("step controller needs 0 < tau_min <= tau <= tau_max < inf");
    }
};

struct ControlledStep
{
    StepResult step;
    StepController next;
    double energy = 0.0; // V at the accepted state
};

// Runs trial steps with tau and 2*tau and keeps the one with the lower energy
// (ties go to tau). Next tau is halved if the tau trial won, doubled otherwise,
// then clamped to [tau_min, tau_max]. Work from both trials is reported.
template <Energy E>
ControlledStep adaptive_controller_step(const E& V, Method method, const ImageGrid& x, const StepController& ctl,
                                        const StepOptions& opt = {})
{
    if (ctl.mode != StepMode::Adaptive) throw std::invalid_argument("adaptive_controller_step: controller is fixed");
    ctl.validate();
    StepResult small = take_step(V, method, x, ctl.tau, opt);
    StepResult large = take_step(V, method, x, 2.0 * ctl.tau, opt);
    const double e_small = V.value(small.state);
    const double e_large = V.value(large.state);
    const std::size_t work = small.inner_iters + large.inner_iters;

    ControlledStep out{{}, ctl, 0.0};
    if (e_small <= e_large) {
        out.step = std::move(small);
        out.energy = e_small;
        out.next.tau = ctl.tau * 0.5;
    } else {
        out.step = std::move(large);
        out.energy = e_large;
        out.next.tau = ctl.tau * 2.0;
    }
    out.step.inner_iters = work;
    out.next.tau = std::clamp(out.next.tau, ctl.tau_min, ctl.tau_max);
    return out;
}

template <Energy E>
ControlledStep controlled_step(const E& V, Method method, const ImageGrid& x, const StepController& ctl,
                               const StepOptions& opt = {})
{
    if (ctl.mode == StepMode::Adaptive) return adaptive_controller_step(V, method, x, ctl, opt);
    StepResult s = take_step(V, method, x, ctl.tau, opt);
    const double e = V.value(s.state);
    return ControlledStep{std::move(s), ctl, e};
}

// ---------------------------------------------------------------------------

struct TraceRow
{
    std::size_t step = 0;
    double energy = 0.0;
    double grad_norm = 0.0;
    double tau = 0.0;
    std::size_t inner_iters = 0;
    double wall_ms = 0.0; // cumulative since the start of the flow

    bool operator==(const TraceRow&) const = default;
};

struct FlowTrace
{
    std::vector<TraceRow> rows;

    std::vector<double> energies() const
    {
        std::vector<double> e;
        e.reserve(rows.size());
        for (const auto& r : rows) e.push_back(r.energy);
        return e;
    }
    std::vector<double> taus() const
    {
        std::vector<double> t;
        for (const auto& r : rows) t.push_back(r.tau);
        return t;
    }
};

struct StopCriteria
{
    std::size_t max_steps = 1000;
    double grad_tol = 1e-6;         // stop once ||grad V|| <= grad_tol * (1 + ||grad V(x0)||)
    double energy_stall_eps = 0.0;  // stop once |V(x_{n-10}) - V(x_n)| < eps; 0 disables
};

enum class StopReason { Converged, MaxSteps, Stalled, Failed };

inline const char* to_string(StopReason r)
{
    switch (r) {
    case StopReason::Converged: return "converged";
    case StopReason::MaxSteps: return "max-steps";
    case StopReason::Stalled: return "stalled";
    case StopReason::Failed: return "failed";
    }
    return "?";
}

struct FlowOptions
{
    StepOptions step{};
    bool record_time = true;
    std::function<void(const TraceRow&)> observer; // called for each recorded row
};

struct FlowResult
{
    ImageGrid final_state;
    FlowTrace trace;
    StopReason reason = StopReason::MaxSteps;
    std::string error; // set when reason == Failed
    double grad_tol_abs = 0.0;
};

// Integrates the flow from x0. The trace has one row per step, including step
// 0. Solver failures end the run with reason Failed; the partial trace is kept.
template <Energy E>
FlowResult run_flow(const E& V, Method method, StepController ctl, const StopCriteria& stop, ImageGrid x0,
                    const FlowOptions& opt = {})
{
    ctl.validate();
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto elapsed = [&] {
        return opt.record_time ? std::chrono::duration<double, std::milli>(clock::now() - t0).count() : 0.0;
    };

    FlowResult res;
    ImageGrid x = std::move(x0);
    double energy = V.value(x);
    double gnorm = norm(V.gradient(x));
    res.grad_tol_abs = stop.grad_tol * (1.0 + gnorm);

    auto record = [&](TraceRow row) {
        res.trace.rows.push_back(row);
        if (opt.observer) opt.observer(row);
    };
    record({0, energy, gnorm, ctl.tau, 0, elapsed()});

    res.reason = StopReason::MaxSteps;
    if (gnorm <= res.grad_tol_abs) {
        res.reason = StopReason::Converged;
    } else {
        for (std::size_t n = 1; n <= stop.max_steps; ++n) {
            ControlledStep cs;
            try {
                cs = controlled_step(V, method, x, ctl, opt.step);
            } catch (const std::exception& e) {
                res.reason = StopReason::Failed;
                res.error = e.what();
                break;
            }
            x = std::move(cs.step.state);
            energy = cs.energy;
            gnorm = norm(V.gradient(x));
            record({n, energy, gnorm, cs.step.tau, cs.step.inner_iters, elapsed()});
            ctl = cs.next;

            if (gnorm <= res.grad_tol_abs) {
                res.reason = StopReason::Converged;
                break;
            }
            if (stop.energy_stall_eps > 0.0 && n >= 10) {
                const double drop = res.trace.rows[n - 10].energy - energy;
                if (std::abs(drop) < stop.energy_stall_eps) {
                    res.reason = StopReason::Stalled;
                    break;
                }
            }
        }
    }
    res.final_state = std::move(x);
    return res;
}

} // namespace dgflow
