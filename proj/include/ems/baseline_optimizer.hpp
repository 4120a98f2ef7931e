#pragma once

#include "ems/scenario_engine.hpp"
#include "ems/simplex.hpp"

namespace ems {

struct BaselineOptions {
    /// Couple generators along k_i * P_i = const (dropped for the base,
    /// non-resilient dispatch).
    bool robustness_coupling = true;
    bool cycle_constraint = true;  // sum of ESS power over the horizon = 0
    /// Weight of the CVaR term in the scenario-based objective
    /// max E[served] - cvar_weight * CVaR(loss). Strictly below 1 keeps a
    /// positive weight on every scenario's service (the loss distribution is
    /// centered, so the pure-CVaR objective ignores uniform service shifts).
    Scalar cvar_weight = 0.5;
    LpOptions lp;
};

struct DispatchPlan {
    Matrix served_mw;  // horizon x loads, service under the all-available scenario
    Matrix gen_mw;     // horizon x generators
    Matrix ess_mw;     // horizon x ESS units
    Vector slack_mw;   // horizon
    LpStatus status = LpStatus::infeasible;
    Scalar objective = 0;              // LP objective value (minimization form)
    Scalar weighted_served_total = 0;  // sum_t sum_i w_i * served * dt
    Scalar solve_seconds = 0;
    long lp_iterations = 0;
    Scalar complementarity_residual = 0;
};

struct ScenarioPlanResult {
    DispatchPlan plan;
    RiskReport risk;
    Scalar epigraph_cvar = 0;  // CVaR reported by the epigraph block
    /// Weighted service the plan realizes under each retained scenario.
    std::vector<Scalar> per_scenario_served;
};

/// Priority dispatch over the linearized (lossless, fixed-voltage) network:
/// maximizes weighted served energy subject to flow, box, storage and
/// robustness-coupling constraints, solved by the in-module simplex.
DispatchPlan solve_deterministic(const NetworkModel& model, const BaselineOptions& options = {});

/// Single here-and-now dispatch hedged over the retained scenarios through
/// the standard CVaR epigraph linearization (auxiliary beta plus
/// per-scenario shortfall variables). The reported epigraph CVaR matches
/// cvar_alpha on the plan's own losses.
ScenarioPlanResult solve_scenario_based(const NetworkModel& model, const ScenarioSet& scenarios,
                                        Scalar alpha, const BaselineOptions& options = {});

/// Weighted service a fixed plan realizes under one scenario: available
/// committed generation plus storage and slack headroom, served greedily by
/// class priority up to the plan's own service levels.
Scalar plan_served_under_scenario(const NetworkModel& model, const DispatchPlan& plan,
                                  const Scenario& scenario);

/// Exhaustive grid search over discretized dispatch for tiny cases. Requires
/// line limits generous enough that class-priority service is exact (checked;
/// throws ValidationError otherwise, as it does when the state space is too
/// large). Guaranteed within one grid cell of the optimum; refined by a
/// shrinking coordinate search.
DispatchPlan brute_force_oracle(const NetworkModel& model, int grid_resolution);

}  // namespace ems
