#pragma once

#include "ems/grid_model.hpp"

#include <functional>

namespace ems {

struct ScenarioSet {
    std::vector<Scenario> scenarios;  // probabilities are the raw joint products
    Scalar threshold = 0;
    Scalar dropped_mass = 0;  // total probability of pruned scenarios
    bool normalized = true;   // whether weights() renormalizes over the retained set

    /// Per-scenario weights used for expectations: raw probabilities,
    /// renormalized to sum to one when `normalized` is set.
    Vector weights() const;
    int size() const { return static_cast<int>(scenarios.size()); }
};

struct ScenarioLoss {
    int scenario = 0;
    Scalar loss = 0;
    Scalar probability = 0;
};

struct RiskReport {
    Scalar alpha = 0;
    Scalar var = 0;
    Scalar cvar = 0;
    Scalar expected_weighted = 0;
    std::vector<ScenarioLoss> per_scenario_loss;
};

/// All 2^n masks, pruned below `threshold`. Throws ValidationError when
/// n > 25 (enumeration guard) or a pof is outside [0,1).
ScenarioSet enumerate_scenarios(const std::vector<Scalar>& pofs, Scalar threshold,
                                bool renormalize = true);

/// Shortfall of a scenario against the expectation; negative when the
/// scenario outperforms it.
inline Scalar loss(Scalar served_weighted, Scalar expected_weighted) {
    return expected_weighted - served_weighted;
}

/// Smallest loss x whose cumulative probability reaches alpha (discrete CDF
/// infimum). Probabilities must sum to 1 within 1e-9.
Scalar var_alpha(const Vector& losses, const Vector& probs, Scalar alpha);

/// Expected loss over the worst (1-alpha) probability tail, splitting the
/// atom at the VaR so that exactly (1-alpha) mass is averaged.
Scalar cvar_alpha(const Vector& losses, const Vector& probs, Scalar alpha);

/// Evaluates `served_weighted` per retained scenario and assembles losses,
/// VaR and CVaR under the set's (renormalized) weights.
RiskReport risk_report(const ScenarioSet& set,
                       const std::function<Scalar(const Scenario&, int)>& served_weighted,
                       Scalar alpha);

}  // namespace ems
