#pragma once

#include "ems/power_flow.hpp"
#include "ems/scenario_engine.hpp"

namespace ems {

struct Action {
    Vector load_served;  // fraction of the hour's profile per load point, clamped to [0,1]
    Vector ess_power;    // MW per ESS, negative = charging
    Vector gen_power;    // MW per generator
};

struct Observation {
    Vector v;
    Vector theta;
    Scalar p_slack = 0;
    Vector line_p;
    Vector line_q;
    Vector ess_energy;  // MWh
    int hour = 0;
    std::vector<std::uint8_t> scenario_mask;

    /// Flattened as [v | theta | p_slack | line_p | line_q | ess_energy | hour | mask].
    Vector flat() const;
    static int flat_size(const NetworkModel& model);
};

struct RewardBreakdown {
    Scalar r_obj = 0;
    Scalar r_ineq = 0;  // <= 0
    Scalar r_slack = 0; // <= 0
    Scalar total = 0;   // r_obj + r_ineq + r_slack, exactly
};

struct EnvConfig {
    Scalar lambda_vtheta = 50;  // penalty per p.u. (rad) of voltage/angle excess
    Scalar lambda_pq = 50;      // penalty per p.u. of line-flow excess
    Scalar k1 = 50;             // slack penalty per MW below the range
    Scalar k2 = 50;             // slack penalty per MW above the range
    int repair_cap = 50;        // max attempts per interval before it advances anyway
    bool cycle_repair = true;   // steer ESS dispatch so the horizon sum lands on zero
    Scalar infeasible_penalty = 1000;  // flat penalty when the power flow fails
    PowerFlowOptions power_flow;
};

struct IntervalRecord {
    Action action;          // shaped action actually applied
    Observation observation;
    RewardBreakdown reward;
    int repairs = 0;        // rejected attempts before this interval advanced
    ViolationSet violations;
    bool infeasible = false;
    Vector served_mw;       // per load point
    Vector gen_mw;
    Vector ess_mw;
};

struct EpisodeTrace {
    std::vector<IntervalRecord> intervals;
    int scenario_id = -1;
    std::uint64_t seed = 0;
    bool terminal = false;
    Vector ess_cycle_residual;  // MW per ESS at the terminal step
};

struct StepInfo {
    bool advanced = false;
    int repairs = 0;
    ViolationSet violations;
    bool infeasible = false;
    Vector ess_cycle_residual;  // filled on the terminal step
};

struct StepResult {
    Observation observation;
    RewardBreakdown reward;
    bool done = false;
    StepInfo info;
};

/// Distributes the requested total along the ray k_i * P_i = const over the
/// available generators, then clips each to its box. Throws ValidationError
/// when every generator is failed.
Vector project_generation(const Vector& gen_request_mw, const NetworkModel& model,
                          const std::vector<std::uint8_t>& failed);

struct EssStepResult {
    Scalar next_energy = 0;   // MWh
    Scalar applied_mw = 0;    // request clipped to the dispatch window
    Scalar next_charge_max = 0;     // MW, magnitude of the charging bound
    Scalar next_discharge_max = 0;  // MW
};

/// Three-step ESS control: clip the request to the window implied by the
/// rate limits and remaining energy, update the stored energy, and report the
/// next window.
EssStepResult ess_step(Scalar energy_mwh, Scalar requested_mw, const EssUnit& unit, Scalar dt);

RewardBreakdown compute_reward(const NetworkModel& model, const PowerFlowSolution& solution,
                               const ViolationSet& violations, const Vector& served_mw,
                               int hour, const EnvConfig& config);

/// Markov-decision-process wrapper around one network under one failure
/// scenario. An instance is single-threaded; run one per thread for
/// vectorized rollouts over a shared model.
class EmsEnv {
  public:
    explicit EmsEnv(const NetworkModel& model, EnvConfig config = {});

    Observation reset(const Scenario& scenario, int scenario_id, std::uint64_t seed);
    StepResult step(const Action& action);

    bool done() const { return done_; }
    int hour() const { return hour_; }
    const EpisodeTrace& trace() const { return trace_; }
    const NetworkModel& model() const { return base_; }
    const NetworkModel& masked_model() const { return masked_; }
    const EnvConfig& config() const { return config_; }
    int action_size() const;

  private:
    Observation observe(const PowerFlowSolution& solution) const;

    NetworkModel base_;
    EnvConfig config_;
    NetworkModel masked_;
    Scenario scenario_;
    int scenario_id_ = -1;
    std::vector<std::uint8_t> failed_gens_;
    std::vector<int> islanded_;
    std::uint64_t seed_ = 0;
    int hour_ = 0;
    int repairs_ = 0;
    bool done_ = true;
    Vector ess_energy_;     // committed state, MWh
    Vector ess_cycle_sum_;  // committed sum of applied MW over past intervals
    PowerFlowSolution last_solution_;
    EpisodeTrace trace_;
};

}  // namespace ems
