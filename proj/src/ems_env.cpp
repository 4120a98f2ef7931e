#include "ems/ems_env.hpp"

#include <algorithm>
#include <cmath>

namespace ems {

Vector Observation::flat() const {
    const Index n = v.size() * 2 + 1 + line_p.size() * 2 + ess_energy.size() + 1 +
                    static_cast<Index>(scenario_mask.size());
    Vector out(n);
    Index at = 0;
    out.segment(at, v.size()) = v;
    at += v.size();
    out.segment(at, theta.size()) = theta;
    at += theta.size();
    out[at++] = p_slack;
    out.segment(at, line_p.size()) = line_p;
    at += line_p.size();
    out.segment(at, line_q.size()) = line_q;
    at += line_q.size();
    out.segment(at, ess_energy.size()) = ess_energy;
    at += ess_energy.size();
    out[at++] = static_cast<Scalar>(hour);
    for (auto b : scenario_mask) out[at++] = static_cast<Scalar>(b);
    return out;
}

int Observation::flat_size(const NetworkModel& m) {
    return static_cast<int>(2 * m.buses.size() + 1 + 2 * m.lines.size() + m.ess_units.size() +
                            1 + m.failable_count());
}

Vector project_generation(const Vector& request_mw, const NetworkModel& model,
                          const std::vector<std::uint8_t>& failed) {
    const int ng = static_cast<int>(model.generators.size());
    if (request_mw.size() != ng)
        throw ValidationError("generation request length must match the generator count");
    Vector out = Vector::Zero(ng);
    Scalar inv_k_sum = 0;
    Scalar total = 0;
    int available = 0;
    for (int i = 0; i < ng; ++i) {
        bool ok = i >= static_cast<int>(failed.size()) || !failed[i];
        if (!ok) continue;
        ++available;
        inv_k_sum += 1.0 / model.generators[i].k_robust;
        total += request_mw[i];
    }
    if (available == 0) throw ValidationError("all generators failed");
    const Scalar c = std::max<Scalar>(0, total) / inv_k_sum;  // ray level, k_i * P_i = c
    for (int i = 0; i < ng; ++i) {
        bool ok = i >= static_cast<int>(failed.size()) || !failed[i];
        if (!ok) continue;
        const Generator& g = model.generators[i];
        out[i] = std::clamp(c / g.k_robust, g.p_min, g.p_max);
    }
    return out;
}

EssStepResult ess_step(Scalar energy, Scalar requested, const EssUnit& unit, Scalar dt) {
    EssStepResult r;
    // window at the current energy: discharge is capped by the energy above
    // e_min, charge by the headroom below e_max
    const Scalar d_cap = std::min(unit.d_max, (energy - unit.e_min) / (unit.eta * dt));
    const Scalar c_cap = std::min(unit.c_max, (unit.e_max - energy) / (unit.eta * dt));
    r.applied_mw = std::clamp(requested, -std::max<Scalar>(0, c_cap), std::max<Scalar>(0, d_cap));
    r.next_energy = energy - unit.eta * r.applied_mw * dt;
    r.next_energy = std::clamp(r.next_energy, unit.e_min, unit.e_max);  // absorb rounding
    r.next_discharge_max =
        std::max<Scalar>(0, std::min(unit.d_max, (r.next_energy - unit.e_min) / (unit.eta * dt)));
    r.next_charge_max =
        std::max<Scalar>(0, std::min(unit.c_max, (unit.e_max - r.next_energy) / (unit.eta * dt)));
    return r;
}

RewardBreakdown compute_reward(const NetworkModel& model, const PowerFlowSolution& solution,
                               const ViolationSet& violations, const Vector& served_mw,
                               int hour, const EnvConfig& config) {
    RewardBreakdown r;
    (void)hour;
    for (Index i = 0; i < served_mw.size(); ++i)
        r.r_obj += model.weight(model.loads[i].cls) * served_mw[i] * model.dt;

    Scalar vtheta_excess = 0;  // p.u. and rad
    Scalar pq_excess = 0;      // p.u.
    for (const auto& v : violations.items) {
        switch (v.kind) {
            case ConstraintKind::v:
            case ConstraintKind::theta: vtheta_excess += v.excess; break;
            case ConstraintKind::line_p:
            case ConstraintKind::line_q: pq_excess += v.excess / model.base_mva; break;
            default: break;  // gen bounds are enforced by projection; slack handled below
        }
    }
    r.r_ineq = -config.lambda_vtheta * vtheta_excess - config.lambda_pq * pq_excess;

    const int s = model.slack_index();
    if (s >= 0) {
        const Bus& b = model.buses[s];
        if (solution.p_slack < b.slack_p_min)
            r.r_slack = -config.k1 * (b.slack_p_min - solution.p_slack);
        else if (solution.p_slack > b.slack_p_max)
            r.r_slack = -config.k2 * (solution.p_slack - b.slack_p_max);
    }
    if (!solution.converged) r.r_ineq -= config.infeasible_penalty;

    r.total = r.r_obj + r.r_ineq + r.r_slack;
    return r;
}

EmsEnv::EmsEnv(const NetworkModel& model, EnvConfig config)
    : base_(model), config_(std::move(config)) {
    ValidationReport rep = validate(base_);
    if (!rep.ok()) throw ValidationError("invalid model for environment:\n" + rep.to_string());
}

int EmsEnv::action_size() const {
    return static_cast<int>(base_.loads.size() + base_.ess_units.size() +
                            base_.generators.size());
}

Observation EmsEnv::reset(const Scenario& scenario, int scenario_id, std::uint64_t seed) {
    auto applied = apply_scenario(base_, scenario);
    masked_ = std::move(applied.model);
    islanded_ = std::move(applied.islanded_buses);
    scenario_ = scenario;
    scenario_id_ = scenario_id;
    failed_gens_.assign(scenario.mask.begin(),
                        scenario.mask.begin() + base_.generators.size());
    // generators and storage on islanded buses cannot deliver either
    for (std::size_t g = 0; g < base_.generators.size(); ++g)
        for (int isl : islanded_)
            if (base_.bus_index(base_.generators[g].bus) == isl) failed_gens_[g] = 1;
    seed_ = seed;
    hour_ = 0;
    repairs_ = 0;
    done_ = false;

    const int ne = static_cast<int>(base_.ess_units.size());
    ess_energy_.resize(ne);
    for (int i = 0; i < ne; ++i) ess_energy_[i] = base_.ess_units[i].e_init;
    ess_cycle_sum_ = Vector::Zero(ne);

    trace_ = EpisodeTrace{};
    trace_.scenario_id = scenario_id;
    trace_.seed = seed;

    last_solution_ = PowerFlowSolution{};
    const int nb = static_cast<int>(base_.buses.size());
    last_solution_.v = Vector::Ones(nb);
    for (int i : islanded_) last_solution_.v[i] = 0;
    last_solution_.theta = Vector::Zero(nb);
    last_solution_.line_p = Vector::Zero(base_.lines.size());
    last_solution_.line_q = Vector::Zero(base_.lines.size());
    last_solution_.converged = true;
    last_solution_.islanded_buses = islanded_;
    return observe(last_solution_);
}

Observation EmsEnv::observe(const PowerFlowSolution& sol) const {
    Observation o;
    o.v = sol.v;
    o.theta = sol.theta;
    o.p_slack = sol.p_slack;
    o.line_p = sol.line_p;
    o.line_q = sol.line_q;
    o.ess_energy = ess_energy_;
    o.hour = hour_;
    o.scenario_mask = scenario_.mask;
    return o;
}

StepResult EmsEnv::step(const Action& action) {
    if (done_) throw ValidationError("step on a finished episode; call reset first");
    const int nl = static_cast<int>(base_.loads.size());
    const int ne = static_cast<int>(base_.ess_units.size());
    const int ng = static_cast<int>(base_.generators.size());
    if (action.load_served.size() != nl || action.ess_power.size() != ne ||
        action.gen_power.size() != ng)
        throw ValidationError("action dimensions do not match the model");
    if (!action.load_served.allFinite() || !action.ess_power.allFinite() ||
        !action.gen_power.allFinite())
        throw ValidationError("non-finite action");

    std::vector<char> off(base_.buses.size(), 0);
    for (int i : islanded_) off[i] = 1;

    // served load: fraction of this hour's profile, zero on islanded buses
    Vector served(nl), served_q(nl);
    for (int i = 0; i < nl; ++i) {
        Scalar frac = std::clamp(action.load_served[i], 0.0, 1.0);
        int bi = base_.bus_index(base_.loads[i].bus);
        if (off[bi]) frac = 0;
        served[i] = frac * base_.load_p(i, hour_);
        served_q[i] = frac * base_.load_q(i, hour_);
    }

    bool any_gen = false;
    for (std::size_t g = 0; g < failed_gens_.size(); ++g)
        if (!failed_gens_[g]) any_gen = true;
    Vector gen = any_gen ? project_generation(action.gen_power, masked_, failed_gens_)
                         : Vector::Zero(ng);

    // ESS: clip to the dispatch window; with cycle repair on, additionally
    // steer toward a zero horizon sum so the final interval can always land
    // exactly on it
    const bool final_hour = hour_ == base_.horizon - 1;
    Vector ess_applied = Vector::Zero(ne);
    Vector ess_next = ess_energy_;
    for (int i = 0; i < ne; ++i) {
        const EssUnit& unit = base_.ess_units[i];
        Scalar request = action.ess_power[i];
        if (off[base_.bus_index(unit.bus)]) request = 0;
        if (config_.cycle_repair) {
            const Scalar rate = std::min(unit.c_max, unit.d_max);
            const int remaining = base_.horizon - 1 - hour_;
            if (final_hour) {
                request = -ess_cycle_sum_[i];
            } else {
                const Scalar band = rate * remaining;
                request = std::clamp(request, -band - ess_cycle_sum_[i], band - ess_cycle_sum_[i]);
            }
        }
        EssStepResult r = ess_step(ess_energy_[i], request, unit, base_.dt);
        ess_applied[i] = r.applied_mw;
        ess_next[i] = r.next_energy;
    }

    // bus injections: generation + storage discharge - served load
    const int nb = static_cast<int>(base_.buses.size());
    Vector p_inj = Vector::Zero(nb), q_inj = Vector::Zero(nb);
    for (int g = 0; g < ng; ++g) p_inj[base_.bus_index(base_.generators[g].bus)] += gen[g];
    for (int e = 0; e < ne; ++e)
        p_inj[base_.bus_index(base_.ess_units[e].bus)] += ess_applied[e];
    for (int i = 0; i < nl; ++i) {
        p_inj[base_.bus_index(base_.loads[i].bus)] -= served[i];
        q_inj[base_.bus_index(base_.loads[i].bus)] -= served_q[i];
    }

    PowerFlowSolution sol = base_.kind == NetworkKind::dc
                                ? solve_dc(masked_, p_inj, config_.power_flow)
                                : solve_ac(masked_, p_inj, q_inj, config_.power_flow);

    ViolationSet violations;
    if (sol.converged) {
        DispatchSetpoints dispatch;
        dispatch.gen_p = gen;
        violations = check_limits(masked_, sol, dispatch);
    }

    const bool infeasible = !sol.converged;
    const bool clean = sol.converged && violations.empty();
    const bool advancing = clean || infeasible || repairs_ >= config_.repair_cap - 1;

    // a rejected or unsolved dispatch is never implemented, so it earns no
    // service reward
    const Vector zeros = Vector::Zero(nl);
    const Vector& served_effective = (advancing && !infeasible) ? served : zeros;
    RewardBreakdown reward =
        compute_reward(base_, sol, violations, served_effective, hour_, config_);

    StepResult out;
    out.reward = reward;
    out.info.violations = violations;
    out.info.infeasible = infeasible;

    if (!advancing) {
        ++repairs_;
        out.info.advanced = false;
        out.info.repairs = repairs_;
        out.observation = observe(sol);
        out.done = false;
        return out;
    }

    // commit the interval
    ess_energy_ = ess_next;
    ess_cycle_sum_ += ess_applied;
    out.info.advanced = true;
    out.info.repairs = repairs_;

    IntervalRecord rec;
    rec.action.load_served = action.load_served;
    rec.action.ess_power = ess_applied;
    rec.action.gen_power = gen;
    rec.reward = reward;
    rec.repairs = repairs_;
    rec.violations = violations;
    rec.infeasible = infeasible;
    rec.served_mw = served_effective;
    rec.gen_mw = gen;
    rec.ess_mw = ess_applied;

    repairs_ = 0;
    done_ = hour_ + 1 >= base_.horizon;
    if (!done_) ++hour_;
    out.done = done_;
    if (done_) {
        out.info.ess_cycle_residual = ess_cycle_sum_;
        trace_.terminal = true;
        trace_.ess_cycle_residual = ess_cycle_sum_;
    }
    last_solution_ = sol;
    Observation obs = observe(sol);
    if (done_) obs.hour = base_.horizon - 1;
    rec.observation = obs;
    trace_.intervals.push_back(std::move(rec));
    out.observation = std::move(obs);
    return out;
}

}  // namespace ems
