#include "ems/baseline_optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>

namespace ems {

namespace {

constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();
// Tiny cost on the ray level: minimizing max k_i P_i water-fills generation
// onto the clipped ray without distorting service.
constexpr Scalar kRayPin = 1e-6;

int class_index(LoadClass c) {
    switch (c) {
        case LoadClass::critical: return 0;
        case LoadClass::semi_critical: return 1;
        default: return 2;
    }
}

Scalar class_weight(const NetworkModel& m, int cls) {
    switch (cls) {
        case 0: return m.weights.k_c;
        case 1: return m.weights.k_sc;
        default: return m.weights.k_nc;
    }
}

// One generation column; either a single generator or a symmetric unit type
// (the scenario plan commits equal output to interchangeable units).
struct GenColumn {
    Scalar p_min = 0, p_max = 0, k_robust = 1;
    std::vector<int> units;  // generator indices it stands for
};

std::vector<GenColumn> per_generator_columns(const NetworkModel& m) {
    std::vector<GenColumn> cols;
    for (std::size_t g = 0; g < m.generators.size(); ++g) {
        const Generator& gen = m.generators[g];
        cols.push_back({gen.p_min, gen.p_max, gen.k_robust, {static_cast<int>(g)}});
    }
    return cols;
}

std::vector<GenColumn> per_type_columns(const NetworkModel& m) {
    std::map<std::tuple<Scalar, Scalar, Scalar>, int> seen;
    std::vector<GenColumn> cols;
    for (std::size_t g = 0; g < m.generators.size(); ++g) {
        const Generator& gen = m.generators[g];
        auto key = std::make_tuple(gen.k_robust, gen.p_min, gen.p_max);
        auto it = seen.find(key);
        if (it == seen.end()) {
            it = seen.emplace(key, static_cast<int>(cols.size())).first;
            cols.push_back({gen.p_min, gen.p_max, gen.k_robust, {}});
        }
        cols[it->second].units.push_back(static_cast<int>(g));
    }
    return cols;
}

struct Stage1Layout {
    const NetworkModel& m;
    const std::vector<GenColumn>& gens;
    int T, L, NG, E, B;
    int slack_bus;
    bool coupling;
    int per_t;

    Stage1Layout(const NetworkModel& model, const std::vector<GenColumn>& gen_cols,
                 bool with_coupling)
        : m(model),
          gens(gen_cols),
          T(model.horizon),
          L(static_cast<int>(model.loads.size())),
          NG(static_cast<int>(gen_cols.size())),
          E(static_cast<int>(model.ess_units.size())),
          B(static_cast<int>(model.buses.size())),
          slack_bus(model.slack_index()),
          coupling(with_coupling) {
        per_t = L + NG + E + (B - 1) + 1 + (coupling ? 1 : 0);
    }

    int cols() const { return T * per_t; }
    int served(int t, int l) const { return t * per_t + l; }
    int gen(int t, int g) const { return t * per_t + L + g; }
    int ess(int t, int e) const { return t * per_t + L + NG + e; }
    int u(int t, int b) const {  // slack bus excluded
        int k = b < slack_bus ? b : b - 1;
        return t * per_t + L + NG + E + k;
    }
    int slack(int t) const { return t * per_t + L + NG + E + (B - 1); }
    int ray(int t) const { return t * per_t + L + NG + E + (B - 1) + 1; }

    int rows(bool cycle) const {
        return T * (B + static_cast<int>(m.lines.size()) + (coupling ? NG : 0)) + E * T +
               (cycle ? E : 0);
    }
};

struct LpBuilder {
    LinearProgram lp;
    int row = 0;

    LpBuilder(int m, int n) {
        lp.A = Matrix::Zero(m, n);
        lp.c = Vector::Zero(n);
        lp.lo = Vector::Zero(n);
        lp.hi = Vector::Zero(n);
        lp.row_lo = Vector::Zero(m);
        lp.row_hi = Vector::Zero(m);
    }
    int add_row(Scalar lo, Scalar hi) {
        lp.row_lo[row] = lo;
        lp.row_hi[row] = hi;
        return row++;
    }
};

// Committed-dispatch equations: network balance on the linearized grid, line
// limits, the generation envelope along the robustness ray, storage energy
// ranges and the cycle constraint.
void build_stage1(LpBuilder& b, const Stage1Layout& s, const BaselineOptions& opt) {
    const NetworkModel& m = s.m;
    const Scalar base = m.base_mva;

    for (int t = 0; t < s.T; ++t) {
        for (int l = 0; l < s.L; ++l) {
            int j = s.served(t, l);
            b.lp.hi[j] = m.load_p(l, t);
            b.lp.c[j] = -m.weight(m.loads[l].cls) * m.dt;
        }
        for (int g = 0; g < s.NG; ++g) {
            int j = s.gen(t, g);
            b.lp.lo[j] = s.gens[g].p_min;
            b.lp.hi[j] = s.gens[g].p_max;
        }
        for (int e = 0; e < s.E; ++e) {
            int j = s.ess(t, e);
            b.lp.lo[j] = -m.ess_units[e].c_max;
            b.lp.hi[j] = m.ess_units[e].d_max;
        }
        for (int bus = 0; bus < s.B; ++bus) {
            if (bus == s.slack_bus) continue;
            int j = s.u(t, bus);
            b.lp.lo[j] = -2;
            b.lp.hi[j] = 2;
        }
        b.lp.lo[s.slack(t)] = m.buses[s.slack_bus].slack_p_min;
        b.lp.hi[s.slack(t)] = m.buses[s.slack_bus].slack_p_max;
        if (s.coupling) {
            int j = s.ray(t);
            Scalar c_hi = 0;
            for (const auto& g : s.gens) c_hi = std::max(c_hi, g.k_robust * g.p_max);
            b.lp.hi[j] = c_hi;
            b.lp.c[j] = kRayPin;
        }
    }

    for (int t = 0; t < s.T; ++t) {
        for (int bus = 0; bus < s.B; ++bus) {
            int r = b.add_row(0, 0);
            for (const Line& ln : m.lines) {
                Scalar coef = (m.kind == NetworkKind::dc ? ln.g : -ln.b) * base;
                int i = m.bus_index(ln.from_bus), k = m.bus_index(ln.to_bus);
                if (i != bus && k != bus) continue;
                int other = i == bus ? k : i;
                if (bus != s.slack_bus) b.lp.A(r, s.u(t, bus)) += coef;
                if (other != s.slack_bus) b.lp.A(r, s.u(t, other)) -= coef;
            }
            for (int l = 0; l < s.L; ++l)
                if (m.bus_index(m.loads[l].bus) == bus) b.lp.A(r, s.served(t, l)) += 1;
            for (int g = 0; g < s.NG; ++g)
                for (int unit : s.gens[g].units)
                    if (m.bus_index(m.generators[unit].bus) == bus) b.lp.A(r, s.gen(t, g)) -= 1;
            for (int e = 0; e < s.E; ++e)
                if (m.bus_index(m.ess_units[e].bus) == bus) b.lp.A(r, s.ess(t, e)) -= 1;
            if (bus == s.slack_bus) b.lp.A(r, s.slack(t)) -= 1;
        }
        for (const Line& ln : m.lines) {
            Scalar coef = (m.kind == NetworkKind::dc ? ln.g : -ln.b) * base;
            int r = b.add_row(-ln.p_lim, ln.p_lim);
            int i = m.bus_index(ln.from_bus), k = m.bus_index(ln.to_bus);
            if (i != s.slack_bus) b.lp.A(r, s.u(t, i)) += coef;
            if (k != s.slack_bus) b.lp.A(r, s.u(t, k)) -= coef;
        }
        if (s.coupling) {
            for (int g = 0; g < s.NG; ++g) {
                int r = b.add_row(-kInf, 0);  // k_g * P_g <= c
                b.lp.A(r, s.gen(t, g)) = s.gens[g].k_robust;
                b.lp.A(r, s.ray(t)) = -1;
            }
        }
    }

    for (int e = 0; e < s.E; ++e) {
        const EssUnit& u = m.ess_units[e];
        const Scalar denom = u.eta * m.dt;
        for (int t = 0; t < s.T; ++t) {
            int r = b.add_row((u.e_init - u.e_max) / denom, (u.e_init - u.e_min) / denom);
            for (int tau = 0; tau <= t; ++tau) b.lp.A(r, s.ess(tau, e)) = 1;
        }
    }
    if (opt.cycle_constraint) {
        for (int e = 0; e < s.E; ++e) {
            int r = b.add_row(0, 0);
            for (int t = 0; t < s.T; ++t) b.lp.A(r, s.ess(t, e)) = 1;
        }
    }
}

DispatchPlan extract_plan(const NetworkModel& m, const Stage1Layout& s, const LpSolution& sol) {
    DispatchPlan plan;
    plan.status = sol.status;
    plan.lp_iterations = sol.iterations;
    plan.objective = sol.objective;
    plan.complementarity_residual = std::max(sol.complementarity, sol.dual_residual);
    if (sol.status != LpStatus::optimal) return plan;
    const int G = static_cast<int>(m.generators.size());
    plan.served_mw = Matrix::Zero(s.T, s.L);
    plan.gen_mw = Matrix::Zero(s.T, G);
    plan.ess_mw = Matrix::Zero(s.T, s.E);
    plan.slack_mw = Vector::Zero(s.T);
    for (int t = 0; t < s.T; ++t) {
        for (int l = 0; l < s.L; ++l) plan.served_mw(t, l) = sol.x[s.served(t, l)];
        for (int g = 0; g < s.NG; ++g)
            for (int unit : s.gens[g].units) plan.gen_mw(t, unit) = sol.x[s.gen(t, g)];
        for (int e = 0; e < s.E; ++e) plan.ess_mw(t, e) = sol.x[s.ess(t, e)];
        plan.slack_mw[t] = sol.x[s.slack(t)];
        for (int l = 0; l < s.L; ++l)
            plan.weighted_served_total += m.weight(m.loads[l].cls) * plan.served_mw(t, l) * m.dt;
    }
    return plan;
}

}  // namespace

DispatchPlan solve_deterministic(const NetworkModel& model, const BaselineOptions& options) {
    ValidationReport rep = validate(model);
    if (!rep.ok()) throw ValidationError("invalid model:\n" + rep.to_string());
    const auto t0 = std::chrono::steady_clock::now();

    auto gens = per_generator_columns(model);
    Stage1Layout s(model, gens, options.robustness_coupling);
    LpBuilder b(s.rows(options.cycle_constraint), s.cols());
    build_stage1(b, s, options);

    LpSolution sol = solve_lp(b.lp, options.lp);
    DispatchPlan plan = extract_plan(model, s, sol);
    plan.solve_seconds =
        std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0).count();
    return plan;
}

// ---------------------------------------------------------------------------
// Scenario-based plan
// ---------------------------------------------------------------------------

namespace {

// Retained scenarios whose failed units agree as a multiset of unit types see
// the same committed supply, so they share one recourse block.
struct ScenarioGroups {
    std::vector<int> group_of;                   // per retained scenario
    std::vector<std::vector<int>> avail_count;   // per group: available units per gen column
    std::vector<Scalar> probability;             // per group: summed normalized weight
    int reference = 0;                           // group holding the most probable scenario
    int size() const { return static_cast<int>(probability.size()); }
};

ScenarioGroups group_scenarios(const NetworkModel& m, const std::vector<GenColumn>& cols,
                               const ScenarioSet& set) {
    ScenarioGroups g;
    Vector w = set.weights();
    std::map<std::vector<int>, int> seen;
    std::vector<int> type_of(m.generators.size(), -1);
    for (std::size_t c = 0; c < cols.size(); ++c)
        for (int unit : cols[c].units) type_of[unit] = static_cast<int>(c);

    Scalar best_prob = -1;
    int best_scenario = 0;
    for (int sidx = 0; sidx < set.size(); ++sidx) {
        const Scenario& sc = set.scenarios[sidx];
        std::vector<int> avail(cols.size(), 0);
        for (std::size_t u = 0; u < m.generators.size(); ++u)
            if (u >= sc.mask.size() || !sc.mask[u]) ++avail[type_of[u]];
        auto it = seen.find(avail);
        if (it == seen.end()) {
            it = seen.emplace(avail, g.size()).first;
            g.avail_count.push_back(avail);
            g.probability.push_back(0);
        }
        g.group_of.push_back(it->second);
        g.probability[it->second] += w[sidx];
        if (w[sidx] > best_prob) {
            best_prob = w[sidx];
            best_scenario = sidx;
        }
    }
    g.reference = g.group_of[best_scenario];
    return g;
}

}  // namespace

ScenarioPlanResult solve_scenario_based(const NetworkModel& model, const ScenarioSet& set,
                                        Scalar alpha, const BaselineOptions& options) {
    if (set.scenarios.empty()) throw ValidationError("empty scenario set");
    if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha must be in (0,1)");
    ValidationReport vrep = validate(model);
    if (!vrep.ok()) throw ValidationError("invalid model:\n" + vrep.to_string());
    const auto t0 = std::chrono::steady_clock::now();

    auto gens = per_type_columns(model);
    Stage1Layout s(model, gens, options.robustness_coupling);
    ScenarioGroups groups = group_scenarios(model, gens, set);
    const int NS = groups.size();
    const int T = s.T;
    const int ref = groups.reference;

    Matrix class_demand = Matrix::Zero(3, T);
    for (int l = 0; l < s.L; ++l)
        for (int t = 0; t < T; ++t)
            class_demand(class_index(model.loads[l].cls), t) += model.load_p(l, t);

    Scalar w_max = 0;
    for (int t = 0; t < T; ++t)
        for (int cls = 0; cls < 3; ++cls)
            w_max += class_weight(model, cls) * class_demand(cls, t) * model.dt;
    const Scalar beta_box = 2 * w_max + 1;

    // recourse service columns exist for every non-reference group; the
    // reference group's service is the committed dispatch itself
    std::vector<int> rs_base(NS, -1);
    int n_total = s.cols();
    for (int g = 0; g < NS; ++g) {
        if (g == ref) continue;
        rs_base[g] = n_total;
        n_total += 3 * T;
    }
    const int beta_col = n_total;
    const int z_base = beta_col + 1;
    n_total += 1 + NS;
    auto rs_col = [&](int g, int t, int cls) { return rs_base[g] + t * 3 + cls; };

    const int m_total = s.rows(options.cycle_constraint) + (NS - 1) * T + NS;
    LpBuilder b(m_total, n_total);
    build_stage1(b, s, options);

    const Scalar slack_max = model.buses[s.slack_bus].slack_p_max;

    for (int g = 0; g < NS; ++g) {
        if (g == ref) continue;
        for (int t = 0; t < T; ++t) {
            for (int cls = 0; cls < 3; ++cls) {
                int j = rs_col(g, t, cls);
                b.lp.lo[j] = 0;
                b.lp.hi[j] = class_demand(cls, t);
            }
            // service under the scenario is limited by the committed supply
            // that survives it: available units, storage, slack headroom
            int r = b.add_row(-kInf, slack_max);
            for (int cls = 0; cls < 3; ++cls) b.lp.A(r, rs_col(g, t, cls)) = 1;
            for (int gc = 0; gc < s.NG; ++gc)
                if (groups.avail_count[g][gc] > 0)
                    b.lp.A(r, s.gen(t, gc)) = -static_cast<Scalar>(groups.avail_count[g][gc]);
            for (int e = 0; e < s.E; ++e) b.lp.A(r, s.ess(t, e)) = -1;
        }
    }

    // weighted service of group g as column coefficients
    auto add_w_terms = [&](int r, int g, Scalar factor) {
        if (g == ref) {
            for (int t = 0; t < T; ++t)
                for (int l = 0; l < s.L; ++l)
                    b.lp.A(r, s.served(t, l)) +=
                        factor * model.weight(model.loads[l].cls) * model.dt;
        } else {
            for (int t = 0; t < T; ++t)
                for (int cls = 0; cls < 3; ++cls)
                    b.lp.A(r, rs_col(g, t, cls)) += factor * class_weight(model, cls) * model.dt;
        }
    };

    b.lp.lo[beta_col] = -beta_box;
    b.lp.hi[beta_col] = beta_box;
    for (int g = 0; g < NS; ++g) {
        b.lp.lo[z_base + g] = 0;
        b.lp.hi[z_base + g] = 2 * beta_box;
    }
    // z_g >= E[W] - W_g - beta
    for (int g = 0; g < NS; ++g) {
        int r = b.add_row(0, kInf);
        b.lp.A(r, z_base + g) = 1;
        b.lp.A(r, beta_col) = 1;
        add_w_terms(r, g, 1.0);
        for (int g2 = 0; g2 < NS; ++g2) add_w_terms(r, g2, -groups.probability[g2]);
    }

    // objective: minimize -E[W] + cvar_weight * (beta + sum p z / (1-alpha)),
    // keeping the ray pin from stage 1
    for (int t = 0; t < T; ++t)
        for (int l = 0; l < s.L; ++l)
            b.lp.c[s.served(t, l)] =
                -groups.probability[ref] * model.weight(model.loads[l].cls) * model.dt;
    for (int g = 0; g < NS; ++g) {
        if (g == ref) continue;
        for (int t = 0; t < T; ++t)
            for (int cls = 0; cls < 3; ++cls)
                b.lp.c[rs_col(g, t, cls)] =
                    -groups.probability[g] * class_weight(model, cls) * model.dt;
    }
    const Scalar lam = options.cvar_weight;
    b.lp.c[beta_col] = lam;
    for (int g = 0; g < NS; ++g) b.lp.c[z_base + g] = lam * groups.probability[g] / (1 - alpha);

    LpSolution sol = solve_lp(b.lp, options.lp);

    ScenarioPlanResult out;
    out.plan = extract_plan(model, s, sol);
    out.plan.solve_seconds =
        std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0).count();
    if (sol.status != LpStatus::optimal) return out;

    Vector w_group(NS);
    for (int g = 0; g < NS; ++g) {
        Scalar wg = 0;
        if (g == ref) {
            wg = out.plan.weighted_served_total;
        } else {
            for (int t = 0; t < T; ++t)
                for (int cls = 0; cls < 3; ++cls)
                    wg += class_weight(model, cls) * sol.x[rs_col(g, t, cls)] * model.dt;
        }
        w_group[g] = wg;
    }
    out.per_scenario_served.resize(set.size());
    for (int i = 0; i < set.size(); ++i)
        out.per_scenario_served[i] = w_group[groups.group_of[i]];

    out.risk = risk_report(
        set, [&](const Scenario&, int idx) { return out.per_scenario_served[idx]; }, alpha);

    // refit the inner epigraph exactly; by the Rockafellar-Uryasev identity
    // this equals the CVaR of the plan's own losses
    Vector losses(set.size());
    for (int i = 0; i < set.size(); ++i) losses[i] = out.risk.per_scenario_loss[i].loss;
    Vector probs = set.weights();
    Scalar beta = var_alpha(losses, probs, alpha);
    Scalar tail = 0;
    for (int i = 0; i < set.size(); ++i)
        tail += probs[i] * std::max<Scalar>(0, losses[i] - beta);
    out.epigraph_cvar = beta + tail / (1 - alpha);
    return out;
}

Scalar plan_served_under_scenario(const NetworkModel& model, const DispatchPlan& plan,
                                  const Scenario& scenario) {
    if (plan.status != LpStatus::optimal) throw ValidationError("plan is not optimal");
    const int T = model.horizon;
    const int slack_bus = model.slack_index();
    const Scalar slack_max = model.buses[slack_bus].slack_p_max;
    Scalar total = 0;
    for (int t = 0; t < T; ++t) {
        Scalar supply = slack_max;
        for (std::size_t g = 0; g < model.generators.size(); ++g)
            if (g >= scenario.mask.size() || !scenario.mask[g]) supply += plan.gen_mw(t, g);
        for (Index e = 0; e < plan.ess_mw.cols(); ++e) supply += plan.ess_mw(t, e);
        supply = std::max<Scalar>(0, supply);

        Scalar committed[3] = {0, 0, 0};
        for (Index l = 0; l < plan.served_mw.cols(); ++l)
            committed[class_index(model.loads[l].cls)] += plan.served_mw(t, l);
        for (int cls = 0; cls < 3; ++cls) {
            Scalar serve = std::min(committed[cls], supply);
            total += class_weight(model, cls) * serve * model.dt;
            supply -= serve;
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Exhaustive oracle
// ---------------------------------------------------------------------------

namespace {

struct OracleComponent {
    std::vector<int> gens, ess, loads;
    bool has_slack = false;
};

std::vector<OracleComponent> components_of(const NetworkModel& m) {
    const int nb = static_cast<int>(m.buses.size());
    std::vector<int> comp(nb, -1);
    int nc = 0;
    for (int start = 0; start < nb; ++start) {
        if (comp[start] >= 0) continue;
        std::vector<int> stack{start};
        comp[start] = nc;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (const auto& l : m.lines) {
                int a = m.bus_index(l.from_bus), bb = m.bus_index(l.to_bus);
                if (a == u && comp[bb] < 0) { comp[bb] = nc; stack.push_back(bb); }
                if (bb == u && comp[a] < 0) { comp[a] = nc; stack.push_back(a); }
            }
        }
        ++nc;
    }
    std::vector<OracleComponent> out(nc);
    for (std::size_t g = 0; g < m.generators.size(); ++g)
        out[comp[m.bus_index(m.generators[g].bus)]].gens.push_back(static_cast<int>(g));
    for (std::size_t e = 0; e < m.ess_units.size(); ++e)
        out[comp[m.bus_index(m.ess_units[e].bus)]].ess.push_back(static_cast<int>(e));
    for (std::size_t l = 0; l < m.loads.size(); ++l)
        out[comp[m.bus_index(m.loads[l].bus)]].loads.push_back(static_cast<int>(l));
    int sl = m.slack_index();
    if (sl >= 0) out[comp[sl]].has_slack = true;
    return out;
}

}  // namespace

DispatchPlan brute_force_oracle(const NetworkModel& model, int grid_resolution) {
    if (model.buses.size() > 3) throw ValidationError("oracle: at most 3 buses");
    if (grid_resolution < 2) throw ValidationError("oracle: grid resolution must be >= 2");
    const int T = model.horizon;
    const int E = static_cast<int>(model.ess_units.size());
    const int G = static_cast<int>(model.generators.size());
    const int L = static_cast<int>(model.loads.size());
    const int sl = model.slack_index();

    // copper-plate validity inside each component: no line can ever saturate
    Scalar turnover = 0;
    for (const auto& g : model.generators) turnover += g.p_max;
    for (const auto& e : model.ess_units) turnover += std::max(e.c_max, e.d_max);
    if (sl >= 0)
        turnover += std::max(std::abs(model.buses[sl].slack_p_min),
                             std::abs(model.buses[sl].slack_p_max));
    for (const auto& l : model.loads) turnover += l.p_profile.maxCoeff();
    for (const auto& ln : model.lines)
        if (ln.p_lim < turnover)
            throw ValidationError("oracle: line limits may bind; the grid oracle needs "
                                  "copper-plate headroom");

    const int dims = T + (T - 1) * E;  // ray level per interval + free storage steps
    if (std::pow(static_cast<Scalar>(grid_resolution), dims) > 4e7)
        throw ValidationError("oracle: state space cap exceeded");

    Scalar c_hi = 0;
    for (const auto& g : model.generators) c_hi = std::max(c_hi, g.k_robust * g.p_max);

    auto comps = components_of(model);

    auto evaluate = [&](const Vector& x, DispatchPlan* fill) -> Scalar {
        Matrix ess(T, std::max(E, 1));
        for (int e = 0; e < E; ++e) {
            Scalar sum = 0;
            for (int t = 0; t < T - 1; ++t) {
                ess(t, e) = x[T + t * E + e];
                sum += ess(t, e);
            }
            ess(T - 1, e) = -sum;  // the final step closes the cycle
            const EssUnit& u = model.ess_units[e];
            if (ess(T - 1, e) < -u.c_max - 1e-9 || ess(T - 1, e) > u.d_max + 1e-9) return -kInf;
            Scalar energy = u.e_init;
            for (int t = 0; t < T; ++t) {
                energy -= u.eta * ess(t, e) * model.dt;
                if (energy < u.e_min - 1e-9 || energy > u.e_max + 1e-9) return -kInf;
            }
        }
        Scalar total = 0;
        Matrix served = fill ? Matrix::Zero(T, L) : Matrix();
        for (int t = 0; t < T; ++t) {
            for (const auto& comp : comps) {
                Scalar lo = 0, hi = 0;
                for (int g : comp.gens) {
                    const Generator& gen = model.generators[g];
                    hi += std::clamp(x[t] / gen.k_robust, gen.p_min, gen.p_max);
                    lo += gen.p_min;
                }
                for (int e : comp.ess) {
                    lo += ess(t, e);
                    hi += ess(t, e);
                }
                if (comp.has_slack) {
                    lo += model.buses[sl].slack_p_min;
                    hi += model.buses[sl].slack_p_max;
                }
                Scalar demand = 0;
                for (int l : comp.loads) demand += model.load_p(l, t);
                if (lo > demand + 1e-9) return -kInf;  // forced injection cannot be absorbed
                Scalar supply = std::max<Scalar>(0, std::min(hi, demand));
                for (int cls = 0; cls < 3 && supply > 1e-12; ++cls) {
                    for (int l : comp.loads) {
                        if (class_index(model.loads[l].cls) != cls) continue;
                        Scalar take = std::min(supply, model.load_p(l, t));
                        total += class_weight(model, cls) * take * model.dt;
                        supply -= take;
                        if (fill) served(t, l) = take;
                        if (supply <= 1e-12) break;
                    }
                }
            }
        }
        if (fill) {
            fill->served_mw = served;
            fill->ess_mw = ess.leftCols(E);
            fill->gen_mw = Matrix::Zero(T, G);
            for (int t = 0; t < T; ++t)
                for (int g = 0; g < G; ++g)
                    fill->gen_mw(t, g) = std::clamp(x[t] / model.generators[g].k_robust,
                                                    model.generators[g].p_min,
                                                    model.generators[g].p_max);
            fill->slack_mw = Vector::Zero(T);
            fill->weighted_served_total = total;
        }
        return total;
    };

    Vector lo(dims), hi(dims);
    for (int t = 0; t < T; ++t) {
        lo[t] = 0;
        hi[t] = c_hi;
    }
    for (int t = 0; t < T - 1; ++t)
        for (int e = 0; e < E; ++e) {
            lo[T + t * E + e] = -model.ess_units[e].c_max;
            hi[T + t * E + e] = model.ess_units[e].d_max;
        }

    Vector x = lo, best_x = lo;
    Scalar best = -kInf;
    std::vector<int> idx(dims, 0);
    bool done = false;
    while (!done) {
        for (int d = 0; d < dims; ++d)
            x[d] = lo[d] + (hi[d] - lo[d]) * idx[d] / (grid_resolution - 1);
        Scalar v = evaluate(x, nullptr);
        if (v > best) {
            best = v;
            best_x = x;
        }
        done = true;
        for (int d = 0; d < dims && done; ++d) {
            if (++idx[d] < grid_resolution) done = false;
            else idx[d] = 0;
        }
    }

    DispatchPlan plan;
    if (best == -kInf) {
        plan.status = LpStatus::infeasible;
        return plan;
    }

    // shrinking compass polish from the best grid point
    Vector step = (hi - lo) / (grid_resolution - 1);
    x = best_x;
    for (int round = 0; round < 400; ++round) {
        bool improved = false;
        for (int d = 0; d < dims; ++d) {
            for (Scalar sgn : {1.0, -1.0}) {
                Vector y = x;
                y[d] = std::clamp(y[d] + sgn * step[d], lo[d], hi[d]);
                Scalar v = evaluate(y, nullptr);
                if (v > best + 1e-12) {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if (!improved) {
            step /= 2;
            if (step.maxCoeff() < 1e-10 * std::max<Scalar>(1, hi.maxCoeff())) break;
        }
    }

    plan.status = LpStatus::optimal;
    evaluate(x, &plan);
    plan.objective = -plan.weighted_served_total;
    return plan;
}

}  // namespace ems
