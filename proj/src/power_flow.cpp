#include "ems/power_flow.hpp"

#include <algorithm>
#include <cmath>

namespace ems {

const char* to_string(ConstraintKind k) {
    switch (k) {
        case ConstraintKind::v: return "v";
        case ConstraintKind::theta: return "theta";
        case ConstraintKind::line_p: return "line_p";
        case ConstraintKind::line_q: return "line_q";
        case ConstraintKind::gen_p: return "gen_p";
        case ConstraintKind::gen_q: return "gen_q";
        case ConstraintKind::slack: return "slack";
    }
    return "?";
}

Scalar ViolationSet::sum(ConstraintKind k) const {
    Scalar s = 0;
    for (const auto& v : items)
        if (v.kind == k) s += v.excess;
    return s;
}

namespace {

// Buses in the slack's connected component, in index order.
std::vector<int> active_buses(const NetworkModel& m, const std::vector<int>& islanded) {
    std::vector<char> off(m.buses.size(), 0);
    for (int i : islanded) off[i] = 1;
    std::vector<int> act;
    for (std::size_t i = 0; i < m.buses.size(); ++i)
        if (!off[i]) act.push_back(static_cast<int>(i));
    return act;
}

}  // namespace

PowerFlowSolution solve_dc(const NetworkModel& model, const Vector& p_injections_mw,
                           const PowerFlowOptions& options) {
    const int n = static_cast<int>(model.buses.size());
    if (p_injections_mw.size() != n)
        throw ValidationError("injection vector length must equal the bus count");
    const int slack = model.slack_index();
    if (slack < 0) throw ValidationError("no slack bus in the model");

    PowerFlowSolution sol;
    sol.islanded_buses = islanded_buses(model);
    sol.v = Vector::Zero(n);
    sol.theta = Vector::Zero(n);

    // admittance over the full model; islanded rows are excluded below
    Matrix G = Matrix::Zero(n, n);
    for (const auto& l : model.lines) {
        int a = model.bus_index(l.from_bus), b = model.bus_index(l.to_bus);
        G(a, a) += l.g;
        G(b, b) += l.g;
        G(a, b) -= l.g;
        G(b, a) -= l.g;
    }

    auto act = active_buses(model, sol.islanded_buses);
    std::vector<int> unknowns;  // active non-slack buses
    for (int b : act)
        if (b != slack) unknowns.push_back(b);
    const int nu = static_cast<int>(unknowns.size());

    Vector p_spec = p_injections_mw / model.base_mva;  // p.u.
    for (int b : act) sol.v[b] = 1.0;

    // Newton on f_i = P_spec_i - V_i * sum_k G_ik V_k over the unknowns
    Vector f(nu);
    Matrix J(nu, nu);
    bool converged = false;
    int iter = 0;
    Scalar mismatch = 0;
    for (; iter < options.max_iterations; ++iter) {
        for (int r = 0; r < nu; ++r) {
            int i = unknowns[r];
            Scalar acc = 0;
            for (int c : act) acc += G(i, c) * sol.v[c];
            f[r] = p_spec[i] - sol.v[i] * acc;
        }
        mismatch = nu ? f.cwiseAbs().maxCoeff() : 0.0;
        if (!std::isfinite(mismatch)) break;
        if (mismatch < options.tolerance) {
            converged = true;
            break;
        }
        for (int r = 0; r < nu; ++r) {
            int i = unknowns[r];
            Scalar acc = 0;
            for (int c : act) acc += G(i, c) * sol.v[c];
            for (int cidx = 0; cidx < nu; ++cidx) {
                int j = unknowns[cidx];
                J(r, cidx) = sol.v[i] * G(i, j) + (i == j ? acc : 0.0);
            }
        }
        Eigen::PartialPivLU<Matrix> lu(J);
        Vector dv = lu.solve(f);
        if (!dv.allFinite()) break;
        for (int r = 0; r < nu; ++r) sol.v[unknowns[r]] += dv[r];
    }
    sol.converged = converged;
    sol.iterations = iter;
    sol.max_mismatch = mismatch;

    // residual balance at the slack beyond its dispatched injection
    Scalar acc = 0;
    for (int c : act) acc += G(slack, c) * sol.v[c];
    sol.p_slack = (sol.v[slack] * acc - p_spec[slack]) * model.base_mva;

    auto [lp, lq] = line_flows(model, sol);
    sol.line_p = std::move(lp);
    sol.line_q = std::move(lq);
    return sol;
}

PowerFlowSolution solve_ac(const NetworkModel& model, const Vector& p_injections_mw,
                           const Vector& q_injections_mvar, const PowerFlowOptions& options) {
    const int n = static_cast<int>(model.buses.size());
    if (p_injections_mw.size() != n || q_injections_mvar.size() != n)
        throw ValidationError("injection vector length must equal the bus count");
    const int slack = model.slack_index();
    if (slack < 0) throw ValidationError("no slack bus in the model");

    PowerFlowSolution sol;
    sol.islanded_buses = islanded_buses(model);
    sol.v = Vector::Zero(n);
    sol.theta = Vector::Zero(n);

    Matrix G = Matrix::Zero(n, n), B = Matrix::Zero(n, n);
    for (const auto& l : model.lines) {
        int a = model.bus_index(l.from_bus), b = model.bus_index(l.to_bus);
        G(a, a) += l.g;
        G(b, b) += l.g;
        G(a, b) -= l.g;
        G(b, a) -= l.g;
        B(a, a) += l.b;
        B(b, b) += l.b;
        B(a, b) -= l.b;
        B(b, a) -= l.b;
    }

    auto act = active_buses(model, sol.islanded_buses);
    std::vector<int> unk;
    for (int b : act)
        if (b != slack) unk.push_back(b);
    const int nu = static_cast<int>(unk.size());

    Vector p_spec = p_injections_mw / model.base_mva;
    Vector q_spec = q_injections_mvar / model.base_mva;
    for (int b : act) sol.v[b] = 1.0;  // flat start

    const Scalar qs = options.paper_q_sign ? 1.0 : -1.0;  // sign of the B cos term

    auto injections = [&](int i, Scalar& pi, Scalar& qi) {
        pi = 0;
        qi = 0;
        for (int k : act) {
            Scalar th = sol.theta[i] - sol.theta[k];
            Scalar vv = sol.v[i] * sol.v[k];
            pi += vv * (G(i, k) * std::cos(th) + B(i, k) * std::sin(th));
            qi += vv * (G(i, k) * std::sin(th) + qs * B(i, k) * std::cos(th));
        }
    };

    // unknown ordering: [theta(unk) | v(unk)]; mismatch ordering: [dP | dQ]
    Vector f(2 * nu);
    Matrix J(2 * nu, 2 * nu);
    bool converged = false;
    int iter = 0;
    Scalar mismatch = 0;
    for (; iter < options.max_iterations; ++iter) {
        for (int r = 0; r < nu; ++r) {
            Scalar pi, qi;
            injections(unk[r], pi, qi);
            f[r] = p_spec[unk[r]] - pi;
            f[nu + r] = q_spec[unk[r]] - qi;
        }
        mismatch = nu ? f.cwiseAbs().maxCoeff() : 0.0;
        if (!std::isfinite(mismatch)) break;
        if (mismatch < options.tolerance) {
            converged = true;
            break;
        }

        for (int r = 0; r < nu; ++r) {
            int i = unk[r];
            Scalar dp_dthi = 0, dq_dthi = 0, dp_dvi = 0, dq_dvi = 0;
            for (int k : act) {
                Scalar th = sol.theta[i] - sol.theta[k];
                Scalar c = std::cos(th), s = std::sin(th);
                if (k != i) {
                    dp_dthi += sol.v[i] * sol.v[k] * (-G(i, k) * s + B(i, k) * c);
                    dq_dthi += sol.v[i] * sol.v[k] * (G(i, k) * c - qs * B(i, k) * s);
                }
                dp_dvi += sol.v[k] * (G(i, k) * c + B(i, k) * s);
                dq_dvi += sol.v[k] * (G(i, k) * s + qs * B(i, k) * c);
            }
            dp_dvi += sol.v[i] * G(i, i);
            dq_dvi += qs * sol.v[i] * B(i, i);

            for (int cc = 0; cc < nu; ++cc) {
                int j = unk[cc];
                if (j == i) {
                    J(r, cc) = dp_dthi;
                    J(r, nu + cc) = dp_dvi;
                    J(nu + r, cc) = dq_dthi;
                    J(nu + r, nu + cc) = dq_dvi;
                } else {
                    Scalar th = sol.theta[i] - sol.theta[j];
                    Scalar c = std::cos(th), s = std::sin(th);
                    Scalar vv = sol.v[i] * sol.v[j];
                    J(r, cc) = vv * (G(i, j) * s - B(i, j) * c);
                    J(r, nu + cc) = sol.v[i] * (G(i, j) * c + B(i, j) * s);
                    J(nu + r, cc) = vv * (-G(i, j) * c + qs * B(i, j) * s);
                    J(nu + r, nu + cc) = sol.v[i] * (G(i, j) * s + qs * B(i, j) * c);
                }
            }
        }
        // J is d(calc)/d(x); f = spec - calc, so solve J dx = f
        Eigen::PartialPivLU<Matrix> lu(J);
        Vector dx = lu.solve(f);
        if (!dx.allFinite()) break;
        for (int r = 0; r < nu; ++r) {
            sol.theta[unk[r]] += dx[r];
            sol.v[unk[r]] += dx[nu + r];
        }
    }
    sol.converged = converged;
    sol.iterations = iter;
    sol.max_mismatch = mismatch;

    Scalar pi, qi;
    injections(slack, pi, qi);
    sol.p_slack = (pi - p_spec[slack]) * model.base_mva;
    sol.q_slack = (qi - q_spec[slack]) * model.base_mva;

    auto [lp, lq] = line_flows(model, sol);
    sol.line_p = std::move(lp);
    sol.line_q = std::move(lq);
    return sol;
}

std::pair<Vector, Vector> line_flows(const NetworkModel& model, const PowerFlowSolution& sol) {
    const int nl = static_cast<int>(model.lines.size());
    Vector lp = Vector::Zero(nl), lq = Vector::Zero(nl);
    const bool dc = model.kind == NetworkKind::dc;
    for (int e = 0; e < nl; ++e) {
        const Line& l = model.lines[e];
        int a = model.bus_index(l.from_bus), b = model.bus_index(l.to_bus);
        Scalar vi = sol.v[a], vk = sol.v[b];
        if (dc) {
            lp[e] = vi * (vi - vk) * l.g * model.base_mva;
        } else {
            Scalar th = sol.theta[a] - sol.theta[b];
            Scalar c = std::cos(th), s = std::sin(th);
            // series-element flow: S_ik for y = g + jb between i and k
            lp[e] = (vi * vi * l.g - vi * vk * (l.g * c + l.b * s)) * model.base_mva;
            lq[e] = (-vi * vi * l.b - vi * vk * (l.g * s - l.b * c)) * model.base_mva;
        }
    }
    return {lp, lq};
}

ViolationSet check_limits(const NetworkModel& model, const PowerFlowSolution& sol,
                          const DispatchSetpoints& dispatch) {
    ViolationSet out;
    std::vector<char> off(model.buses.size(), 0);
    for (int i : sol.islanded_buses) off[i] = 1;

    const int nb = static_cast<int>(model.buses.size());
    for (int i = 0; i < nb; ++i) {
        if (off[i]) continue;
        const Bus& b = model.buses[i];
        if (sol.v[i] < b.v_min)
            out.items.push_back({ConstraintKind::v, i, b.v_min - sol.v[i]});
        else if (sol.v[i] > b.v_max)
            out.items.push_back({ConstraintKind::v, i, sol.v[i] - b.v_max});
    }
    if (model.kind == NetworkKind::ac) {
        for (int i = 0; i < nb; ++i) {
            if (off[i]) continue;
            const Bus& b = model.buses[i];
            if (sol.theta[i] < b.theta_min)
                out.items.push_back({ConstraintKind::theta, i, b.theta_min - sol.theta[i]});
            else if (sol.theta[i] > b.theta_max)
                out.items.push_back({ConstraintKind::theta, i, sol.theta[i] - b.theta_max});
        }
    }
    const int nl = static_cast<int>(model.lines.size());
    for (int e = 0; e < nl; ++e) {
        Scalar ex = std::abs(sol.line_p[e]) - model.lines[e].p_lim;
        if (ex > 0) out.items.push_back({ConstraintKind::line_p, e, ex});
    }
    if (model.kind == NetworkKind::ac) {
        for (int e = 0; e < nl; ++e) {
            Scalar ex = std::abs(sol.line_q[e]) - model.lines[e].q_lim;
            if (ex > 0) out.items.push_back({ConstraintKind::line_q, e, ex});
        }
    }
    const int ng = static_cast<int>(model.generators.size());
    for (int g = 0; g < ng && g < dispatch.gen_p.size(); ++g) {
        const Generator& gen = model.generators[g];
        if (dispatch.gen_p[g] < gen.p_min)
            out.items.push_back({ConstraintKind::gen_p, g, gen.p_min - dispatch.gen_p[g]});
        else if (dispatch.gen_p[g] > gen.p_max)
            out.items.push_back({ConstraintKind::gen_p, g, dispatch.gen_p[g] - gen.p_max});
    }
    for (int g = 0; g < ng && g < dispatch.gen_q.size(); ++g) {
        const Generator& gen = model.generators[g];
        if (dispatch.gen_q[g] < gen.q_min)
            out.items.push_back({ConstraintKind::gen_q, g, gen.q_min - dispatch.gen_q[g]});
        else if (dispatch.gen_q[g] > gen.q_max)
            out.items.push_back({ConstraintKind::gen_q, g, dispatch.gen_q[g] - gen.q_max});
    }
    int s = model.slack_index();
    if (s >= 0) {
        const Bus& b = model.buses[s];
        if (sol.p_slack < b.slack_p_min)
            out.items.push_back({ConstraintKind::slack, s, b.slack_p_min - sol.p_slack});
        else if (sol.p_slack > b.slack_p_max)
            out.items.push_back({ConstraintKind::slack, s, sol.p_slack - b.slack_p_max});
    }
    std::stable_sort(out.items.begin(), out.items.end(), [](const Violation& a, const Violation& b) {
        if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
        return a.id < b.id;
    });
    return out;
}

}  // namespace ems
