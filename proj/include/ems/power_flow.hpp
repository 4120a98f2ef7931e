#pragma once

#include "ems/grid_model.hpp"

namespace ems {

struct PowerFlowOptions {
    Scalar tolerance = 1e-8;  // p.u. mismatch
    int max_iterations = 50;
    /// Reproduces the nonstandard reactive mismatch form
    /// Q_i = sum V_i V_k (G sin + B cos) instead of (G sin - B cos).
    bool paper_q_sign = false;
};

struct PowerFlowSolution {
    Vector v;           // p.u. per bus
    Vector theta;       // rad per bus, all-zero for dc
    Scalar p_slack = 0; // MW absorbed at the slack bus beyond its dispatched injection
    Scalar q_slack = 0; // MVAr (ac)
    Vector line_p;      // MW, measured at the from-bus
    Vector line_q;      // MVAr
    bool converged = false;
    int iterations = 0;
    Scalar max_mismatch = 0;  // p.u.
    std::vector<int> islanded_buses;  // loads there are unservable
};

enum class ConstraintKind { v, theta, line_p, line_q, gen_p, gen_q, slack };
const char* to_string(ConstraintKind k);

struct Violation {
    ConstraintKind kind;
    int id;         // bus/line/generator index
    Scalar excess;  // magnitude beyond the bound, natural units (p.u., rad, MW, MVAr)
};

struct ViolationSet {
    std::vector<Violation> items;
    bool empty() const { return items.empty(); }
    Scalar sum(ConstraintKind k) const;
};

struct DispatchSetpoints {
    Vector gen_p;  // MW per generator
    Vector gen_q;  // MVAr per generator (may be empty for dc)
};

/// Newton iteration on the resistive injection equations with the slack bus
/// voltage fixed at 1.0 p.u. `p_injections_mw` is per bus; the slack entry is
/// treated as a dispatched injection and the residual balance is reported as
/// p_slack. Buses islanded from the slack are excluded and flagged.
PowerFlowSolution solve_dc(const NetworkModel& model, const Vector& p_injections_mw,
                           const PowerFlowOptions& options = {});

/// Newton-Raphson in polar form from a flat start; every non-slack bus is PQ.
PowerFlowSolution solve_ac(const NetworkModel& model, const Vector& p_injections_mw,
                           const Vector& q_injections_mvar, const PowerFlowOptions& options = {});

/// Branch flows from terminal voltages, MW/MVAr at the from-bus side.
std::pair<Vector, Vector> line_flows(const NetworkModel& model, const PowerFlowSolution& solution);

/// One entry per violated bound with its excess, ordered by (kind, id).
ViolationSet check_limits(const NetworkModel& model, const PowerFlowSolution& solution,
                          const DispatchSetpoints& dispatch);

}  // namespace ems
