#pragma once

#include "ems/types.hpp"

#include <vector>

namespace ems {

/// Dense linear program in range form:
///
///   minimize    c . x
///   subject to  row_lo <= A x <= row_hi
///               lo     <=   x <= hi
///
/// Equality rows have row_lo == row_hi. Bounds may be +-infinity, but every
/// variable the solver is expected to price in must have at least one finite
/// bound (free variables are given large working bounds by the caller).
struct LinearProgram {
    Matrix A;
    Vector c;
    Vector lo, hi;          // n
    Vector row_lo, row_hi;  // m

    Index rows() const { return A.rows(); }
    Index cols() const { return A.cols(); }
    void validate() const;  // throws ValidationError on malformed shapes/bounds
};

enum class LpStatus { optimal, infeasible, iteration_limit };
const char* to_string(LpStatus s);

struct LpOptions {
    long max_iterations = 0;  // 0 = automatic (200 * (m + n) + 5000)
    Scalar tolerance = 1e-9;  // reduced-cost / feasibility tolerance
};

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    Vector x;
    Scalar objective = 0;
    long iterations = 0;
    Vector duals;          // one multiplier per row
    Vector reduced_costs;  // structural variables
    /// Optimality certificate residuals (see check_certificate).
    Scalar primal_residual = 0;
    Scalar dual_residual = 0;
    Scalar complementarity = 0;
};

/// Two-phase bounded-variable primal simplex on a dense tableau. Pivoting is
/// deterministic: Dantzig pricing with lowest-index tie-breaks, falling back
/// to Bland's rule after a degenerate streak to guarantee termination.
LpSolution solve_lp(const LinearProgram& lp, const LpOptions& options = {});

/// Recomputes primal/dual/complementarity residuals of a solution against the
/// program; used by callers as an independent optimality certificate.
void check_certificate(const LinearProgram& lp, LpSolution& solution);

}  // namespace ems
