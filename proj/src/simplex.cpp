#include "ems/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ems {

const char* to_string(LpStatus s) {
    switch (s) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::iteration_limit: return "iteration-limit";
    }
    return "?";
}

void LinearProgram::validate() const {
    const Index m = A.rows(), n = A.cols();
    if (c.size() != n || lo.size() != n || hi.size() != n)
        throw ValidationError("lp: column vector sizes do not match A");
    if (row_lo.size() != m || row_hi.size() != m)
        throw ValidationError("lp: row bound sizes do not match A");
    for (Index j = 0; j < n; ++j)
        if (lo[j] > hi[j]) throw ValidationError("lp: crossed variable bounds");
    for (Index i = 0; i < m; ++i)
        if (row_lo[i] > row_hi[i]) throw ValidationError("lp: crossed row bounds");
}

namespace {

constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();
constexpr Scalar kPivTol = 1e-10;

enum class Where : std::uint8_t { basic, at_lower, at_upper, free_at_zero };

// Dense bounded-variable simplex over the system [A | -I] z = 0, where the
// slack of each row carries the row bounds. The tableau holds B^-1 [A | -I];
// basic values are tracked separately.
struct Tableau {
    const LinearProgram& lp;
    Index m, n, width;
    Matrix tab;
    Vector xb;            // basic values per row
    std::vector<Index> basis;
    std::vector<Where> where;
    Vector wlo, whi;      // working bounds for every column
    Vector cost;          // phase-2 objective per column
    Vector d;             // reduced costs (phase 2)
    long iterations = 0;
    long iteration_cap;
    Scalar tol;
    bool bland = false;
    long degenerate_streak = 0;

    explicit Tableau(const LinearProgram& p, const LpOptions& opt)
        : lp(p), m(p.rows()), n(p.cols()), width(m + n) {
        tol = opt.tolerance;
        iteration_cap = opt.max_iterations > 0 ? opt.max_iterations : 200 * (m + n) + 5000;

        tab.resize(m, width);
        tab.leftCols(n) = -p.A;
        tab.rightCols(m) = Matrix::Identity(m, m);

        wlo.resize(width);
        whi.resize(width);
        cost = Vector::Zero(width);
        for (Index j = 0; j < n; ++j) {
            wlo[j] = p.lo[j];
            whi[j] = p.hi[j];
            cost[j] = p.c[j];
        }
        for (Index i = 0; i < m; ++i) {
            wlo[n + i] = p.row_lo[i];
            whi[n + i] = p.row_hi[i];
        }

        where.assign(width, Where::at_lower);
        for (Index j = 0; j < width; ++j) {
            if (std::isfinite(wlo[j]) && std::isfinite(whi[j]))
                where[j] = std::abs(wlo[j]) <= std::abs(whi[j]) ? Where::at_lower : Where::at_upper;
            else if (std::isfinite(wlo[j])) where[j] = Where::at_lower;
            else if (std::isfinite(whi[j])) where[j] = Where::at_upper;
            else where[j] = Where::free_at_zero;
        }

        basis.resize(m);
        for (Index i = 0; i < m; ++i) {
            basis[i] = n + i;
            where[n + i] = Where::basic;
        }
        // xb = row activity at the nonbasic point
        Vector x0(n);
        for (Index j = 0; j < n; ++j) x0[j] = value(j);
        xb = p.A * x0;
    }

    Scalar value(Index j) const {
        switch (where[j]) {
            case Where::at_lower: return wlo[j];
            case Where::at_upper: return whi[j];
            case Where::free_at_zero: return 0;
            case Where::basic:
                for (Index i = 0; i < m; ++i)
                    if (basis[i] == j) return xb[i];
                return 0;
        }
        return 0;
    }

    // Violation sign of basic row i: +1 above, -1 below, 0 feasible.
    int sigma(Index i) const {
        const Scalar slack_tol = tol * (1 + std::abs(xb[i]));
        if (xb[i] > whi[basis[i]] + slack_tol) return 1;
        if (xb[i] < wlo[basis[i]] - slack_tol) return -1;
        return 0;
    }

    Scalar infeasibility() const {
        Scalar phi = 0;
        for (Index i = 0; i < m; ++i) {
            phi += std::max<Scalar>(0, xb[i] - whi[basis[i]]);
            phi += std::max<Scalar>(0, wlo[basis[i]] - xb[i]);
        }
        return phi;
    }

    void recompute_reduced_costs() {
        d = cost;
        for (Index i = 0; i < m; ++i) {
            Scalar cb = cost[basis[i]];
            if (cb != 0) d.noalias() -= cb * tab.row(i).transpose();
        }
        for (Index i = 0; i < m; ++i) d[basis[i]] = 0;
    }

    struct Ratio {
        Scalar step = kInf;
        Index row = -1;       // leaving row, or -1 for a bound flip
        Where leave_at = Where::at_lower;
        bool flip = false;
    };

    // Max step for entering column e moving in `dir`, honoring basic bounds.
    // In phase 1 infeasible basics block only at the bound they violate.
    Ratio ratio_test(Index e, Scalar dir, bool phase1) {
        Ratio best;
        const Scalar range = whi[e] - wlo[e];
        if (std::isfinite(range)) {
            best.step = range;
            best.flip = true;
        }
        Scalar best_piv = 0;
        for (Index i = 0; i < m; ++i) {
            const Scalar a = tab(i, e);
            if (std::abs(a) < kPivTol) continue;
            const Scalar rate = -a * dir;  // d xb_i / d step
            const Index b = basis[i];
            Scalar bound;
            Where side;
            if (phase1 && sigma(i) > 0) {
                if (rate >= 0) continue;  // moving further above its bound never blocks
                bound = whi[b];
                side = Where::at_upper;
            } else if (phase1 && sigma(i) < 0) {
                if (rate <= 0) continue;
                bound = wlo[b];
                side = Where::at_lower;
            } else if (rate > 0) {
                if (!std::isfinite(whi[b])) continue;
                bound = whi[b];
                side = Where::at_upper;
            } else {
                if (!std::isfinite(wlo[b])) continue;
                bound = wlo[b];
                side = Where::at_lower;
            }
            Scalar step = (bound - xb[i]) / rate;
            if (step < 0) step = 0;  // degenerate
            const bool tie = std::abs(step - best.step) <= 1e-12 * (1 + std::abs(step));
            bool better;
            if (!tie) {
                better = step < best.step;
            } else if (bland) {
                better = best.flip || (best.row >= 0 && basis[i] < basis[best.row]);
            } else {
                better = best.flip ? false : std::abs(a) > best_piv;
            }
            if (better) {
                best.step = std::min(step, best.step);
                best.row = i;
                best.leave_at = side;
                best.flip = false;
                best_piv = std::abs(a);
            }
        }
        return best;
    }

    void apply_step(Index e, Scalar dir, const Ratio& r) {
        const Scalar delta = r.step * dir;
        if (r.step > 0) xb.noalias() -= tab.col(e) * delta;

        if (r.flip) {
            where[e] = where[e] == Where::at_lower ? Where::at_upper : Where::at_lower;
            return;
        }
        const Index row = r.row;
        const Index leaving = basis[row];
        Scalar enter_val;
        switch (where[e]) {
            case Where::at_lower: enter_val = wlo[e] + delta; break;
            case Where::at_upper: enter_val = whi[e] + delta; break;
            default: enter_val = delta; break;  // free
        }

        // pivot
        const Scalar p = tab(row, e);
        Eigen::RowVectorXd prow = tab.row(row) / p;
        Vector pcol = tab.col(e);
        pcol[row] = 0;
        tab.noalias() -= pcol * prow;
        tab.row(row) = prow;

        if (d.size() == width) {
            const Scalar de = d[e];
            if (de != 0) d.noalias() -= de * prow.transpose();
            d[e] = 0;
        }

        basis[row] = e;
        where[e] = Where::basic;
        where[leaving] = r.leave_at;
        xb[row] = enter_val;

        if (r.step <= 1e-12) {
            if (++degenerate_streak > 2 * (m + 10)) bland = true;
        } else {
            degenerate_streak = 0;
            bland = false;
        }
    }

    // ---- phase 1 ----------------------------------------------------------
    LpStatus phase1() {
        while (true) {
            if (iterations++ > iteration_cap) return LpStatus::iteration_limit;

            Vector sig = Vector::Zero(m);
            bool any = false;
            for (Index i = 0; i < m; ++i) {
                int s = sigma(i);
                if (s) any = true;
                sig[i] = s;
            }
            if (!any) return LpStatus::optimal;
            // xb moves by -tab.col(j) per unit of x_j, so dPhi/dx_j = -(sig' tab)_j
            Vector g = tab.transpose() * sig;

            Index enter = -1;
            Scalar best_score = tol;
            Scalar dir = 1;
            for (Index j = 0; j < width; ++j) {
                if (where[j] == Where::basic) continue;
                if (whi[j] - wlo[j] <= 0) continue;  // fixed column
                const Scalar down_rate = -g[j];  // Phi change per unit increase
                Scalar score = 0;
                Scalar cand_dir = 1;
                if (where[j] == Where::at_lower || where[j] == Where::free_at_zero) {
                    if (down_rate < -tol) {
                        score = -down_rate;
                        cand_dir = 1;
                    }
                }
                if (score == 0 &&
                    (where[j] == Where::at_upper || where[j] == Where::free_at_zero)) {
                    if (down_rate > tol) {
                        score = down_rate;
                        cand_dir = -1;
                    }
                }
                if (score > best_score) {
                    best_score = score;
                    enter = j;
                    dir = cand_dir;
                    if (bland) break;
                }
            }
            if (enter < 0) return LpStatus::infeasible;  // locally stuck while violated

            Ratio r = ratio_test(enter, dir, true);
            if (!std::isfinite(r.step)) return LpStatus::infeasible;
            apply_step(enter, dir, r);
        }
    }

    // ---- phase 2 ----------------------------------------------------------
    LpStatus phase2() {
        recompute_reduced_costs();
        long since_refresh = 0;
        while (true) {
            if (iterations++ > iteration_cap) return LpStatus::iteration_limit;
            if (++since_refresh >= 2000) {
                recompute_reduced_costs();
                since_refresh = 0;
            }

            Index enter = -1;
            Scalar best_score = tol;
            Scalar dir = 1;
            for (Index j = 0; j < width; ++j) {
                if (where[j] == Where::basic) continue;
                if (whi[j] - wlo[j] <= 0) continue;  // fixed column
                Scalar score = 0;
                Scalar cand_dir = 1;
                if ((where[j] == Where::at_lower || where[j] == Where::free_at_zero) &&
                    d[j] < -tol) {
                    score = -d[j];
                    cand_dir = 1;
                } else if ((where[j] == Where::at_upper || where[j] == Where::free_at_zero) &&
                           d[j] > tol) {
                    score = d[j];
                    cand_dir = -1;
                }
                if (score > best_score) {
                    best_score = score;
                    enter = j;
                    dir = cand_dir;
                    if (bland) break;
                }
            }
            if (enter < 0) return LpStatus::optimal;

            Ratio r = ratio_test(enter, dir, false);
            if (!std::isfinite(r.step))
                throw ValidationError("lp: unbounded objective (missing variable bounds)");
            apply_step(enter, dir, r);
        }
    }
};

}  // namespace

LpSolution solve_lp(const LinearProgram& lp, const LpOptions& options) {
    lp.validate();
    Tableau t(lp, options);

    LpSolution sol;
    LpStatus s1 = t.phase1();
    if (s1 != LpStatus::optimal) {
        sol.status = s1;
        sol.iterations = t.iterations;
        return sol;
    }
    sol.status = t.phase2();
    sol.iterations = t.iterations;

    sol.x.resize(t.n);
    for (Index j = 0; j < t.n; ++j) sol.x[j] = t.value(j);
    // clamp basic-value dust so downstream consumers see in-range numbers
    for (Index j = 0; j < t.n; ++j) sol.x[j] = std::clamp(sol.x[j], lp.lo[j], lp.hi[j]);
    sol.objective = lp.c.dot(sol.x);

    t.recompute_reduced_costs();
    sol.duals.resize(t.m);
    for (Index i = 0; i < t.m; ++i) sol.duals[i] = t.d[t.n + i];
    sol.reduced_costs.resize(t.n);
    for (Index j = 0; j < t.n; ++j) sol.reduced_costs[j] = t.d[j];

    check_certificate(lp, sol);
    return sol;
}

void check_certificate(const LinearProgram& lp, LpSolution& sol) {
    if (sol.status != LpStatus::optimal || sol.x.size() != lp.cols()) return;
    const Index m = lp.rows(), n = lp.cols();
    const Scalar cscale = 1 + lp.c.cwiseAbs().maxCoeff();

    Vector act = lp.A * sol.x;
    Scalar primal = 0;
    for (Index i = 0; i < m; ++i) {
        Scalar scale = 1 + std::max(std::abs(lp.row_lo[i]), std::abs(lp.row_hi[i]));
        primal = std::max(primal, (lp.row_lo[i] - act[i]) / scale);
        primal = std::max(primal, (act[i] - lp.row_hi[i]) / scale);
    }
    for (Index j = 0; j < n; ++j) {
        Scalar scale = 1 + std::max(std::abs(lp.lo[j]), std::abs(lp.hi[j]));
        primal = std::max(primal, (lp.lo[j] - sol.x[j]) / scale);
        primal = std::max(primal, (sol.x[j] - lp.hi[j]) / scale);
    }
    sol.primal_residual = std::max<Scalar>(0, primal);

    // stationarity and complementary slackness from the duals
    Vector zc = lp.c - lp.A.transpose() * sol.duals;
    Scalar comp = 0, dual = 0;
    auto bound_residual = [&](Scalar x, Scalar lo, Scalar hi, Scalar red) {
        const Scalar span = 1e-7 * (1 + std::max(std::abs(lo), std::abs(hi)));
        const bool at_lo = std::isfinite(lo) && x <= lo + span;
        const bool at_hi = std::isfinite(hi) && x >= hi - span;
        if (at_lo && at_hi) return;  // fixed variable, any sign admissible
        if (at_lo) dual = std::max(dual, -red / cscale);
        else if (at_hi) dual = std::max(dual, red / cscale);
        else comp = std::max(comp, std::abs(red) / cscale);
    };
    for (Index j = 0; j < n; ++j) bound_residual(sol.x[j], lp.lo[j], lp.hi[j], zc[j]);
    for (Index i = 0; i < m; ++i) bound_residual(act[i], lp.row_lo[i], lp.row_hi[i], sol.duals[i]);
    sol.dual_residual = std::max<Scalar>(0, dual);
    sol.complementarity = comp;
}

}  // namespace ems
