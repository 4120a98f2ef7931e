#include "ems/simplex.hpp"

#include <doctest.h>

#include <random>

using namespace ems;

namespace {
constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

LinearProgram make_lp(int m, int n) {
    LinearProgram lp;
    lp.A = Matrix::Zero(m, n);
    lp.c = Vector::Zero(n);
    lp.lo = Vector::Zero(n);
    lp.hi = Vector::Constant(n, kInf);
    lp.row_lo = Vector::Zero(m);
    lp.row_hi = Vector::Zero(m);
    return lp;
}
}  // namespace

TEST_CASE("two-variable resource problem") {
    // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  (classic answer 36)
    LinearProgram lp = make_lp(3, 2);
    lp.c << -3, -5;
    lp.A << 1, 0, 0, 2, 3, 2;
    lp.row_lo << -kInf, -kInf, -kInf;
    lp.row_hi << 4, 12, 18;
    LpSolution s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    CHECK(s.objective == doctest::Approx(-36));
    CHECK(s.x[0] == doctest::Approx(2));
    CHECK(s.x[1] == doctest::Approx(6));
    CHECK(s.complementarity < 1e-7);
    CHECK(s.primal_residual < 1e-9);
}

TEST_CASE("equality rows and negative bounds") {
    // min x + 2y - z  s.t.  x + y + z = 10, y - z = 2, -5 <= z <= 5, x,y in [0,10]
    LinearProgram lp = make_lp(2, 3);
    lp.c << 1, 2, -1;
    lp.A << 1, 1, 1, 0, 1, -1;
    lp.row_lo << 10, 2;
    lp.row_hi << 10, 2;
    lp.lo << 0, 0, -5;
    lp.hi << 10, 10, 5;
    LpSolution s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    // z as large as possible, y = z + 2, x = 8 - 2z -> min at z = 4? enumerate:
    // x = 10 - y - z = 8 - 2z, feasible needs x >= 0 -> z <= 4; obj = 8-2z+2(z+2)-z = 12 - z
    CHECK(s.x[2] == doctest::Approx(4));
    CHECK(s.objective == doctest::Approx(8));
}

TEST_CASE("upper-bounded variables flip without pivoting") {
    // max x + y with x,y in [0,1], x + y <= 1.5
    LinearProgram lp = make_lp(1, 2);
    lp.c << -1, -1;
    lp.A << 1, 1;
    lp.row_lo << -kInf;
    lp.row_hi << 1.5;
    lp.hi << 1, 1;
    LpSolution s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    CHECK(s.objective == doctest::Approx(-1.5));
}

TEST_CASE("infeasible systems are reported") {
    LinearProgram lp = make_lp(2, 1);
    lp.A << 1, 1;
    lp.row_lo << 2, -kInf;
    lp.row_hi << kInf, 1;  // x >= 2 and x <= 1
    lp.hi << 10;
    LpSolution s = solve_lp(lp);
    CHECK(s.status == LpStatus::infeasible);
}

TEST_CASE("free variables enter from zero") {
    // min |style| objective: min -x + y with x free bounded by rows, y >= 0
    LinearProgram lp = make_lp(2, 2);
    lp.c << -1, 1;
    lp.A << 1, 0, 1, 1;
    lp.row_lo << -kInf, -kInf;
    lp.row_hi << 7, 9;
    lp.lo << -kInf, 0;
    lp.hi << kInf, kInf;
    LpSolution s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    CHECK(s.x[0] == doctest::Approx(7));
    CHECK(s.x[1] == doctest::Approx(0));
}

TEST_CASE("unbounded objectives throw") {
    LinearProgram lp = make_lp(1, 1);
    lp.c << -1;
    lp.A << 1;
    lp.row_lo << 0;
    lp.row_hi << kInf;
    CHECK_THROWS_AS(solve_lp(lp), ValidationError);
}

TEST_CASE("phase one handles an infeasible start") {
    // equality row far from the zero point: x + y = 8 with x,y in [0,10],
    // min x so the optimum is x=0, y=8
    LinearProgram lp = make_lp(1, 2);
    lp.c << 1, 0;
    lp.A << 1, 1;
    lp.row_lo << 8;
    lp.row_hi << 8;
    lp.hi << 10, 10;
    LpSolution s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    CHECK(s.x[0] == doctest::Approx(0));
    CHECK(s.x[1] == doctest::Approx(8));
}

TEST_CASE("random boxes agree with exhaustive corner enumeration") {
    // n <= 4 variables with finite boxes and <= 3 range rows: the optimum of a
    // feasible bounded LP lies at a vertex; enumerate all bound/row-activity
    // combinations coarsely by sampling corners plus row intersections is
    // overkill, so instead verify optimality via the certificate and by
    // sampling feasible points that must never beat the reported optimum.
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<Scalar> u(-1, 1);
    int solved = 0;
    for (int trial = 0; trial < 200; ++trial) {
        int n = 1 + static_cast<int>((u(rng) + 1) * 2);
        int m = 1 + static_cast<int>((u(rng) + 1) * 1.4);
        LinearProgram lp = make_lp(m, n);
        for (int j = 0; j < n; ++j) {
            lp.c[j] = 2 * u(rng);
            lp.lo[j] = -1 - u(rng);
            lp.hi[j] = 1 + u(rng);
        }
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) lp.A(i, j) = 2 * u(rng);
            Scalar a = 3 * u(rng), b = 3 * u(rng);
            lp.row_lo[i] = std::min(a, b);
            lp.row_hi[i] = std::max(a, b);
        }
        LpSolution s = solve_lp(lp);
        if (s.status != LpStatus::optimal) continue;
        ++solved;
        CHECK(s.primal_residual < 1e-7);
        CHECK(s.dual_residual < 1e-7);
        CHECK(s.complementarity < 1e-7);
        // rejection-sample feasible points; none may improve on the optimum
        for (int probe = 0; probe < 300; ++probe) {
            Vector x(n);
            for (int j = 0; j < n; ++j)
                x[j] = lp.lo[j] + 0.5 * (u(rng) + 1) * (lp.hi[j] - lp.lo[j]);
            Vector act = lp.A * x;
            bool ok = true;
            for (int i = 0; i < m; ++i)
                ok &= act[i] >= lp.row_lo[i] - 1e-9 && act[i] <= lp.row_hi[i] + 1e-9;
            if (ok) CHECK(lp.c.dot(x) >= s.objective - 1e-6);
        }
    }
    CHECK(solved > 50);  // the generator must produce plenty of feasible programs
}

TEST_CASE("degenerate ties terminate") {
    // many redundant rows through the same vertex
    LinearProgram lp = make_lp(4, 2);
    lp.c << -1, -1;
    lp.A << 1, 1, 1, 1, 2, 2, 1, 0;
    lp.row_lo << -kInf, -kInf, -kInf, -kInf;
    lp.row_hi << 1, 1, 2, 1;
    lp.hi << 5, 5;
    LpSolution s = solve_lp(lp);
    REQUIRE(s.status == LpStatus::optimal);
    CHECK(s.objective == doctest::Approx(-1));
}
