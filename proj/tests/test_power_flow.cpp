#include "ems/power_flow.hpp"

#include "support/oracles.hpp"

#include <doctest.h>

using namespace ems;

namespace {
const std::string kCaseDir = EMS_CASE_DIR;

NetworkModel two_bus_dc(Scalar g) {
    NetworkModel m;
    m.kind = NetworkKind::dc;
    m.base_mva = 1;  // work directly in per-unit
    m.horizon = 1;
    Bus b1;
    b1.id = 1;
    b1.is_slack = true;
    b1.slack_p_min = -10;
    b1.slack_p_max = 10;
    Bus b2;
    b2.id = 2;
    m.buses = {b1, b2};
    m.lines = {{1, 2, g, 0, 100, 0}};
    return m;
}

Vector prorata_injections(const NetworkModel& m, int hour, Vector* q_out = nullptr) {
    const int nb = static_cast<int>(m.buses.size());
    Vector p = Vector::Zero(nb), q = Vector::Zero(nb);
    Scalar demand = 0, cap = 0;
    for (std::size_t l = 0; l < m.loads.size(); ++l) demand += m.load_p(l, hour);
    for (const auto& g : m.generators) cap += g.p_max;
    for (const auto& g : m.generators)
        p[m.bus_index(g.bus)] += demand * g.p_max / cap;
    for (std::size_t l = 0; l < m.loads.size(); ++l) {
        p[m.bus_index(m.loads[l].bus)] -= m.load_p(l, hour);
        q[m.bus_index(m.loads[l].bus)] -= m.load_q(l, hour);
    }
    if (q_out) *q_out = q;
    return p;
}
}  // namespace

TEST_CASE("dc no-load solution is flat") {
    NetworkModel m = two_bus_dc(10);
    PowerFlowSolution sol = solve_dc(m, Vector::Zero(2));
    REQUIRE(sol.converged);
    CHECK(sol.v[0] == doctest::Approx(1.0));
    CHECK(sol.v[1] == doctest::Approx(1.0));
    CHECK(sol.p_slack == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sol.line_p.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("dc two-bus voltage solves the closed-form quadratic") {
    // 10 V2 (V2 - 1) = -0.1  =>  V2 = (1 + sqrt(1 - 0.04)) / 2
    NetworkModel m = two_bus_dc(10);
    Vector inj(2);
    inj << 0, -0.1;
    PowerFlowSolution sol = solve_dc(m, inj);
    REQUIRE(sol.converged);
    const Scalar expected = (1 + std::sqrt(0.96)) / 2;
    CHECK(sol.v[1] == doctest::Approx(expected).epsilon(1e-9));
    CHECK(sol.v[1] == doctest::Approx(0.98990).epsilon(1e-4));

    // sending-end flow covers the load plus the line loss
    CHECK(sol.line_p[0] == doctest::Approx(1.0 * (1.0 - sol.v[1]) * 10));
    CHECK(sol.line_p[0] > 0.1);
    CHECK(sol.p_slack == doctest::Approx(sol.line_p[0]).epsilon(1e-9));
}

TEST_CASE("ship case converges from the hourly profile") {
    NetworkModel m = load_case(kCaseDir + "/mvdc12.case");
    Vector p = prorata_injections(m, 0);
    PowerFlowSolution sol = solve_dc(m, p);
    REQUIRE(sol.converged);
    CHECK(sol.iterations < 20);
    CHECK(sol.max_mismatch < 1e-8);
}

TEST_CASE("overloaded dc network reports non-convergence") {
    NetworkModel m = two_bus_dc(10);
    Vector inj(2);
    inj << 0, -5.0;  // far beyond the maximum transferable power g/4
    PowerFlowSolution sol = solve_dc(m, inj);
    CHECK_FALSE(sol.converged);
}

TEST_CASE("ac no-load solution is flat") {
    std::mt19937_64 rng(7);
    NetworkModel m = oracle::random_ac_network(rng, 4);
    PowerFlowSolution sol = solve_ac(m, Vector::Zero(4), Vector::Zero(4));
    REQUIRE(sol.converged);
    CHECK((sol.v.array() - 1).abs().maxCoeff() < 1e-9);
    CHECK(sol.theta.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(sol.p_slack == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("30-bus case converges quickly at the nominal operating point") {
    NetworkModel m = load_case(kCaseDir + "/ieee30.case");
    Vector q;
    Vector p = prorata_injections(m, 0, &q);
    PowerFlowSolution sol = solve_ac(m, p, q);
    REQUIRE(sol.converged);
    CHECK(sol.iterations <= 10);
    CHECK(sol.max_mismatch < 1e-8);
}

TEST_CASE("islanded load bus is excluded and flagged") {
    NetworkModel m;
    m.kind = NetworkKind::dc;
    m.base_mva = 1;
    m.horizon = 1;
    Bus b1;
    b1.id = 1;
    b1.is_slack = true;
    b1.slack_p_min = -5;
    b1.slack_p_max = 5;
    Bus b2;
    b2.id = 2;
    Bus b3;
    b3.id = 3;  // no lines touch bus 3
    m.buses = {b1, b2, b3};
    m.lines = {{1, 2, 10, 0, 100, 0}};
    Vector inj(3);
    inj << 0, -0.05, -0.2;
    PowerFlowSolution sol = solve_dc(m, inj);
    REQUIRE(sol.islanded_buses.size() == 1);
    CHECK(sol.islanded_buses[0] == 2);
    CHECK(sol.converged);  // the main island still solves
    CHECK(sol.v[2] == 0.0);
}

TEST_CASE("line flows balance at every 30-bus node") {
    NetworkModel m = load_case(kCaseDir + "/ieee30.case");
    Vector q;
    Vector p = prorata_injections(m, 7, &q);
    PowerFlowSolution sol = solve_ac(m, p, q);
    REQUIRE(sol.converged);

    // recompute the receiving-end flow independently and check Kirchhoff
    const int nb = static_cast<int>(m.buses.size());
    Vector sum_p = Vector::Zero(nb);
    for (std::size_t e = 0; e < m.lines.size(); ++e) {
        const Line& l = m.lines[e];
        int a = m.bus_index(l.from_bus), b = m.bus_index(l.to_bus);
        sum_p[a] += sol.line_p[e];
        Scalar th = sol.theta[b] - sol.theta[a];
        Scalar recv = sol.v[b] * sol.v[b] * l.g -
                      sol.v[b] * sol.v[a] * (l.g * std::cos(th) + l.b * std::sin(th));
        sum_p[b] += recv * m.base_mva;
    }
    int slack = m.slack_index();
    for (int i = 0; i < nb; ++i) {
        Scalar inj = p[i] + (i == slack ? sol.p_slack : 0.0);
        CHECK(std::abs(sum_p[i] - inj) < 1e-7 * m.base_mva);
    }
}

TEST_CASE("limit checks report signed excesses in deterministic order") {
    NetworkModel m = two_bus_dc(10);
    PowerFlowSolution sol = solve_dc(m, Vector::Zero(2));
    DispatchSetpoints none;

    SUBCASE("clean solution has no findings") {
        CHECK(check_limits(m, sol, none).empty());
    }
    SUBCASE("voltage below the floor") {
        sol.v[1] = 0.93;
        ViolationSet v = check_limits(m, sol, none);
        REQUIRE(v.items.size() == 1);
        CHECK(v.items[0].kind == ConstraintKind::v);
        CHECK(v.items[0].id == 1);
        CHECK(v.items[0].excess == doctest::Approx(0.02));
    }
    SUBCASE("slack above its ceiling") {
        sol.p_slack = m.buses[0].slack_p_max + 1.0;
        ViolationSet v = check_limits(m, sol, none);
        REQUIRE(v.items.size() == 1);
        CHECK(v.items[0].kind == ConstraintKind::slack);
        CHECK(v.items[0].excess == doctest::Approx(1.0));
    }
    SUBCASE("ordering is by kind then id") {
        sol.v[0] = 0.90;
        sol.v[1] = 0.90;
        sol.p_slack = 100;
        ViolationSet v = check_limits(m, sol, none);
        REQUIRE(v.items.size() == 3);
        CHECK(v.items[0].id == 0);
        CHECK(v.items[1].id == 1);
        CHECK(v.items[2].kind == ConstraintKind::slack);
    }
}

TEST_CASE("newton solution matches the grid-search oracle on small networks") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<Scalar> u(-0.25, 0.25);
    for (int trial = 0; trial < 6; ++trial) {
        NetworkModel m = oracle::random_ac_network(rng, 3 + trial % 3);
        const int n = static_cast<int>(m.buses.size());
        Vector p = Vector::Zero(n), q = Vector::Zero(n);
        for (int i = 1; i < n; ++i) {
            p[i] = u(rng) * m.base_mva;
            q[i] = 0.5 * u(rng) * m.base_mva;
        }
        PowerFlowSolution sol = solve_ac(m, p, q);
        REQUIRE(sol.converged);
        Vector v_o, th_o;
        REQUIRE(oracle::grid_polish_oracle(m, p, q, v_o, th_o));
        CHECK((sol.v - v_o).cwiseAbs().maxCoeff() < 1e-4);
        CHECK((sol.theta - th_o).cwiseAbs().maxCoeff() < 1e-4);
    }
}

TEST_CASE("printed-sign reactive form is available behind an option") {
    std::mt19937_64 rng(11);
    NetworkModel m = oracle::random_ac_network(rng, 3);
    Vector p(3), q(3);
    p << 0, 10, -10;
    q << 0, 2, -3;
    PowerFlowOptions standard, printed;
    printed.paper_q_sign = true;
    PowerFlowSolution a = solve_ac(m, p, q, standard);
    PowerFlowSolution b = solve_ac(m, p, q, printed);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    // the two mismatch conventions genuinely differ away from no-load
    CHECK((a.v - b.v).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("solutions are bit-identical across repeated solves") {
    NetworkModel m = load_case(kCaseDir + "/ieee30.case");
    Vector q;
    Vector p = prorata_injections(m, 12, &q);
    PowerFlowSolution a = solve_ac(m, p, q);
    PowerFlowSolution b = solve_ac(m, p, q);
    REQUIRE(a.converged);
    CHECK(std::memcmp(a.v.data(), b.v.data(), sizeof(Scalar) * a.v.size()) == 0);
    CHECK(std::memcmp(a.theta.data(), b.theta.data(), sizeof(Scalar) * a.theta.size()) == 0);
    CHECK(a.p_slack == b.p_slack);
}
