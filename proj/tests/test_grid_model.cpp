#include "ems/grid_model.hpp"
#include "ems/scenario_engine.hpp"

#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace ems;

namespace {
const std::string kCaseDir = EMS_CASE_DIR;

NetworkModel tiny_two_bus(Scalar g = 5.0) {
    NetworkModel m;
    m.kind = NetworkKind::dc;
    m.base_mva = 10;
    m.horizon = 2;
    m.name = "two";
    Bus b1;
    b1.id = 1;
    b1.is_slack = true;
    b1.slack_p_min = -10;
    b1.slack_p_max = 10;
    Bus b2;
    b2.id = 2;
    m.buses = {b1, b2};
    m.lines = {{1, 2, g, 0, 50, 0}};
    return m;
}
}  // namespace

TEST_CASE("bundled ship case matches the published converter table") {
    NetworkModel m = load_case(kCaseDir + "/mvdc12.case");
    REQUIRE(m.generators.size() == 14);
    int n26 = 0, n82 = 0;
    for (const auto& g : m.generators) {
        if (g.p_max == doctest::Approx(2.6)) ++n26;
        if (g.p_max == doctest::Approx(8.2)) ++n82;
    }
    CHECK(n26 == 4);
    CHECK(n82 == 10);
    std::vector<Scalar> pofs = m.failable_pofs();
    std::vector<Scalar> want = {0.05, 0.075, 0.05, 0.05, 0.05, 0.05, 0.05,
                                0.075, 0.05, 0.025, 0.05, 0.05, 0.05, 0.05};
    REQUIRE(pofs.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(pofs[i] == doctest::Approx(want[i]));
    // robustness constants inversely proportional to the failure probability
    for (const auto& g : m.generators)
        CHECK(g.k_robust * g.pof == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(m.ess_units.size() == 8);
    for (const auto& e : m.ess_units) {
        CHECK(e.capacity == doctest::Approx(2.2));
        CHECK(e.d_max == doctest::Approx(10));
        CHECK(e.soc_min == doctest::Approx(0.2));
    }
}

TEST_CASE("bundled 30-bus case has the documented component counts") {
    NetworkModel m = load_case(kCaseDir + "/ieee30.case");
    CHECK(m.generators.size() == 6);
    CHECK(m.lines.size() == 41);
    std::set<int> load_buses;
    for (const auto& l : m.loads) load_buses.insert(l.bus);
    CHECK(load_buses.size() == 21);
    CHECK(m.ess_units.size() == 6);
    for (const auto& e : m.ess_units) {
        CHECK(e.capacity == doctest::Approx(15));
        CHECK(e.c_max == doctest::Approx(5));
        CHECK(e.soc_min == doctest::Approx(0.2));
    }
}

TEST_CASE("two slack buses are a validation error naming is_slack") {
    std::istringstream in(R"([meta]
name = bad
kind = dc
horizon = 1
[buses]
1 0.95 1.05 -0.5 0.5 1 -1 1
2 0.95 1.05 -0.5 0.5 1 -1 1
[lines]
1 2 10 0 5 0
)");
    NetworkModel m = parse_case(in, "bad");
    ValidationReport r = validate(m);
    REQUIRE_FALSE(r.ok());
    bool found = false;
    for (const auto& f : r.findings) found |= f.field.find("is_slack") != std::string::npos;
    CHECK(found);
}

TEST_CASE("validate flags storage and weight violations") {
    NetworkModel m = tiny_two_bus();
    CHECK(validate(m).ok());

    SUBCASE("e_init below e_min") {
        EssUnit e;
        e.bus = 2;
        e.capacity = 2;
        e.e_min = 0.4;
        e.e_max = 2;
        e.soc_min = 0.2;
        e.soc_max = 1;
        e.c_max = e.d_max = 1;
        e.eta = 1;
        e.e_init = 0.1;
        m.ess_units.push_back(e);
        ValidationReport r = validate(m);
        REQUIRE(r.findings.size() == 1);
        CHECK(r.findings[0].field == "ess[0].e_init");
    }
    SUBCASE("weights out of order") {
        m.weights.k_sc = m.weights.k_c;
        ValidationReport r = validate(m);
        REQUIRE(r.findings.size() == 1);
        CHECK(r.findings[0].field == "weights");
    }
}

TEST_CASE("admittance stamps a single line") {
    NetworkModel m = tiny_two_bus(5.0);
    BusAdmittance y = admittance(m);
    CHECK(y.G(0, 0) == doctest::Approx(5));
    CHECK(y.G(1, 1) == doctest::Approx(5));
    CHECK(y.G(0, 1) == doctest::Approx(-5));
    CHECK(y.G(1, 0) == doctest::Approx(-5));
    CHECK(y.B.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("admittance off-diagonal count matches the 30-bus line list") {
    NetworkModel m = load_case(kCaseDir + "/ieee30.case");
    BusAdmittance y = admittance(m);
    int nonzeros = 0;
    for (int i = 0; i < y.G.rows(); ++i)
        for (int j = 0; j < y.G.cols(); ++j)
            if (i != j && y.G(i, j) != 0) ++nonzeros;
    CHECK(nonzeros == 2 * 41);
}

TEST_CASE("dc networks ignore line susceptance") {
    NetworkModel m = tiny_two_bus();
    m.lines[0].b = -3.5;
    BusAdmittance y = admittance(m);
    CHECK(y.B.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("apply_scenario masks generators and flags islands") {
    NetworkModel m = load_case(kCaseDir + "/mvdc12.case");

    SUBCASE("all-available mask leaves the model untouched") {
        Scenario s;
        s.mask.assign(m.failable_count(), 0);
        auto applied = apply_scenario(m, s);
        CHECK(applied.islanded_buses.empty());
        for (std::size_t g = 0; g < m.generators.size(); ++g)
            CHECK(applied.model.generators[g].p_max == m.generators[g].p_max);
    }
    SUBCASE("failing both ATG-1 converters drops 5.2 MW of capacity") {
        Scenario s;
        s.mask.assign(m.failable_count(), 0);
        s.mask[0] = s.mask[1] = 1;  // the two ATG-1 units
        auto applied = apply_scenario(m, s);
        Scalar before = 0, after = 0;
        for (const auto& g : m.generators) before += g.p_max;
        for (const auto& g : applied.model.generators) after += g.p_max;
        CHECK(before - after == doctest::Approx(5.2));
    }
    SUBCASE("mask length mismatch throws") {
        Scenario s;
        s.mask.assign(3, 0);
        CHECK_THROWS_AS(apply_scenario(m, s), ValidationError);
    }
    SUBCASE("idempotent and commutes with admittance") {
        Scenario s;
        s.mask.assign(m.failable_count(), 0);
        s.mask[4] = 1;
        auto once = apply_scenario(m, s);
        auto twice = apply_scenario(once.model, s);
        BusAdmittance y1 = admittance(once.model);
        BusAdmittance y2 = admittance(twice.model);
        CHECK((y1.G - y2.G).cwiseAbs().maxCoeff() == 0.0);
        for (std::size_t g = 0; g < m.generators.size(); ++g)
            CHECK(once.model.generators[g].p_max == twice.model.generators[g].p_max);
    }
}

TEST_CASE("failing a cut line islands the far bus") {
    NetworkModel m;
    m.kind = NetworkKind::dc;
    m.horizon = 1;
    m.failable_lines = true;
    Bus b1;
    b1.id = 1;
    b1.is_slack = true;
    b1.slack_p_min = -1;
    b1.slack_p_max = 1;
    Bus b2;
    b2.id = 2;
    Bus b3;
    b3.id = 3;
    m.buses = {b1, b2, b3};
    m.lines = {{1, 2, 10, 0, 5, 0}, {2, 3, 10, 0, 5, 0}};
    LoadPoint lp;
    lp.bus = 3;
    lp.cls = LoadClass::critical;
    lp.p_profile = Vector::Constant(1, 1.0);
    m.loads = {lp};

    Scenario s;
    s.mask.assign(m.failable_count(), 0);
    s.mask[1] = 1;  // second line (2-3)
    auto applied = apply_scenario(m, s);
    REQUIRE(applied.islanded_buses.size() == 1);
    CHECK(applied.islanded_buses[0] == 2);  // index of bus id 3
}

TEST_CASE("per-unit round trip reproduces the megawatt fields") {
    NetworkModel m = load_case(kCaseDir + "/mvdc12.case");
    NetworkModel back = from_per_unit(to_per_unit(m));
    for (std::size_t g = 0; g < m.generators.size(); ++g)
        CHECK(back.generators[g].p_max ==
              doctest::Approx(m.generators[g].p_max).epsilon(1e-9));
    for (std::size_t e = 0; e < m.ess_units.size(); ++e)
        CHECK(back.ess_units[e].e_init == doctest::Approx(m.ess_units[e].e_init).epsilon(1e-9));
    for (std::size_t l = 0; l < m.loads.size(); ++l)
        CHECK((back.loads[l].p_profile - m.loads[l].p_profile).cwiseAbs().maxCoeff() < 1e-9);
    for (std::size_t e = 0; e < m.lines.size(); ++e)
        CHECK(back.lines[e].p_lim == doctest::Approx(m.lines[e].p_lim).epsilon(1e-9));
}

TEST_CASE("full enumeration sums to one for twenty components") {
    std::vector<Scalar> pofs(20);
    for (int i = 0; i < 20; ++i) pofs[i] = 0.01 + 0.017 * i;
    ScenarioSet set = enumerate_scenarios(pofs, 0.0, false);
    Scalar total = 0;
    for (const auto& s : set.scenarios) total += s.probability;
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(set.size() == 1 << 20);
}

TEST_CASE("scenario hex masks round trip") {
    std::vector<Scalar> pofs(14, 0.05);
    ScenarioSet set = enumerate_scenarios(pofs, 0.001);
    for (int i = 0; i < set.size(); i += 7) {
        const Scenario& s = set.scenarios[i];
        Scenario back = Scenario::from_hex(s.mask_hex(), 14, s.probability);
        CHECK(back.mask == s.mask);
    }
}
