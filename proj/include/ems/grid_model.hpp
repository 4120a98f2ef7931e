#pragma once

#include "ems/types.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace ems {

enum class NetworkKind { dc, ac };
enum class LoadClass { critical, semi_critical, non_critical };
enum class Units { mw, per_unit };

const char* to_string(LoadClass c);
const char* to_string(NetworkKind k);

struct Bus {
    int id = 0;
    Scalar v_min = 0.95;
    Scalar v_max = 1.05;
    Scalar theta_min = -0.5;  // rad
    Scalar theta_max = 0.5;
    bool is_slack = false;
    Scalar slack_p_min = 0;  // MW, slack bus only
    Scalar slack_p_max = 0;
};

struct Line {
    int from_bus = 0;
    int to_bus = 0;
    Scalar g = 0;      // series conductance, p.u.
    Scalar b = 0;      // series susceptance, p.u. (ignored in dc networks)
    Scalar p_lim = 0;  // MW
    Scalar q_lim = 0;  // MVAr
};

struct Generator {
    int bus = 0;
    Scalar p_min = 0;  // MW
    Scalar p_max = 0;
    Scalar q_min = 0;  // MVAr
    Scalar q_max = 0;
    Scalar pof = 0;       // probability of failure over the horizon
    Scalar k_robust = 1;  // robustness constant, larger = preferred source
};

struct EssUnit {
    int bus = 0;
    Scalar capacity = 0;  // MWh
    Scalar e_min = 0;     // MWh, equals soc_min * capacity
    Scalar e_max = 0;
    Scalar c_max = 0;  // max charging rate, MW
    Scalar d_max = 0;  // max discharging rate, MW
    Scalar soc_min = 0;
    Scalar soc_max = 1;
    Scalar eta = 1.0;  // efficiency applied to the energy update
    Scalar e_init = 0;
};

struct LoadPoint {
    int bus = 0;
    LoadClass cls = LoadClass::non_critical;
    Vector p_profile;  // horizon values, MW
    Vector q_profile;  // horizon values, MVAr; empty means zero
};

struct ClassWeights {
    Scalar k_c = 100;
    Scalar k_sc = 10;
    Scalar k_nc = 1;
};

/// Immutable after load; safe to share read-only across threads.
struct NetworkModel {
    std::string name;
    NetworkKind kind = NetworkKind::dc;
    Units units = Units::mw;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Generator> generators;
    std::vector<EssUnit> ess_units;
    std::vector<LoadPoint> loads;
    ClassWeights weights;
    Scalar base_mva = 100;
    int horizon = 24;
    Scalar dt = 1.0;  // hours
    bool failable_lines = false;

    int bus_index(int id) const;  // -1 when the id is unknown
    int slack_index() const;      // -1 when no slack bus is marked
    Scalar weight(LoadClass c) const;
    /// Generators, plus lines when failable_lines is set. Mask bit order:
    /// generators in model order, then lines in model order.
    int failable_count() const;
    std::vector<Scalar> failable_pofs() const;
    Scalar load_p(int load, int hour) const { return loads[load].p_profile[hour]; }
    Scalar load_q(int load, int hour) const;
};

/// One joint availability outcome over the failable components.
struct Scenario {
    std::vector<std::uint8_t> mask;  // 1 = failed
    Scalar probability = 1;

    std::string mask_hex() const;  // bit 0 = first component, little-endian nibbles
    static Scenario from_hex(const std::string& hex, int n_components, Scalar probability);
    int failed_count() const;
};

struct ValidationFinding {
    std::string field;  // dotted path, e.g. "ess[2].e_init"
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationFinding> findings;
    bool ok() const { return findings.empty(); }
    std::string to_string() const;
};

struct BusAdmittance {
    Matrix G;  // p.u., symmetric
    Matrix B;  // p.u., all-zero for dc networks
};

struct ScenarioApplication {
    NetworkModel model;
    std::vector<int> islanded_buses;  // bus indices cut off from the slack bus
};

NetworkModel load_case(const std::string& path);
NetworkModel parse_case(std::istream& in, const std::string& origin);
ValidationReport validate(const NetworkModel& model);

/// Bus admittance matrices. Throws ValidationError when the line graph is
/// disconnected over the given model.
BusAdmittance admittance(const NetworkModel& model);

/// Failed generators get p_max = q_max = 0; failed lines are removed from the
/// line list. Buses disconnected from the slack are flagged, not fatal.
ScenarioApplication apply_scenario(const NetworkModel& model, const Scenario& scenario);

NetworkModel to_per_unit(const NetworkModel& model);
NetworkModel from_per_unit(const NetworkModel& model);

/// Bus indices unreachable from the slack bus over the model's lines.
std::vector<int> islanded_buses(const NetworkModel& model);

}  // namespace ems
