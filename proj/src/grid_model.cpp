#include "ems/grid_model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ems {

const char* to_string(LoadClass c) {
    switch (c) {
        case LoadClass::critical: return "critical";
        case LoadClass::semi_critical: return "semi_critical";
        case LoadClass::non_critical: return "non_critical";
    }
    return "?";
}

const char* to_string(NetworkKind k) { return k == NetworkKind::dc ? "dc" : "ac"; }

int NetworkModel::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return static_cast<int>(i);
    return -1;
}

int NetworkModel::slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].is_slack) return static_cast<int>(i);
    return -1;
}

Scalar NetworkModel::weight(LoadClass c) const {
    switch (c) {
        case LoadClass::critical: return weights.k_c;
        case LoadClass::semi_critical: return weights.k_sc;
        case LoadClass::non_critical: return weights.k_nc;
    }
    return 0;
}

int NetworkModel::failable_count() const {
    return static_cast<int>(generators.size()) +
           (failable_lines ? static_cast<int>(lines.size()) : 0);
}

std::vector<Scalar> NetworkModel::failable_pofs() const {
    std::vector<Scalar> pofs;
    pofs.reserve(failable_count());
    for (const auto& g : generators) pofs.push_back(g.pof);
    if (failable_lines)
        for (std::size_t i = 0; i < lines.size(); ++i) pofs.push_back(0);
    return pofs;
}

Scalar NetworkModel::load_q(int load, int hour) const {
    const auto& q = loads[load].q_profile;
    return q.size() > 0 ? q[hour] : 0.0;
}

std::string Scenario::mask_hex() const {
    const int n = static_cast<int>(mask.size());
    const int nibbles = std::max(1, (n + 3) / 4);
    std::string out(nibbles, '0');
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        int nib = i / 4;
        int val = out[nibbles - 1 - nib] <= '9' ? out[nibbles - 1 - nib] - '0'
                                                : out[nibbles - 1 - nib] - 'a' + 10;
        val |= 1 << (i % 4);
        out[nibbles - 1 - nib] = val < 10 ? static_cast<char>('0' + val)
                                          : static_cast<char>('a' + val - 10);
    }
    return out;
}

Scenario Scenario::from_hex(const std::string& hex, int n_components, Scalar probability) {
    Scenario s;
    s.probability = probability;
    s.mask.assign(n_components, 0);
    const int nibbles = static_cast<int>(hex.size());
    for (int i = 0; i < n_components; ++i) {
        int nib = i / 4;
        if (nib >= nibbles) break;
        char c = hex[nibbles - 1 - nib];
        int val;
        if (c >= '0' && c <= '9') val = c - '0';
        else if (c >= 'a' && c <= 'f') val = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') val = c - 'A' + 10;
        else throw ParseError("invalid hex mask: " + hex);
        s.mask[i] = (val >> (i % 4)) & 1;
    }
    return s;
}

int Scenario::failed_count() const {
    int n = 0;
    for (auto b : mask) n += b != 0;
    return n;
}

std::string ValidationReport::to_string() const {
    std::string out;
    for (const auto& f : findings) {
        out += f.field;
        out += ": ";
        out += f.message;
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Case file parsing
// ---------------------------------------------------------------------------

namespace {

struct Cursor {
    std::string origin;
    int line_no = 0;
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(origin + ":" + std::to_string(line_no) + ": " + msg);
    }
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

Scalar parse_num(const std::string& tok, const Cursor& cur) {
    try {
        std::size_t pos = 0;
        Scalar v = std::stod(tok, &pos);
        if (pos != tok.size()) cur.fail("trailing characters in number '" + tok + "'");
        return v;
    } catch (const std::exception&) {
        cur.fail("expected a number, got '" + tok + "'");
    }
}

int parse_int(const std::string& tok, const Cursor& cur) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos != tok.size()) cur.fail("trailing characters in integer '" + tok + "'");
        return v;
    } catch (const std::exception&) {
        cur.fail("expected an integer, got '" + tok + "'");
    }
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> toks;
    std::istringstream ss(s);
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
}

Vector parse_profile(const std::string& csv, int horizon, const Cursor& cur) {
    std::vector<Scalar> vals;
    std::string tok;
    std::istringstream ss(csv);
    while (std::getline(ss, tok, ',')) vals.push_back(parse_num(trim(tok), cur));
    if (static_cast<int>(vals.size()) != horizon)
        cur.fail("profile has " + std::to_string(vals.size()) + " values, expected " +
                 std::to_string(horizon));
    return Eigen::Map<Vector>(vals.data(), vals.size());
}

}  // namespace

NetworkModel parse_case(std::istream& in, const std::string& origin) {
    NetworkModel model;
    model.units = Units::mw;
    Cursor cur{origin, 0};
    std::string section;
    std::map<std::string, std::string> meta;

    std::string raw;
    while (std::getline(in, raw)) {
        ++cur.line_no;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        std::string line = trim(raw);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') cur.fail("unterminated section header");
            section = line.substr(1, line.size() - 2);
            static const char* known[] = {"meta", "buses", "lines", "generators", "ess", "loads"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                cur.fail("unknown section [" + section + "]");
            continue;
        }
        if (section.empty()) cur.fail("data before any section header");

        if (section == "meta") {
            auto eq = line.find('=');
            if (eq == std::string::npos) cur.fail("expected key = value");
            meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
            // meta must precede data sections so horizon is known for profiles
            model.name = meta.count("name") ? meta["name"] : model.name;
            if (meta.count("kind")) {
                if (meta["kind"] == "dc") model.kind = NetworkKind::dc;
                else if (meta["kind"] == "ac") model.kind = NetworkKind::ac;
                else cur.fail("kind must be dc or ac");
            }
            if (meta.count("base_mva")) model.base_mva = parse_num(meta["base_mva"], cur);
            if (meta.count("horizon")) model.horizon = parse_int(meta["horizon"], cur);
            if (meta.count("dt")) model.dt = parse_num(meta["dt"], cur);
            if (meta.count("k_c")) model.weights.k_c = parse_num(meta["k_c"], cur);
            if (meta.count("k_sc")) model.weights.k_sc = parse_num(meta["k_sc"], cur);
            if (meta.count("k_nc")) model.weights.k_nc = parse_num(meta["k_nc"], cur);
            if (meta.count("failable_lines"))
                model.failable_lines = meta["failable_lines"] == "true";
            continue;
        }

        if (section == "buses") {
            auto t = split_ws(line);
            if (t.size() != 6 && t.size() != 8)
                cur.fail("bus row needs 6 or 8 fields: id v_min v_max theta_min theta_max "
                         "slack [slack_p_min slack_p_max]");
            Bus b;
            b.id = parse_int(t[0], cur);
            b.v_min = parse_num(t[1], cur);
            b.v_max = parse_num(t[2], cur);
            b.theta_min = parse_num(t[3], cur);
            b.theta_max = parse_num(t[4], cur);
            b.is_slack = parse_int(t[5], cur) != 0;
            if (b.is_slack) {
                if (t.size() != 8) cur.fail("slack bus needs slack_p_min slack_p_max");
                b.slack_p_min = parse_num(t[6], cur);
                b.slack_p_max = parse_num(t[7], cur);
            }
            model.buses.push_back(b);
        } else if (section == "lines") {
            auto t = split_ws(line);
            if (t.size() != 6) cur.fail("line row needs 6 fields: from to g b p_lim q_lim");
            Line l;
            l.from_bus = parse_int(t[0], cur);
            l.to_bus = parse_int(t[1], cur);
            l.g = parse_num(t[2], cur);
            l.b = parse_num(t[3], cur);
            l.p_lim = parse_num(t[4], cur);
            l.q_lim = parse_num(t[5], cur);
            model.lines.push_back(l);
        } else if (section == "generators") {
            auto t = split_ws(line);
            if (t.size() != 7)
                cur.fail("generator row needs 7 fields: bus p_min p_max q_min q_max pof k_robust");
            Generator g;
            g.bus = parse_int(t[0], cur);
            g.p_min = parse_num(t[1], cur);
            g.p_max = parse_num(t[2], cur);
            g.q_min = parse_num(t[3], cur);
            g.q_max = parse_num(t[4], cur);
            g.pof = parse_num(t[5], cur);
            g.k_robust = parse_num(t[6], cur);
            model.generators.push_back(g);
        } else if (section == "ess") {
            auto t = split_ws(line);
            if (t.size() != 7 && t.size() != 8)
                cur.fail("ess row needs 7 or 8 fields: bus capacity c_max d_max soc_min "
                         "soc_max eta [e_init]");
            EssUnit e;
            e.bus = parse_int(t[0], cur);
            e.capacity = parse_num(t[1], cur);
            e.c_max = parse_num(t[2], cur);
            e.d_max = parse_num(t[3], cur);
            e.soc_min = parse_num(t[4], cur);
            e.soc_max = parse_num(t[5], cur);
            e.eta = parse_num(t[6], cur);
            e.e_min = e.soc_min * e.capacity;
            e.e_max = e.soc_max * e.capacity;
            e.e_init = t.size() == 8 ? parse_num(t[7], cur) : e.e_max;
            model.ess_units.push_back(e);
        } else if (section == "loads") {
            // bus class p1,...,pT [; q1,...,qT]
            auto first_ws = line.find_first_of(" \t");
            if (first_ws == std::string::npos) cur.fail("load row needs bus class profile");
            std::string bus_tok = line.substr(0, first_ws);
            std::string rest = trim(line.substr(first_ws));
            auto second_ws = rest.find_first_of(" \t");
            if (second_ws == std::string::npos) cur.fail("load row needs a class and a profile");
            std::string cls_tok = rest.substr(0, second_ws);
            std::string profiles = trim(rest.substr(second_ws));

            LoadPoint lp;
            lp.bus = parse_int(bus_tok, cur);
            if (cls_tok == "critical") lp.cls = LoadClass::critical;
            else if (cls_tok == "semi_critical") lp.cls = LoadClass::semi_critical;
            else if (cls_tok == "non_critical") lp.cls = LoadClass::non_critical;
            else cur.fail("unknown load class '" + cls_tok + "'");

            auto semi = profiles.find(';');
            lp.p_profile = parse_profile(
                semi == std::string::npos ? profiles : trim(profiles.substr(0, semi)),
                model.horizon, cur);
            if (semi != std::string::npos)
                lp.q_profile = parse_profile(trim(profiles.substr(semi + 1)), model.horizon, cur);
            model.loads.push_back(lp);
        }
    }

    return model;
}

NetworkModel load_case(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open case file: " + path);
    NetworkModel model = parse_case(in, path);
    if (model.name.empty()) model.name = path;
    ValidationReport report = validate(model);
    if (!report.ok())
        throw ValidationError("invalid case " + path + ":\n" + report.to_string());
    return model;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {
void find(ValidationReport& r, const std::string& field, const std::string& msg) {
    r.findings.push_back({field, msg});
}
}  // namespace

ValidationReport validate(const NetworkModel& m) {
    ValidationReport r;
    if (m.horizon <= 0) find(r, "horizon", "must be positive");
    if (m.dt <= 0) find(r, "dt", "must be positive");
    if (m.base_mva <= 0) find(r, "base_mva", "must be positive");
    if (!(m.weights.k_c > m.weights.k_sc && m.weights.k_sc > m.weights.k_nc &&
          m.weights.k_nc > 0))
        find(r, "weights", "class weights must satisfy k_c > k_sc > k_nc > 0");

    int slack_count = 0;
    for (std::size_t i = 0; i < m.buses.size(); ++i) {
        const Bus& b = m.buses[i];
        std::string at = "buses[" + std::to_string(i) + "]";
        if (!(b.v_min < b.v_max)) find(r, at + ".v_min", "v_min must be below v_max");
        if (!(b.theta_min < b.theta_max))
            find(r, at + ".theta_min", "theta_min must be below theta_max");
        if (b.is_slack) {
            ++slack_count;
            if (!(b.slack_p_min < b.slack_p_max))
                find(r, at + ".slack_p_min", "slack_p_min must be below slack_p_max");
        }
        for (std::size_t j = i + 1; j < m.buses.size(); ++j)
            if (m.buses[j].id == b.id)
                find(r, "buses[" + std::to_string(j) + "].id", "duplicate bus id");
    }
    if (slack_count != 1)
        find(r, "is_slack", "exactly one slack bus required, found " +
                                std::to_string(slack_count));

    for (std::size_t i = 0; i < m.lines.size(); ++i) {
        const Line& l = m.lines[i];
        std::string at = "lines[" + std::to_string(i) + "]";
        if (l.from_bus == l.to_bus) find(r, at + ".to_bus", "line endpoints must differ");
        if (m.bus_index(l.from_bus) < 0) find(r, at + ".from_bus", "unknown bus id");
        if (m.bus_index(l.to_bus) < 0) find(r, at + ".to_bus", "unknown bus id");
        if (!(l.p_lim > 0)) find(r, at + ".p_lim", "must be positive");
        if (l.q_lim < 0) find(r, at + ".q_lim", "must be nonnegative");
    }

    for (std::size_t i = 0; i < m.generators.size(); ++i) {
        const Generator& g = m.generators[i];
        std::string at = "generators[" + std::to_string(i) + "]";
        if (m.bus_index(g.bus) < 0) find(r, at + ".bus", "unknown bus id");
        if (!(0 <= g.p_min && g.p_min <= g.p_max)) find(r, at + ".p_min", "need 0 <= p_min <= p_max");
        if (g.q_min > g.q_max) find(r, at + ".q_min", "q_min above q_max");
        if (!(g.pof >= 0 && g.pof < 1)) find(r, at + ".pof", "must be in [0,1)");
        if (!(g.k_robust > 0)) find(r, at + ".k_robust", "must be positive");
    }

    for (std::size_t i = 0; i < m.ess_units.size(); ++i) {
        const EssUnit& e = m.ess_units[i];
        std::string at = "ess[" + std::to_string(i) + "]";
        if (m.bus_index(e.bus) < 0) find(r, at + ".bus", "unknown bus id");
        if (!(0 < e.e_min && e.e_min < e.e_max && e.e_max <= e.capacity + 1e-12))
            find(r, at + ".e_min", "need 0 < e_min < e_max <= capacity");
        if (std::abs(e.e_min - e.soc_min * e.capacity) > 1e-9 * std::max(1.0, e.capacity))
            find(r, at + ".soc_min", "e_min must equal soc_min * capacity");
        if (!(e.eta > 0 && e.eta <= 1)) find(r, at + ".eta", "must be in (0,1]");
        if (!(e.e_min <= e.e_init && e.e_init <= e.e_max))
            find(r, at + ".e_init", "must lie within [e_min, e_max]");
        if (e.c_max < 0 || e.d_max < 0) find(r, at + ".c_max", "rates must be nonnegative");
    }

    for (std::size_t i = 0; i < m.loads.size(); ++i) {
        const LoadPoint& l = m.loads[i];
        std::string at = "loads[" + std::to_string(i) + "]";
        if (m.bus_index(l.bus) < 0) find(r, at + ".bus", "unknown bus id");
        if (l.p_profile.size() != m.horizon)
            find(r, at + ".profile", "profile length must equal the horizon");
        else if ((l.p_profile.array() < 0).any())
            find(r, at + ".profile", "profile values must be nonnegative");
        if (l.q_profile.size() != 0 && l.q_profile.size() != m.horizon)
            find(r, at + ".q_profile", "q profile length must equal the horizon");
    }

    // connectivity over the full line graph
    if (slack_count == 1 && r.ok()) {
        auto isl = islanded_buses(m);
        if (!isl.empty())
            find(r, "lines", "line graph is disconnected: " + std::to_string(isl.size()) +
                                 " bus(es) unreachable from the slack");
    }
    return r;
}

// ---------------------------------------------------------------------------
// Admittance and scenarios
// ---------------------------------------------------------------------------

std::vector<int> islanded_buses(const NetworkModel& m) {
    const int n = static_cast<int>(m.buses.size());
    std::vector<int> stack;
    std::vector<char> seen(n, 0);
    int s = m.slack_index();
    if (s < 0) s = 0;
    stack.push_back(s);
    seen[s] = 1;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (const auto& l : m.lines) {
            int a = m.bus_index(l.from_bus), b = m.bus_index(l.to_bus);
            if (a == u && !seen[b]) { seen[b] = 1; stack.push_back(b); }
            if (b == u && !seen[a]) { seen[a] = 1; stack.push_back(a); }
        }
    }
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        if (!seen[i]) out.push_back(i);
    return out;
}

BusAdmittance admittance(const NetworkModel& m) {
    const int n = static_cast<int>(m.buses.size());
    BusAdmittance y;
    y.G = Matrix::Zero(n, n);
    y.B = Matrix::Zero(n, n);
    const bool dc = m.kind == NetworkKind::dc;
    for (const auto& l : m.lines) {
        int a = m.bus_index(l.from_bus), b = m.bus_index(l.to_bus);
        if (a < 0 || b < 0) throw ValidationError("line references unknown bus");
        y.G(a, a) += l.g;
        y.G(b, b) += l.g;
        y.G(a, b) -= l.g;
        y.G(b, a) -= l.g;
        if (!dc) {
            y.B(a, a) += l.b;
            y.B(b, b) += l.b;
            y.B(a, b) -= l.b;
            y.B(b, a) -= l.b;
        }
    }
    if (!islanded_buses(m).empty()) throw ValidationError("network graph is disconnected");
    return y;
}

ScenarioApplication apply_scenario(const NetworkModel& m, const Scenario& s) {
    if (static_cast<int>(s.mask.size()) != m.failable_count())
        throw ValidationError("scenario mask length " + std::to_string(s.mask.size()) +
                              " does not match failable component count " +
                              std::to_string(m.failable_count()));
    ScenarioApplication out;
    out.model = m;
    const int ng = static_cast<int>(m.generators.size());
    for (int i = 0; i < ng; ++i) {
        if (s.mask[i]) {
            out.model.generators[i].p_max = 0;
            out.model.generators[i].p_min = 0;
            out.model.generators[i].q_max = 0;
            out.model.generators[i].q_min = 0;
        }
    }
    if (m.failable_lines) {
        std::vector<Line> kept;
        for (std::size_t i = 0; i < m.lines.size(); ++i)
            if (!s.mask[ng + i]) kept.push_back(m.lines[i]);
        out.model.lines = std::move(kept);
    }
    out.islanded_buses = islanded_buses(out.model);
    return out;
}

// ---------------------------------------------------------------------------
// Per-unit conversion
// ---------------------------------------------------------------------------

namespace {
NetworkModel scale_power_fields(const NetworkModel& m, Scalar f, Units new_units) {
    NetworkModel out = m;
    out.units = new_units;
    for (auto& b : out.buses) {
        b.slack_p_min *= f;
        b.slack_p_max *= f;
    }
    for (auto& l : out.lines) {
        l.p_lim *= f;
        l.q_lim *= f;
    }
    for (auto& g : out.generators) {
        g.p_min *= f;
        g.p_max *= f;
        g.q_min *= f;
        g.q_max *= f;
    }
    for (auto& e : out.ess_units) {
        e.capacity *= f;
        e.e_min *= f;
        e.e_max *= f;
        e.e_init *= f;
        e.c_max *= f;
        e.d_max *= f;
    }
    for (auto& l : out.loads) {
        l.p_profile *= f;
        if (l.q_profile.size()) l.q_profile *= f;
    }
    return out;
}
}  // namespace

NetworkModel to_per_unit(const NetworkModel& m) {
    if (m.units == Units::per_unit) return m;
    return scale_power_fields(m, 1.0 / m.base_mva, Units::per_unit);
}

NetworkModel from_per_unit(const NetworkModel& m) {
    if (m.units == Units::mw) return m;
    return scale_power_fields(m, m.base_mva, Units::mw);
}

}  // namespace ems
