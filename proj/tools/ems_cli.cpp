// Command-line front end: validation, power-flow runs, scenario audits,
// training, evaluation, benchmarking and report assembly.

#include "ems/baseline_optimizer.hpp"
#include "ems/csv.hpp"
#include "ems/ppo_agent.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ems;

namespace {

struct RunConfig {
    std::string case_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    Scalar threshold = 0.0005;
    Scalar alpha = 0.95;
    std::string mode = "resilient-rl";  // base | resilient-rl | resilient-opt
    EnvConfig env;
    PpoConfig ppo;
};

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) { return v == "true" || v == "1" || v == "yes"; }

void apply_config_file(RunConfig& rc, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config: " + path);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        auto num = [&] { return std::stod(val); };
        if (section == "run") {
            if (key == "case") rc.case_path = val;
            else if (key == "out") rc.out_dir = val;
            else if (key == "seed") rc.seed = std::stoull(val);
            else if (key == "threshold") rc.threshold = num();
            else if (key == "alpha") rc.alpha = num();
            else if (key == "mode") rc.mode = val;
            else throw ParseError(path + ": unknown [run] key " + key);
        } else if (section == "env") {
            if (key == "repair_cap") rc.env.repair_cap = static_cast<int>(num());
            else if (key == "lambda_vtheta") rc.env.lambda_vtheta = num();
            else if (key == "lambda_pq") rc.env.lambda_pq = num();
            else if (key == "k1") rc.env.k1 = num();
            else if (key == "k2") rc.env.k2 = num();
            else if (key == "cycle_repair") rc.env.cycle_repair = parse_bool(val);
            else if (key == "infeasible_penalty") rc.env.infeasible_penalty = num();
            else if (key == "paper_q_sign") rc.env.power_flow.paper_q_sign = parse_bool(val);
            else throw ParseError(path + ": unknown [env] key " + key);
        } else if (section == "ppo") {
            if (key == "gamma") rc.ppo.gamma = num();
            else if (key == "clip_eps") rc.ppo.clip_eps = num();
            else if (key == "c1") rc.ppo.c1 = num();
            else if (key == "c2") rc.ppo.c2 = num();
            else if (key == "learning_rate") rc.ppo.learning_rate = num();
            else if (key == "rollout_steps") rc.ppo.rollout_steps = static_cast<int>(num());
            else if (key == "minibatch_size") rc.ppo.minibatch_size = static_cast<int>(num());
            else if (key == "epochs_per_update") rc.ppo.epochs_per_update = static_cast<int>(num());
            else if (key == "total_episodes") rc.ppo.total_episodes = static_cast<long>(num());
            else if (key == "init_log_std") rc.ppo.init_log_std = num();
            else if (key == "normalize_advantages") rc.ppo.normalize_advantages = parse_bool(val);
            else if (key == "use_gae") rc.ppo.use_gae = parse_bool(val);
            else if (key == "gae_lambda") rc.ppo.gae_lambda = num();
            else if (key == "reward_scale") rc.ppo.reward_scale = num();
            else if (key == "checkpoint_every_updates")
                rc.ppo.checkpoint_every_updates = static_cast<int>(num());
            else if (key == "num_envs") rc.ppo.num_envs = static_cast<int>(num());
            else if (key == "hidden") {
                rc.ppo.hidden.clear();
                std::istringstream ss(val);
                std::string tok;
                while (std::getline(ss, tok, ',')) rc.ppo.hidden.push_back(std::stoi(trim(tok)));
            } else {
                throw ParseError(path + ": unknown [ppo] key " + key);
            }
        } else {
            throw ParseError(path + ": unknown section [" + section + "]");
        }
    }
}

void finalize(RunConfig& rc) {
    if (rc.mode != "base" && rc.mode != "resilient-rl" && rc.mode != "resilient-opt")
        throw ValidationError("unknown mode: " + rc.mode);
    if (!(rc.threshold >= 0 && rc.threshold <= 1))
        throw ValidationError("threshold must be in [0,1]");
    rc.ppo.seed = rc.seed;
    if (const char* cap = std::getenv("EMS_THREADS"))
        rc.ppo.num_envs = std::max(1, std::min(rc.ppo.num_envs, std::atoi(cap)));
}

ScenarioSet retained_scenarios(const NetworkModel& model, Scalar threshold) {
    return enumerate_scenarios(model.failable_pofs(), threshold);
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& case_path) {
    std::ifstream probe(case_path);
    if (!probe) {
        std::cerr << "error: cannot read " << case_path << "\n";
        return 2;
    }
    NetworkModel model;
    try {
        model = parse_case(probe, case_path);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    ValidationReport report = validate(model);
    for (const auto& f : report.findings) std::cout << f.field << ": " << f.message << "\n";
    std::cout << (report.ok() ? "ok" : "invalid") << ": " << case_path << " (" << model.buses.size()
              << " buses, " << model.lines.size() << " lines, " << model.generators.size()
              << " generators, " << model.ess_units.size() << " ess, " << model.loads.size()
              << " loads)\n";
    return report.ok() ? 0 : 1;
}

int cmd_powerflow(const RunConfig& rc, const std::string& injections_path, int hour) {
    NetworkModel model = load_case(rc.case_path);
    const int nb = static_cast<int>(model.buses.size());
    Vector p = Vector::Zero(nb), q = Vector::Zero(nb);
    if (!injections_path.empty()) {
        std::ifstream in(injections_path);
        if (!in) throw ParseError("cannot open injections file: " + injections_path);
        std::string line;
        std::getline(in, line);  // header: bus,p_mw[,q_mvar]
        while (std::getline(in, line)) {
            line = trim(line);
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string tok;
            std::getline(ss, tok, ',');
            int bus = std::stoi(tok);
            int bi = model.bus_index(bus);
            if (bi < 0) throw ParseError("injections file references unknown bus " +
                                         std::to_string(bus));
            std::getline(ss, tok, ',');
            p[bi] += std::stod(tok);
            if (std::getline(ss, tok, ',')) q[bi] += std::stod(tok);
        }
    } else {
        // net injections from the case's hour profile: loads draw power
        for (std::size_t l = 0; l < model.loads.size(); ++l) {
            int bi = model.bus_index(model.loads[l].bus);
            p[bi] -= model.load_p(static_cast<int>(l), hour);
            q[bi] -= model.load_q(static_cast<int>(l), hour);
        }
    }

    PowerFlowSolution sol = model.kind == NetworkKind::dc
                                ? solve_dc(model, p, rc.env.power_flow)
                                : solve_ac(model, p, q, rc.env.power_flow);

    fs::create_directories(rc.out_dir);
    {
        CsvWriter bus(rc.out_dir + "/bus.csv", {"bus", "v", "theta", "p_inj", "q_inj"});
        for (int i = 0; i < nb; ++i) {
            bus.field(model.buses[i].id)
                .field(sol.v[i])
                .field(sol.theta[i])
                .field(p[i])
                .field(q[i]);
            bus.end_row();
        }
        CsvWriter line(rc.out_dir + "/line.csv", {"line", "from", "to", "p", "q"});
        for (std::size_t e = 0; e < model.lines.size(); ++e) {
            line.field(static_cast<int>(e))
                .field(model.lines[e].from_bus)
                .field(model.lines[e].to_bus)
                .field(sol.line_p[e])
                .field(sol.line_q[e]);
            line.end_row();
        }
    }
    std::cout << "converged=" << (sol.converged ? "true" : "false") << " iters=" << sol.iterations
              << " mismatch=" << fmt_double(sol.max_mismatch) << "\n";
    return sol.converged ? 0 : 1;
}

int cmd_scenarios(const RunConfig& rc) {
    NetworkModel model = load_case(rc.case_path);
    ScenarioSet set = retained_scenarios(model, rc.threshold);
    fs::create_directories(rc.out_dir);
    CsvWriter csv(rc.out_dir + "/scenarios.csv", {"mask_hex", "probability"});
    for (const auto& s : set.scenarios) {
        csv.field(s.mask_hex()).field(s.probability);
        csv.end_row();
    }
    const int n = model.failable_count();
    std::cout << "n=" << n << " total=" << (1LL << n) << " retained=" << set.size()
              << " dropped_mass=" << fmt_double(set.dropped_mass) << "\n";
    return 0;
}

void write_checkpoint_files(const TrainResult& state, const PpoConfig& ppo,
                            const std::string& out_dir) {
    Checkpoint cp;
    cp.params = state.params;
    cp.config_hash = ppo.hash();
    cp.update_index = state.updates_done;
    cp.episodes_done = state.episodes_done;
    cp.adam_m = state.adam_m;
    cp.adam_v = state.adam_v;
    cp.adam_t = state.adam_t;
    save_checkpoint(cp, out_dir + "/checkpoint.ckpt");
}

void write_training_log(const std::vector<TrainingLogRow>& log, const std::string& path) {
    CsvWriter csv(path, {"update", "episodes", "steps", "mean_episode_reward", "mean_repairs",
                         "loss_policy", "loss_value", "loss_entropy", "param_norm",
                         "wall_clock_s"});
    for (const auto& r : log) {
        csv.field(r.update)
            .field(r.episodes_done)
            .field(r.steps_done)
            .field(r.mean_episode_reward)
            .field(r.mean_repairs)
            .field(r.loss_policy)
            .field(r.loss_value)
            .field(r.loss_entropy)
            .field(r.param_norm)
            .field(r.wall_clock_s);
        csv.end_row();
    }
}

int cmd_train(RunConfig& rc, const std::string& resume_path) {
    NetworkModel model = load_case(rc.case_path);
    ScenarioSet set = retained_scenarios(model, rc.threshold);
    fs::create_directories(rc.out_dir);

    Checkpoint resume;
    const Checkpoint* resume_ptr = nullptr;
    if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path, &rc.ppo);
        resume_ptr = &resume;
    }

    TrainCallbacks cb;
    cb.on_checkpoint = [&](const TrainResult& state) {
        write_checkpoint_files(state, rc.ppo, rc.out_dir);
    };
    TrainResult result = train(model, set, rc.ppo, rc.env, cb, resume_ptr);
    write_checkpoint_files(result, rc.ppo, rc.out_dir);
    write_training_log(result.log, rc.out_dir + "/training_log.csv");
    std::cout << "trained episodes=" << result.episodes_done << " updates=" << result.updates_done
              << " checkpoint=" << rc.out_dir << "/checkpoint.ckpt\n";
    return 0;
}

void write_eval_outputs(const NetworkModel& model, const ScenarioSet& set, const EvalResult& ev,
                        const std::string& out_dir, Scalar threshold) {
    fs::create_directories(out_dir);
    {
        json j;
        j["alpha"] = ev.risk.alpha;
        j["var"] = ev.risk.var;
        j["cvar"] = ev.risk.cvar;
        j["expected_weighted_served"] = ev.risk.expected_weighted;
        j["threshold"] = threshold;
        j["retained_scenarios"] = set.size();
        j["dropped_mass"] = set.dropped_mass;
        j["worst_scenario"] = ev.worst_scenario;
        j["worst_scenario_mask"] = set.scenarios[ev.worst_scenario].mask_hex();
        std::ofstream(out_dir + "/risk.json") << j.dump(2) << "\n";
    }
    {
        CsvWriter csv(out_dir + "/eval_scenarios.csv",
                      {"scenario", "mask_hex", "probability", "loss", "weighted_served",
                       "infeasible"});
        for (const auto& s : ev.per_scenario) {
            csv.field(s.scenario)
                .field(set.scenarios[s.scenario].mask_hex())
                .field(set.scenarios[s.scenario].probability)
                .field(s.loss)
                .field(s.weighted_served)
                .field(s.infeasible ? 1 : 0);
            csv.end_row();
        }
    }
    {
        static const char* cls_names[3] = {"critical", "semi_critical", "non_critical"};
        CsvWriter csv(out_dir + "/eval_curves.csv",
                      {"hour", "class", "profile_mw", "expected_served_mw", "worst_served_mw"});
        for (int t = 0; t < model.horizon; ++t)
            for (int cls = 0; cls < 3; ++cls) {
                csv.field(t)
                    .field(std::string(cls_names[cls]))
                    .field(ev.profile_by_class(cls, t))
                    .field(ev.served_by_class_expected(cls, t))
                    .field(ev.served_by_class_worst(cls, t));
                csv.end_row();
            }
    }
    {
        // storage and converter trajectories from the most probable scenario
        int nominal = 0;
        Scalar best = -1;
        for (int s = 0; s < set.size(); ++s)
            if (set.scenarios[s].probability > best) {
                best = set.scenarios[s].probability;
                nominal = s;
            }
        const EpisodeTrace& trace = ev.per_scenario[nominal].trace;
        std::vector<std::string> soc_header = {"hour"};
        for (std::size_t e = 0; e < model.ess_units.size(); ++e)
            soc_header.push_back("soc_" + std::to_string(e));
        CsvWriter soc(out_dir + "/soc.csv", soc_header);
        std::vector<std::string> gen_header = {"hour"};
        for (std::size_t g = 0; g < model.generators.size(); ++g)
            gen_header.push_back("gen_" + std::to_string(g) + "_mw");
        CsvWriter gen(out_dir + "/converters.csv", gen_header);
        for (int t = 0; t < model.horizon && t < static_cast<int>(trace.intervals.size()); ++t) {
            const auto& rec = trace.intervals[t];
            soc.field(t);
            for (std::size_t e = 0; e < model.ess_units.size(); ++e)
                soc.field(rec.observation.ess_energy[e] / model.ess_units[e].capacity);
            soc.end_row();
            gen.field(t);
            for (Index g = 0; g < rec.gen_mw.size(); ++g) gen.field(rec.gen_mw[g]);
            gen.end_row();
        }
    }
}

int cmd_evaluate(RunConfig& rc, const std::string& checkpoint_path) {
    NetworkModel model = load_case(rc.case_path);
    ScenarioSet set = retained_scenarios(model, rc.threshold);
    Checkpoint cp = load_checkpoint(checkpoint_path, nullptr);
    if (cp.params.policy_shape.input != Observation::flat_size(model) ||
        cp.params.action_dim != action_dim(model))
        throw ValidationError("checkpoint dimensions do not match the case");
    EvalResult ev = evaluate(cp.params, model, set, rc.alpha, rc.env);
    write_eval_outputs(model, set, ev, rc.out_dir, rc.threshold);
    std::cout << "cvar=" << fmt_double(ev.risk.cvar) << " var=" << fmt_double(ev.risk.var)
              << " expected_weighted=" << fmt_double(ev.risk.expected_weighted) << "\n";
    return 0;
}

void write_plan_trace(const NetworkModel& model, const DispatchPlan& plan,
                      const std::string& path) {
    CsvWriter csv(path, {"hour", "repairs", "r_obj", "r_ineq", "r_slack", "total",
                         "served_critical_mw", "served_semi_critical_mw",
                         "served_non_critical_mw"});
    for (int t = 0; t < model.horizon; ++t) {
        Scalar by_class[3] = {0, 0, 0};
        Scalar r_obj = 0;
        for (Index l = 0; l < plan.served_mw.cols(); ++l) {
            int cls = model.loads[l].cls == LoadClass::critical        ? 0
                      : model.loads[l].cls == LoadClass::semi_critical ? 1
                                                                       : 2;
            by_class[cls] += plan.served_mw(t, l);
            r_obj += model.weight(model.loads[l].cls) * plan.served_mw(t, l) * model.dt;
        }
        csv.field(t).field(0).field(r_obj).field(0.0).field(0.0).field(r_obj);
        csv.field(by_class[0]).field(by_class[1]).field(by_class[2]);
        csv.end_row();
    }
}

void write_episode_trace(const NetworkModel& model, const EpisodeTrace& trace,
                         const std::string& path) {
    CsvWriter csv(path, {"hour", "repairs", "r_obj", "r_ineq", "r_slack", "total",
                         "served_critical_mw", "served_semi_critical_mw",
                         "served_non_critical_mw"});
    for (std::size_t t = 0; t < trace.intervals.size(); ++t) {
        const auto& rec = trace.intervals[t];
        Scalar by_class[3] = {0, 0, 0};
        for (Index l = 0; l < rec.served_mw.size(); ++l) {
            int cls = model.loads[l].cls == LoadClass::critical        ? 0
                      : model.loads[l].cls == LoadClass::semi_critical ? 1
                                                                       : 2;
            by_class[cls] += rec.served_mw[l];
        }
        csv.field(static_cast<int>(t))
            .field(rec.repairs)
            .field(rec.reward.r_obj)
            .field(rec.reward.r_ineq)
            .field(rec.reward.r_slack)
            .field(rec.reward.total);
        csv.field(by_class[0]).field(by_class[1]).field(by_class[2]);
        csv.end_row();
    }
}

int cmd_benchmark(RunConfig& rc, const std::string& checkpoint_path, long train_episodes) {
    NetworkModel model = load_case(rc.case_path);
    ScenarioSet set = retained_scenarios(model, rc.threshold);
    fs::create_directories(rc.out_dir);

    json summary;
    summary["case"] = model.name;
    bool partial = false;

    // --- base dispatch: no hedging, no robustness coupling ------------------
    DispatchPlan base;
    try {
        BaselineOptions opt;
        opt.robustness_coupling = false;
        base = solve_deterministic(model, opt);
        write_plan_trace(model, base, rc.out_dir + "/base_plan.csv");
        summary["base"] = {{"weighted_served", base.weighted_served_total},
                           {"status", to_string(base.status)},
                           {"seconds", base.solve_seconds}};
    } catch (const std::exception& e) {
        partial = true;
        summary["base"] = {{"error", e.what()}};
    }

    // --- scenario-hedged convex plan ----------------------------------------
    ScenarioPlanResult opt_plan;
    try {
        opt_plan = solve_scenario_based(model, set, rc.alpha);
        write_plan_trace(model, opt_plan.plan, rc.out_dir + "/opt_plan.csv");
        summary["opt"] = {{"weighted_served", opt_plan.plan.weighted_served_total},
                          {"status", to_string(opt_plan.plan.status)},
                          {"cvar", opt_plan.epigraph_cvar},
                          {"seconds", opt_plan.plan.solve_seconds}};
    } catch (const std::exception& e) {
        partial = true;
        summary["opt"] = {{"error", e.what()}};
    }

    // --- policy evaluation ----------------------------------------------------
    Scalar rl_nominal = 0, rl_seconds = 0;
    try {
        Checkpoint cp;
        if (!checkpoint_path.empty()) {
            cp = load_checkpoint(checkpoint_path, nullptr);
        } else {
            PpoConfig quick = rc.ppo;
            quick.total_episodes = train_episodes;
            TrainResult tr = train(model, set, quick, rc.env);
            cp.params = tr.params;
        }
        EvalResult ev = evaluate(cp.params, model, set, rc.alpha, rc.env);
        rl_seconds = ev.mean_rollout_seconds;
        int nominal = 0;
        Scalar best = -1;
        for (int s = 0; s < set.size(); ++s)
            if (set.scenarios[s].probability > best) {
                best = set.scenarios[s].probability;
                nominal = s;
            }
        rl_nominal = ev.per_scenario[nominal].weighted_served;
        write_episode_trace(model, ev.per_scenario[nominal].trace, rc.out_dir + "/rl_trace.csv");
        summary["rl"] = {{"weighted_served", rl_nominal},
                         {"cvar", ev.risk.cvar},
                         {"expected_weighted", ev.risk.expected_weighted},
                         {"rollout_seconds", ev.mean_rollout_seconds}};

        // per-hour comparison of total served MW
        CsvWriter cmp(rc.out_dir + "/comparison.csv",
                      {"hour", "base_served_mw", "opt_served_mw", "rl_served_mw"});
        for (int t = 0; t < model.horizon; ++t) {
            Scalar b = base.status == LpStatus::optimal ? base.served_mw.row(t).sum() : 0;
            Scalar o = opt_plan.plan.status == LpStatus::optimal
                           ? opt_plan.plan.served_mw.row(t).sum()
                           : 0;
            Scalar r = ev.per_scenario[nominal].trace.intervals[t].served_mw.sum();
            cmp.field(t).field(b).field(o).field(r);
            cmp.end_row();
        }
    } catch (const std::exception& e) {
        partial = true;
        summary["rl"] = {{"error", e.what()}};
    }

    {
        CsvWriter tm(rc.out_dir + "/timings.csv", {"system", "method", "seconds", "tag"});
        tm.field(model.name).field("rl-evaluate").field(rl_seconds).field("measured");
        tm.end_row();
        tm.field(model.name)
            .field("optimization")
            .field(opt_plan.plan.solve_seconds)
            .field("measured");
        tm.end_row();
        tm.field("mvdc-ship").field("rl-evaluate").field(1.43).field("paper-reference");
        tm.end_row();
        tm.field("mvdc-ship").field("optimization").field(7.12).field("paper-reference");
        tm.end_row();
        tm.field("ieee30").field("rl-evaluate").field(1.91).field("paper-reference");
        tm.end_row();
        tm.field("ieee30").field("optimization").field(15.2).field("paper-reference");
        tm.end_row();
    }
    std::ofstream(rc.out_dir + "/benchmark.json") << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";
    return partial ? 1 : 0;
}

int cmd_report(const std::string& out_dir) {
    std::vector<std::string> required = {"comparison.csv", "benchmark.json"};
    std::vector<std::string> optional = {"eval_curves.csv", "soc.csv", "converters.csv",
                                         "timings.csv", "training_log.csv"};
    std::vector<std::string> missing;
    for (const auto& f : required)
        if (!fs::exists(fs::path(out_dir) / f)) missing.push_back(f);
    if (!missing.empty()) {
        for (const auto& f : missing) std::cerr << "missing input: " << out_dir << "/" << f << "\n";
        return 1;
    }

    std::ofstream md(fs::path(out_dir) / "report.md");
    md << "# Dispatch comparison report\n\n";
    {
        std::ifstream j(fs::path(out_dir) / "benchmark.json");
        json summary = json::parse(j);
        md << "Case: `" << summary.value("case", std::string("?")) << "`\n\n";
        md << "## Totals (weighted served)\n\n";
        md << "| method | weighted served |\n|---|---|\n";
        for (const char* k : {"base", "opt", "rl"}) {
            if (summary.contains(k) && summary[k].contains("weighted_served"))
                md << "| " << k << " | " << summary[k]["weighted_served"].dump() << " |\n";
            else
                md << "| " << k << " | unavailable |\n";
        }
        md << "\n";
    }
    auto embed = [&](const std::string& file, const std::string& title) {
        fs::path p = fs::path(out_dir) / file;
        if (!fs::exists(p)) return;
        md << "## " << title << "\n\n```\n";
        std::ifstream in(p);
        std::string line;
        int rows = 0;
        while (std::getline(in, line) && rows++ < 200) md << line << "\n";
        md << "```\n\n(" << file << ")\n\n";
    };
    embed("comparison.csv", "Hourly served comparison");
    embed("eval_curves.csv", "Per-class served curves");
    embed("soc.csv", "Storage state of charge");
    embed("converters.csv", "Converter outputs");
    embed("timings.csv", "Timing comparison");
    md << "Plot-ready data: every table above is a plain CSV in this directory.\n";
    std::cout << "report written: " << out_dir << "/report.md\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk-aware preventive energy management toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig rc;
    std::string config_path, injections_path, checkpoint_path, resume_path;
    int hour = 0;
    long bench_train_episodes = 2000;

    app.add_option("--config", config_path, "structured-text run configuration");
    app.add_option("--case", rc.case_path, "case file");
    app.add_option("--out", rc.out_dir, "output directory");
    app.add_option("--seed", rc.seed, "master seed");
    app.add_option("--threshold", rc.threshold, "scenario probability threshold");
    app.add_option("--alpha", rc.alpha, "CVaR confidence level");

    auto* validate_cmd = app.add_subcommand("validate", "check a case file");
    auto* powerflow_cmd = app.add_subcommand("powerflow", "solve one power flow");
    powerflow_cmd->add_option("--injections", injections_path, "CSV bus,p_mw[,q_mvar]");
    powerflow_cmd->add_option("--hour", hour, "use the case's load profile at this hour");
    powerflow_cmd->add_flag("--paper-q-sign", rc.env.power_flow.paper_q_sign,
                            "printed reactive mismatch sign form");
    auto* scenarios_cmd = app.add_subcommand("scenarios", "enumerate retained scenarios");
    auto* train_cmd = app.add_subcommand("train", "train the dispatch policy");
    train_cmd->add_option("--episodes", rc.ppo.total_episodes, "episode budget");
    train_cmd->add_option("--resume", resume_path, "resume from a checkpoint");
    auto* evaluate_cmd = app.add_subcommand("evaluate", "roll out a trained policy");
    evaluate_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint")->required();
    auto* benchmark_cmd = app.add_subcommand("benchmark", "base vs optimizer vs policy");
    benchmark_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint (optional)");
    benchmark_cmd->add_option("--train-episodes", bench_train_episodes,
                              "training budget when no checkpoint is given");
    auto* report_cmd = app.add_subcommand("report", "assemble the markdown report");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) {
            RunConfig from_file;
            apply_config_file(from_file, config_path);
            // command-line values override file values where given
            if (rc.case_path.empty()) rc.case_path = from_file.case_path;
            if (rc.out_dir == "out") rc.out_dir = from_file.out_dir;
            if (app.count("--seed") == 0) rc.seed = from_file.seed;
            if (app.count("--threshold") == 0) rc.threshold = from_file.threshold;
            if (app.count("--alpha") == 0) rc.alpha = from_file.alpha;
            rc.mode = from_file.mode;
            rc.env = from_file.env;
            PpoConfig ppo = from_file.ppo;
            if (train_cmd->count("--episodes")) ppo.total_episodes = rc.ppo.total_episodes;
            rc.ppo = ppo;
        }
        finalize(rc);

        if (app.got_subcommand(validate_cmd)) return cmd_validate(rc.case_path);
        if (app.got_subcommand(powerflow_cmd)) return cmd_powerflow(rc, injections_path, hour);
        if (app.got_subcommand(scenarios_cmd)) return cmd_scenarios(rc);
        if (app.got_subcommand(train_cmd)) return cmd_train(rc, resume_path);
        if (app.got_subcommand(evaluate_cmd)) return cmd_evaluate(rc, checkpoint_path);
        if (app.got_subcommand(benchmark_cmd))
            return cmd_benchmark(rc, checkpoint_path, bench_train_episodes);
        if (app.got_subcommand(report_cmd)) return cmd_report(rc.out_dir);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
