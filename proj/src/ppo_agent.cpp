#include "ems/ppo_agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <thread>

namespace ems {

namespace {

constexpr Scalar kLog2Pi = 1.8378770664093453;  // ln(2*pi)

// Deterministic, implementation-independent draws.
Scalar canonical(std::mt19937_64& rng) {
    return static_cast<Scalar>((rng() >> 11) + 1) * 0x1p-53;  // (0, 1]
}

Scalar gaussian(std::mt19937_64& rng) {
    Scalar u1 = canonical(rng);
    Scalar u2 = canonical(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64-style stream derivation
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rng_below(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

}  // namespace

void PpoConfig::validate_or_throw() const {
    if (!(gamma > 0 && gamma <= 1)) throw ValidationError("gamma must be in (0,1]");
    if (!(clip_eps > 0 && clip_eps < 1)) throw ValidationError("clip_eps must be in (0,1)");
    if (c1 < 0 || c2 < 0) throw ValidationError("loss coefficients must be nonnegative");
    if (learning_rate <= 0) throw ValidationError("learning_rate must be positive");
    if (rollout_steps <= 0 || minibatch_size <= 0 || epochs_per_update <= 0)
        throw ValidationError("rollout/minibatch/epoch settings must be positive");
    if (total_episodes < 0) throw ValidationError("total_episodes must be nonnegative");
    if (hidden.empty()) throw ValidationError("at least one hidden layer required");
    if (num_envs <= 0) throw ValidationError("num_envs must be positive");
}

std::uint64_t PpoConfig::hash() const {
    char buf[512];
    int len = std::snprintf(buf, sizeof(buf),
                            "g=%.17g;e=%.17g;c1=%.17g;c2=%.17g;lr=%.17g;ro=%d;mb=%d;ep=%d;"
                            "seed=%llu;ls=%.17g;na=%d;gae=%d;gl=%.17g;rs=%.17g",
                            gamma, clip_eps, c1, c2, learning_rate, rollout_steps,
                            minibatch_size, epochs_per_update,
                            static_cast<unsigned long long>(seed), init_log_std,
                            normalize_advantages ? 1 : 0, use_gae ? 1 : 0, gae_lambda,
                            reward_scale);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 0x100000001b3ULL;
    }
    for (int hsz : hidden) {
        h ^= static_cast<std::uint64_t>(hsz);
        h *= 0x100000001b3ULL;
    }
    return h;
}

PolicyParameters init_policy(int obs_dim, int act_dim, const PpoConfig& config) {
    PolicyParameters p;
    p.policy_shape = {obs_dim, config.hidden, act_dim};
    p.value_shape = {obs_dim, config.hidden, 1};
    p.action_dim = act_dim;
    std::mt19937_64 rng(mix(config.seed, 0x706f6c696379ULL));
    Vector pol = mlp_init(p.policy_shape, rng, 0.01);
    Vector val = mlp_init(p.value_shape, rng, 1.0);
    p.params.resize(p.total_count());
    p.params.segment(0, p.policy_count()) = pol;
    p.params.segment(p.policy_count(), act_dim).setConstant(config.init_log_std);
    p.params.segment(p.policy_count() + act_dim, p.value_count()) = val;
    return p;
}

GaussianAction policy_forward(const PolicyParameters& p, const Vector& obs) {
    if (obs.size() != p.policy_shape.input) throw ValidationError("observation width mismatch");
    MlpWorkspace ws;
    Matrix out = mlp_forward(p.policy_shape, Vector(p.policy()), obs.transpose(), ws);
    GaussianAction a;
    a.mean = out.row(0).array().tanh().transpose();
    a.log_std = p.log_std();
    return a;
}

Scalar value_forward(const PolicyParameters& p, const Vector& obs) {
    MlpWorkspace ws;
    Matrix out = mlp_forward(p.value_shape, Vector(p.value()), obs.transpose(), ws);
    return out(0, 0);
}

Vector advantage(const Vector& rewards, const Vector& values, const Vector& next_values,
                 Scalar gamma) {
    if (rewards.size() != values.size() || rewards.size() != next_values.size())
        throw ValidationError("advantage inputs must align");
    return rewards + gamma * next_values - values;
}

LossReport ppo_loss(const Batch& batch, const PolicyParameters& params_old,
                    const PolicyParameters& params, const PpoConfig& config) {
    const Index n = batch.obs.rows();
    const int act = params.action_dim;
    if (batch.actions.rows() != n || batch.logp_old.size() != n ||
        batch.advantages.size() != n || batch.returns.size() != n)
        throw ValidationError("batch field sizes disagree");
    (void)params_old;  // the stored logp_old already encodes the old policy

    LossReport rep;
    rep.grad_ppo = Vector::Zero(params.total_count());
    rep.grad_vf = Vector::Zero(params.total_count());
    rep.grad_entropy = Vector::Zero(params.total_count());

    // --- policy head -------------------------------------------------------
    MlpWorkspace pws;
    Matrix mu_raw = mlp_forward(params.policy_shape, Vector(params.policy()), batch.obs, pws);
    Matrix mu = mu_raw.array().tanh();
    Vector log_std = params.log_std();
    Vector sigma = log_std.array().exp();

    Matrix z(n, act);
    for (Index j = 0; j < act; ++j)
        z.col(j) = (batch.actions.col(j) - mu.col(j)) / sigma[j];

    Vector logp = -(0.5 * z.array().square().rowwise().sum()).matrix();
    logp.array() += -log_std.sum() - 0.5 * act * kLog2Pi;

    Vector ratio = (logp - batch.logp_old).array().exp();
    const Scalar eps = config.clip_eps;

    Vector coeff(n);  // d(objective)/d(logp) per sample
    Scalar obj = 0;
    for (Index i = 0; i < n; ++i) {
        const Scalar a = batch.advantages[i];
        const Scalar r = ratio[i];
        const Scalar unclipped = r * a;
        const Scalar clipped = std::clamp(r, 1 - eps, 1 + eps) * a;
        if (unclipped <= clipped) {
            obj += unclipped;
            coeff[i] = r * a;
        } else {
            obj += clipped;
            coeff[i] = 0;  // clip saturated; no gradient through the ratio
        }
    }
    rep.l_ppo = obj / static_cast<Scalar>(n);

    // d(-L_ppo)/d(mu_raw) = -(1/n) coeff * z/sigma * (1 - mu^2)
    Matrix d_mu_raw(n, act);
    for (Index j = 0; j < act; ++j)
        d_mu_raw.col(j) = (-1.0 / static_cast<Scalar>(n)) *
                          (coeff.array() * z.col(j).array() / sigma[j] *
                           (1.0 - mu.col(j).array().square()))
                              .matrix();
    {
        auto gpol = rep.grad_ppo.segment(0, params.policy_count());
        mlp_backward(params.policy_shape, Vector(params.policy()), pws, d_mu_raw, gpol);
    }
    for (Index j = 0; j < act; ++j) {
        // d(logp)/d(log_std_j) = z^2 - 1
        Scalar g = 0;
        for (Index i = 0; i < n; ++i) g += coeff[i] * (z(i, j) * z(i, j) - 1.0);
        rep.grad_ppo[params.policy_count() + j] = -g / static_cast<Scalar>(n);
    }

    // --- value head ---------------------------------------------------------
    MlpWorkspace vws;
    Matrix v = mlp_forward(params.value_shape, Vector(params.value()), batch.obs, vws);
    Vector err = v.col(0) - batch.returns;
    rep.l_vf = 0.5 * err.squaredNorm() / static_cast<Scalar>(n);
    Matrix dv = err / static_cast<Scalar>(n);
    {
        auto gval = rep.grad_vf.segment(params.policy_count() + act, params.value_count());
        mlp_backward(params.value_shape, Vector(params.value()), vws, dv, gval);
    }

    // --- entropy ------------------------------------------------------------
    rep.l_entropy = log_std.sum() + 0.5 * act * (1.0 + kLog2Pi);
    for (Index j = 0; j < act; ++j) rep.grad_entropy[params.policy_count() + j] = -1.0;

    rep.total = -rep.l_ppo + config.c1 * rep.l_vf - config.c2 * rep.l_entropy;
    rep.grad_total = rep.grad_ppo + config.c1 * rep.grad_vf + config.c2 * rep.grad_entropy;
    return rep;
}

// ---------------------------------------------------------------------------
// Observation scaling and action decoding
// ---------------------------------------------------------------------------

ObsScaler obs_scaler(const NetworkModel& m) {
    const int nb = static_cast<int>(m.buses.size());
    const int nl = static_cast<int>(m.lines.size());
    const int ne = static_cast<int>(m.ess_units.size());
    const int nf = m.failable_count();
    const int dim = Observation::flat_size(m);
    ObsScaler s;
    s.offset = Vector::Zero(dim);
    s.scale = Vector::Ones(dim);
    int at = 0;
    for (int i = 0; i < nb; ++i, ++at) {
        s.offset[at] = 1.0;
        s.scale[at] = 10.0;
    }
    for (int i = 0; i < nb; ++i, ++at) s.scale[at] = 2.0;
    {  // p_slack
        int sl = m.slack_index();
        Scalar span = sl >= 0 ? std::max(std::abs(m.buses[sl].slack_p_min),
                                         std::abs(m.buses[sl].slack_p_max))
                              : 1.0;
        s.scale[at++] = 1.0 / std::max<Scalar>(1.0, span);
    }
    for (int i = 0; i < nl; ++i, ++at) s.scale[at] = 1.0 / std::max<Scalar>(1.0, m.lines[i].p_lim);
    for (int i = 0; i < nl; ++i, ++at)
        s.scale[at] = 1.0 / std::max<Scalar>(1.0, m.lines[i].q_lim > 0 ? m.lines[i].q_lim
                                                                       : m.lines[i].p_lim);
    for (int i = 0; i < ne; ++i, ++at) {
        const EssUnit& e = m.ess_units[i];
        s.offset[at] = 0.5 * (e.e_min + e.e_max);
        s.scale[at] = 2.0 / std::max<Scalar>(1e-9, e.e_max - e.e_min);
    }
    s.offset[at] = 0.5 * m.horizon;
    s.scale[at] = 2.0 / m.horizon;
    ++at;
    for (int i = 0; i < nf; ++i, ++at) s.scale[at] = 1.0;
    return s;
}

int action_dim(const NetworkModel& m) {
    return static_cast<int>(m.loads.size() + m.ess_units.size() + m.generators.size());
}

Action decode_action(const Vector& a, const NetworkModel& m) {
    const int nl = static_cast<int>(m.loads.size());
    const int ne = static_cast<int>(m.ess_units.size());
    const int ng = static_cast<int>(m.generators.size());
    if (a.size() != nl + ne + ng) throw ValidationError("normalized action width mismatch");
    Action out;
    out.load_served.resize(nl);
    out.ess_power.resize(ne);
    out.gen_power.resize(ng);
    int at = 0;
    for (int i = 0; i < nl; ++i, ++at)
        out.load_served[i] = std::clamp(0.5 * (a[at] + 1.0), 0.0, 1.0);
    for (int i = 0; i < ne; ++i, ++at) {
        const EssUnit& e = m.ess_units[i];
        Scalar t = std::clamp(0.5 * (a[at] + 1.0), 0.0, 1.0);
        out.ess_power[i] = -e.c_max + t * (e.c_max + e.d_max);
    }
    for (int i = 0; i < ng; ++i, ++at) {
        const Generator& g = m.generators[i];
        Scalar t = std::clamp(0.5 * (a[at] + 1.0), 0.0, 1.0);
        out.gen_power[i] = g.p_min + t * (g.p_max - g.p_min);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

struct EpisodeData {
    std::vector<Vector> obs;  // scaled
    std::vector<Vector> actions;
    std::vector<Scalar> logp;
    std::vector<Scalar> rewards;  // scaled
    Scalar raw_reward = 0;
    Scalar repairs = 0;
    int steps() const { return static_cast<int>(obs.size()); }
};

EpisodeData run_episode(EmsEnv& env, const ScenarioSet& scenarios, const Vector& cum_weights,
                        const PolicyParameters& params, const ObsScaler& scaler,
                        Scalar reward_scale, std::uint64_t seed, long episode_index) {
    std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(episode_index)));

    // scenario draw by cumulative weight
    Scalar u = canonical(rng);
    int scen = 0;
    while (scen + 1 < cum_weights.size() && u > cum_weights[scen]) ++scen;

    EpisodeData ep;
    Observation obs = env.reset(scenarios.scenarios[scen], scen, seed ^ episode_index);
    const int act = static_cast<int>(params.action_dim);
    int total_repairs = 0;
    while (!env.done()) {
        Vector scaled = scaler.apply(obs.flat());
        GaussianAction dist = policy_forward(params, scaled);
        Vector sample(act);
        Scalar logp = 0;
        for (int j = 0; j < act; ++j) {
            Scalar sigma = std::exp(dist.log_std[j]);
            Scalar xi = gaussian(rng);
            sample[j] = dist.mean[j] + sigma * xi;
            logp += -0.5 * xi * xi - dist.log_std[j] - 0.5 * kLog2Pi;
        }
        StepResult sr = env.step(decode_action(sample, env.model()));
        ep.obs.push_back(std::move(scaled));
        ep.actions.push_back(std::move(sample));
        ep.logp.push_back(logp);
        ep.rewards.push_back(sr.reward.total * reward_scale);
        ep.raw_reward += sr.reward.total;
        if (sr.info.advanced) total_repairs += sr.info.repairs;
        obs = std::move(sr.observation);
    }
    ep.repairs = static_cast<Scalar>(total_repairs) / env.model().horizon;
    return ep;
}

struct Adam {
    Vector m, v;
    long t = 0;
    void step(Vector& params, const Vector& grad, Scalar lr) {
        if (m.size() != params.size()) {
            m = Vector::Zero(params.size());
            v = Vector::Zero(params.size());
        }
        ++t;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad.cwiseProduct(grad);
        const Scalar bc1 = 1.0 - std::pow(0.9, static_cast<Scalar>(t));
        const Scalar bc2 = 1.0 - std::pow(0.999, static_cast<Scalar>(t));
        params -= (lr / bc1) * m.cwiseQuotient(((v / bc2).cwiseSqrt().array() + 1e-8).matrix());
    }
};

Scalar auto_reward_scale(const NetworkModel& m) {
    Scalar peak = 0;
    for (int t = 0; t < m.horizon; ++t) {
        Scalar w = 0;
        for (std::size_t i = 0; i < m.loads.size(); ++i)
            w += m.weight(m.loads[i].cls) * m.loads[i].p_profile[t];
        peak = std::max(peak, w * m.dt);
    }
    return peak > 0 ? 1.0 / peak : 1.0;
}

}  // namespace

TrainResult train(const NetworkModel& model, const ScenarioSet& scenarios,
                  const PpoConfig& config, const EnvConfig& env_config,
                  const TrainCallbacks& callbacks, const Checkpoint* resume_from) {
    config.validate_or_throw();
    if (scenarios.scenarios.empty()) throw ValidationError("empty scenario set");

    const ObsScaler scaler = obs_scaler(model);
    const int obs_dim = Observation::flat_size(model);
    const int act_dim = ems::action_dim(model);

    TrainResult result;
    Adam adam;
    long episodes_done = 0;
    int update = 0;
    if (resume_from) {
        result.params = resume_from->params;
        episodes_done = resume_from->episodes_done;
        update = resume_from->update_index;
        adam.m = resume_from->adam_m;
        adam.v = resume_from->adam_v;
        adam.t = resume_from->adam_t;
        if (result.params.policy_shape.input != obs_dim || result.params.action_dim != act_dim)
            throw ValidationError("checkpoint does not match this model's dimensions");
    } else {
        result.params = init_policy(obs_dim, act_dim, config);
    }

    const Scalar reward_scale =
        config.reward_scale > 0 ? config.reward_scale : auto_reward_scale(model);

    Vector w = scenarios.weights();
    Vector cum = w;
    for (Index i = 1; i < cum.size(); ++i) cum[i] += cum[i - 1];

    std::vector<std::unique_ptr<EmsEnv>> envs;
    for (int i = 0; i < config.num_envs; ++i)
        envs.push_back(std::make_unique<EmsEnv>(model, env_config));

    const auto t0 = std::chrono::steady_clock::now();

    while (episodes_done < config.total_episodes) {
        // --- collect whole episodes until the step quota is met -------------
        std::vector<EpisodeData> eps;
        long steps = 0;
        while (steps < config.rollout_steps && episodes_done < config.total_episodes) {
            const int round =
                static_cast<int>(std::min<long>(config.num_envs,
                                                config.total_episodes - episodes_done));
            std::vector<EpisodeData> slot(round);
            auto work = [&](int j) {
                slot[j] = run_episode(*envs[j], scenarios, cum, result.params, scaler,
                                      reward_scale, config.seed, episodes_done + j);
            };
            if (round == 1) {
                work(0);
            } else {
                std::vector<std::thread> pool;
                for (int j = 0; j < round; ++j) pool.emplace_back(work, j);
                for (auto& th : pool) th.join();
            }
            for (int j = 0; j < round; ++j) {
                steps += slot[j].steps();
                eps.push_back(std::move(slot[j]));
            }
            episodes_done += round;
        }
        if (eps.empty()) break;

        // --- assemble the batch ---------------------------------------------
        const long n = steps;
        Matrix obs(n, obs_dim), actions(n, act_dim);
        Vector logp_old(n), rewards(n);
        std::vector<long> ep_start;
        long at = 0;
        for (const auto& ep : eps) {
            ep_start.push_back(at);
            for (int i = 0; i < ep.steps(); ++i, ++at) {
                obs.row(at) = ep.obs[i].transpose();
                actions.row(at) = ep.actions[i].transpose();
                logp_old[at] = ep.logp[i];
                rewards[at] = ep.rewards[i];
            }
        }

        MlpWorkspace vws;
        Vector values =
            mlp_forward(result.params.value_shape, Vector(result.params.value()), obs, vws).col(0);
        Vector next_values = Vector::Zero(n);
        {
            long k = 0;
            for (const auto& ep : eps) {
                for (int i = 0; i + 1 < ep.steps(); ++i) next_values[k + i] = values[k + i + 1];
                k += ep.steps();  // terminal step keeps next value 0
            }
        }

        Vector adv;
        if (!config.use_gae) {
            adv = advantage(rewards, values, next_values, config.gamma);
        } else {
            adv = Vector::Zero(n);
            long k = 0;
            for (const auto& ep : eps) {
                Scalar acc = 0;
                for (int i = ep.steps() - 1; i >= 0; --i) {
                    Scalar delta =
                        rewards[k + i] + config.gamma * next_values[k + i] - values[k + i];
                    acc = delta + config.gamma * config.gae_lambda *
                                      (i + 1 < ep.steps() ? acc : 0.0);
                    adv[k + i] = acc;
                }
                k += ep.steps();
            }
        }
        Vector returns = adv + values;
        if (config.normalize_advantages && n > 1) {
            const Scalar mean = adv.mean();
            const Scalar sd = std::sqrt((adv.array() - mean).square().sum() / n) + 1e-8;
            adv = (adv.array() - mean) / sd;
        }

        // --- optimize --------------------------------------------------------
        PolicyParameters before = result.params;
        std::mt19937_64 shuffle_rng(mix(config.seed ^ 0x736875ULL, update));
        std::vector<long> order(n);
        std::iota(order.begin(), order.end(), 0);

        Scalar lp = 0, lv = 0, le = 0;
        long batches = 0;
        bool aborted = false;
        for (int epoch = 0; epoch < config.epochs_per_update && !aborted; ++epoch) {
            for (long i = n - 1; i > 0; --i)
                std::swap(order[i], order[static_cast<long>(rng_below(shuffle_rng, i + 1))]);
            for (long start = 0; start < n && !aborted; start += config.minibatch_size) {
                const long len = std::min<long>(config.minibatch_size, n - start);
                Batch mb;
                mb.obs.resize(len, obs_dim);
                mb.actions.resize(len, act_dim);
                mb.logp_old.resize(len);
                mb.advantages.resize(len);
                mb.returns.resize(len);
                for (long i = 0; i < len; ++i) {
                    const long s = order[start + i];
                    mb.obs.row(i) = obs.row(s);
                    mb.actions.row(i) = actions.row(s);
                    mb.logp_old[i] = logp_old[s];
                    mb.advantages[i] = adv[s];
                    mb.returns[i] = returns[s];
                }
                LossReport rep = ppo_loss(mb, before, result.params, config);
                if (!std::isfinite(rep.total) || !rep.grad_total.allFinite()) {
                    aborted = true;  // skip the remainder of this update
                    break;
                }
                adam.step(result.params.params, rep.grad_total, config.learning_rate);
                lp += rep.l_ppo;
                lv += rep.l_vf;
                le += rep.l_entropy;
                ++batches;
            }
        }

        ++update;
        result.adam_m = adam.m;
        result.adam_v = adam.v;
        result.adam_t = adam.t;
        TrainingLogRow row;
        row.update = update;
        row.episodes_done = episodes_done;
        row.steps_done = steps;
        Scalar rr = 0, reps = 0;
        for (const auto& ep : eps) {
            rr += ep.raw_reward;
            reps += ep.repairs;
        }
        row.mean_episode_reward = rr / static_cast<Scalar>(eps.size());
        row.mean_repairs = reps / static_cast<Scalar>(eps.size());
        row.loss_policy = batches ? lp / batches : 0;
        row.loss_value = batches ? lv / batches : 0;
        row.loss_entropy = batches ? le / batches : 0;
        row.param_norm = result.params.params.norm();
        row.wall_clock_s =
            std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(row);
        result.episodes_done = episodes_done;
        result.updates_done = update;

        if (callbacks.on_checkpoint &&
            (update % std::max(1, config.checkpoint_every_updates) == 0 ||
             episodes_done >= config.total_episodes)) {
            callbacks.on_checkpoint(result);
        }
    }
    result.episodes_done = episodes_done;
    result.updates_done = update;
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {
int class_index(LoadClass c) {
    switch (c) {
        case LoadClass::critical: return 0;
        case LoadClass::semi_critical: return 1;
        case LoadClass::non_critical: return 2;
    }
    return 2;
}
}  // namespace

EvalResult evaluate(const PolicyParameters& params, const NetworkModel& model,
                    const ScenarioSet& scenarios, Scalar alpha, const EnvConfig& env_config) {
    if (scenarios.scenarios.empty()) throw ValidationError("empty scenario set");
    EvalResult out;
    const ObsScaler scaler = obs_scaler(model);
    EnvConfig cfg = env_config;
    cfg.repair_cap = 1;  // a deterministic policy would repeat the same attempt

    const int T = model.horizon;
    out.profile_by_class = Matrix::Zero(3, T);
    for (std::size_t i = 0; i < model.loads.size(); ++i)
        for (int t = 0; t < T; ++t)
            out.profile_by_class(class_index(model.loads[i].cls), t) +=
                model.loads[i].p_profile[t];

    std::vector<Matrix> served_curves;
    EmsEnv env(model, cfg);
    const auto t0 = std::chrono::steady_clock::now();
    for (int s = 0; s < scenarios.size(); ++s) {
        Observation obs = env.reset(scenarios.scenarios[s], s, 0);
        ScenarioEvaluation ev;
        ev.scenario = s;
        Matrix curve = Matrix::Zero(3, T);
        while (!env.done()) {
            GaussianAction dist = policy_forward(params, scaler.apply(obs.flat()));
            StepResult sr = env.step(decode_action(dist.mean, model));
            obs = std::move(sr.observation);
        }
        ev.trace = env.trace();
        for (int t = 0; t < T; ++t) {
            const IntervalRecord& rec = ev.trace.intervals[t];
            if (rec.infeasible) ev.infeasible = true;
            for (std::size_t i = 0; i < model.loads.size(); ++i) {
                curve(class_index(model.loads[i].cls), t) += rec.served_mw[i];
                ev.weighted_served +=
                    model.weight(model.loads[i].cls) * rec.served_mw[i] * model.dt;
            }
        }
        served_curves.push_back(curve);
        out.per_scenario.push_back(std::move(ev));
    }
    out.mean_rollout_seconds =
        std::chrono::duration<Scalar>(std::chrono::steady_clock::now() - t0).count() /
        scenarios.size();

    out.risk = risk_report(
        scenarios,
        [&](const Scenario&, int idx) { return out.per_scenario[idx].weighted_served; }, alpha);
    for (std::size_t i = 0; i < out.per_scenario.size(); ++i)
        out.per_scenario[i].loss = out.risk.per_scenario_loss[i].loss;

    // lowest available capacity = worst retained scenario; ties to lowest id
    Scalar worst_cap = std::numeric_limits<Scalar>::infinity();
    for (int s = 0; s < scenarios.size(); ++s) {
        Scalar cap = 0;
        for (std::size_t g = 0; g < model.generators.size(); ++g)
            if (!scenarios.scenarios[s].mask[g]) cap += model.generators[g].p_max;
        if (cap < worst_cap - 1e-12) {
            worst_cap = cap;
            out.worst_scenario = s;
        }
    }

    Vector w = scenarios.weights();
    out.served_by_class_expected = Matrix::Zero(3, T);
    for (int s = 0; s < scenarios.size(); ++s)
        out.served_by_class_expected += w[s] * served_curves[s];
    out.served_by_class_worst = served_curves[out.worst_scenario];
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'E', 'M', 'S', 'R', 'L', 'C', 'P', '1'};

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_shape(std::ofstream& f, const MlpShape& s) {
    put<std::int32_t>(f, s.input);
    put<std::int32_t>(f, static_cast<std::int32_t>(s.hidden.size()));
    for (int h : s.hidden) put<std::int32_t>(f, h);
    put<std::int32_t>(f, s.output);
}

MlpShape get_shape(std::ifstream& f) {
    MlpShape s;
    s.input = get<std::int32_t>(f);
    int nh = get<std::int32_t>(f);
    for (int i = 0; i < nh; ++i) s.hidden.push_back(get<std::int32_t>(f));
    s.output = get<std::int32_t>(f);
    return s;
}

void put_vector(std::ofstream& f, const Vector& v) {
    put<std::int64_t>(f, v.size());
    f.write(reinterpret_cast<const char*>(v.data()), sizeof(Scalar) * v.size());
}

Vector get_vector(std::ifstream& f) {
    std::int64_t n = get<std::int64_t>(f);
    if (n < 0 || n > (1LL << 32)) throw ValidationError("checkpoint: corrupt vector length");
    Vector v(n);
    f.read(reinterpret_cast<char*>(v.data()), sizeof(Scalar) * n);
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ParseError("cannot write checkpoint: " + path.string());
    f.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(f, 1);
    put<std::uint64_t>(f, cp.config_hash);
    put_shape(f, cp.params.policy_shape);
    put_shape(f, cp.params.value_shape);
    put<std::int32_t>(f, cp.params.action_dim);
    put<std::int32_t>(f, cp.update_index);
    put<std::int64_t>(f, cp.episodes_done);
    put<std::int64_t>(f, cp.adam_t);
    put_vector(f, cp.params.params);
    put_vector(f, cp.adam_m);
    put_vector(f, cp.adam_v);
    if (!f) throw ParseError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const PpoConfig* expected) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open checkpoint: " + path.string());
    char magic[8];
    f.read(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ValidationError("checkpoint: bad magic");
    if (get<std::uint32_t>(f) != 1) throw ValidationError("checkpoint: unsupported version");
    Checkpoint cp;
    cp.config_hash = get<std::uint64_t>(f);
    cp.params.policy_shape = get_shape(f);
    cp.params.value_shape = get_shape(f);
    cp.params.action_dim = get<std::int32_t>(f);
    cp.update_index = get<std::int32_t>(f);
    cp.episodes_done = get<std::int64_t>(f);
    cp.adam_t = get<std::int64_t>(f);
    cp.params.params = get_vector(f);
    cp.adam_m = get_vector(f);
    cp.adam_v = get_vector(f);
    if (!f) throw ValidationError("checkpoint: truncated file");
    if (cp.params.params.size() != cp.params.total_count())
        throw ValidationError("checkpoint: parameter vector does not match shapes");
    if (expected) {
        if (cp.params.policy_shape.hidden != expected->hidden) {
            std::string want, got;
            for (int h : expected->hidden) want += std::to_string(h) + " ";
            for (int h : cp.params.policy_shape.hidden) got += std::to_string(h) + " ";
            throw ValidationError("checkpoint: hidden sizes [" + got +
                                  "] do not match configured [" + want + "]");
        }
        if (cp.config_hash != expected->hash())
            throw ValidationError("checkpoint: config hash mismatch");
    }
    return cp;
}

}  // namespace ems
