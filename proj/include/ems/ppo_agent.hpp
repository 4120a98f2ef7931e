#pragma once

#include "ems/ems_env.hpp"
#include "ems/mlp.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace ems {

struct PpoConfig {
    Scalar gamma = 0.99;
    Scalar clip_eps = 0.2;
    Scalar c1 = 0.5;   // value-loss coefficient
    Scalar c2 = 0.01;  // entropy coefficient
    Scalar learning_rate = 3e-4;
    int rollout_steps = 2048;  // minimum steps per update; whole episodes are collected
    int minibatch_size = 256;
    int epochs_per_update = 4;
    long total_episodes = 50000;
    std::uint64_t seed = 0;
    std::vector<int> hidden = {64, 64};
    Scalar init_log_std = -0.5;
    bool normalize_advantages = true;
    bool use_gae = false;  // lambda-weighted advantages; off = one-step form
    Scalar gae_lambda = 0.95;
    Scalar reward_scale = 0;  // 0 = derived from the model's weighted peak load
    int checkpoint_every_updates = 50;
    int num_envs = 1;  // rollout instances; capped by EMS_THREADS

    void validate_or_throw() const;
    std::uint64_t hash() const;  // covers the fields that must match on resume
};

/// Flat parameter vector for both networks:
/// [policy mlp | per-action log-std | value mlp].
struct PolicyParameters {
    MlpShape policy_shape;
    MlpShape value_shape;
    int action_dim = 0;
    Vector params;

    Index policy_count() const { return policy_shape.param_count(); }
    Index value_count() const { return value_shape.param_count(); }
    Index total_count() const { return policy_count() + action_dim + value_count(); }
    auto policy() const { return params.segment(0, policy_count()); }
    auto log_std() const { return params.segment(policy_count(), action_dim); }
    auto value() const { return params.segment(policy_count() + action_dim, value_count()); }
};

PolicyParameters init_policy(int obs_dim, int action_dim, const PpoConfig& config);

struct GaussianAction {
    Vector mean;     // squashed to (-1, 1)
    Vector log_std;  // per action dimension
};

/// Deterministic distribution head: tanh-squashed mean plus state-independent
/// log standard deviations. `obs` must already be scaled (see ObsScaler).
GaussianAction policy_forward(const PolicyParameters& params, const Vector& obs);

Scalar value_forward(const PolicyParameters& params, const Vector& obs);

/// One-step advantage A_t = r_t + gamma * V(s_{t+1}) - V(s_t); the terminal
/// step uses a zero next value (callers pass next_values accordingly).
Vector advantage(const Vector& rewards, const Vector& values, const Vector& next_values,
                 Scalar gamma);

struct Batch {
    Matrix obs;      // samples x obs_dim, scaled
    Matrix actions;  // samples x action_dim, normalized (pre-squash samples)
    Vector logp_old;
    Vector advantages;
    Vector returns;
};

struct LossReport {
    Scalar l_ppo = 0;      // clipped surrogate (ascent form)
    Scalar l_vf = 0;       // 0.5 * mean squared value error
    Scalar l_entropy = 0;  // Gaussian differential entropy
    Scalar total = 0;      // -l_ppo + c1 * l_vf - c2 * l_entropy
    Vector grad_ppo;       // d(-l_ppo)/d(params)
    Vector grad_vf;
    Vector grad_entropy;   // d(-l_entropy)/d(params)
    Vector grad_total;
};

/// Loss components and exact reverse-mode gradients over the full parameter
/// vector. Aborting on non-finite values is the caller's job.
LossReport ppo_loss(const Batch& batch, const PolicyParameters& params_old,
                    const PolicyParameters& params, const PpoConfig& config);

/// Fixed affine observation scaling derived from the model so network inputs
/// sit near [-1, 1].
struct ObsScaler {
    Vector offset;
    Vector scale;
    Vector apply(const Vector& flat_obs) const { return (flat_obs - offset).cwiseProduct(scale); }
};
ObsScaler obs_scaler(const NetworkModel& model);

/// Maps a normalized action vector in [-1,1]^d onto the environment's boxes.
Action decode_action(const Vector& normalized, const NetworkModel& model);
int action_dim(const NetworkModel& model);

struct TrainingLogRow {
    int update = 0;
    long episodes_done = 0;
    long steps_done = 0;
    Scalar mean_episode_reward = 0;  // physical (unscaled) reward
    Scalar mean_repairs = 0;
    Scalar loss_policy = 0;
    Scalar loss_value = 0;
    Scalar loss_entropy = 0;
    Scalar param_norm = 0;
    Scalar wall_clock_s = 0;
};

struct TrainResult {
    PolicyParameters params;
    std::vector<TrainingLogRow> log;
    long episodes_done = 0;
    int updates_done = 0;
    // optimizer state, so checkpoints can resume exactly
    Vector adam_m, adam_v;
    long adam_t = 0;
};

struct TrainCallbacks {
    /// Invoked at the checkpoint cadence and once at the end.
    std::function<void(const TrainResult& state)> on_checkpoint;
};

/// Seeded PPO training; scenarios are sampled per episode by probability.
/// Deterministic for a fixed (config, model, scenario set) in single-rollout
/// mode, and reproducible for fixed num_envs otherwise (episode-indexed RNG
/// streams, deterministic merge order).
TrainResult train(const NetworkModel& model, const ScenarioSet& scenarios,
                  const PpoConfig& config, const EnvConfig& env_config,
                  const TrainCallbacks& callbacks = {},
                  const struct Checkpoint* resume_from = nullptr);

struct ScenarioEvaluation {
    int scenario = 0;
    Scalar weighted_served = 0;
    Scalar loss = 0;
    bool infeasible = false;  // some interval failed to converge
    EpisodeTrace trace;
};

struct EvalResult {
    RiskReport risk;
    std::vector<ScenarioEvaluation> per_scenario;
    /// 3 x horizon served MW per class: probability-weighted expectation.
    Matrix served_by_class_expected;
    /// 3 x horizon served MW per class under the lowest-capacity retained scenario.
    Matrix served_by_class_worst;
    Matrix profile_by_class;  // 3 x horizon demand MW
    int worst_scenario = 0;
    Scalar mean_rollout_seconds = 0;
};

/// Deterministic (mean-action) rollout of the policy on every retained
/// scenario; single attempt per interval.
EvalResult evaluate(const PolicyParameters& params, const NetworkModel& model,
                    const ScenarioSet& scenarios, Scalar alpha, const EnvConfig& env_config);

/// Checkpoint payload. The binary layout is a fixed little-endian header
/// (magic, version, shapes, config hash, progress counters) followed by the
/// float64 parameter vector and the optimizer state; round-trips bit-exactly.
struct Checkpoint {
    PolicyParameters params;
    std::uint64_t config_hash = 0;
    int update_index = 0;
    long episodes_done = 0;
    Vector adam_m;
    Vector adam_v;
    long adam_t = 0;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws ValidationError on magic/shape mismatch; config-hash mismatches
/// against `expected_config` are errors naming the offending shape.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const PpoConfig* expected_config = nullptr);

}  // namespace ems
