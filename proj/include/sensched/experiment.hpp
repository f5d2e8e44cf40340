#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sensched/ddpg.hpp"
#include "sensched/dqn.hpp"
#include "sensched/mdp.hpp"
#include "sensched/value_iteration.hpp"

#include "json.hpp"

namespace sensched {

/// Full experiment description; defaults follow the evaluated setup
/// (gamma 0.95, batch 128, replay 20000, alpha1 0.5, alpha2 0.9, delta
/// 0.005, epsilon/xi from 1 decaying by 0.999 to 0.01, stage episodes
/// 50/100/150 of 500 steps).
struct ExperimentConfig {
  int sensors = 6;
  int channels = 3;
  std::uint64_t seed = 1;
  std::string agent = "se_dqn";  // dqn | se_dqn | ddpg | se_ddpg | value_iteration

  int loose_episodes = 50;
  int tight_episodes = 100;
  int conventional_episodes = 150;
  int steps_per_episode = 500;

  int tau_cap = 100;
  double gamma = 0.95;
  int batch_size = 128;
  std::size_t replay_capacity = 20000;

  double lr = 1e-4;         // Q-network
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  double lr_decay = 1e-3;   // per-episode learning-rate decay
  int target_sync_period = 100;
  double delta = 0.005;
  double alpha1 = 0.5;
  double alpha2 = 0.9;

  double eps_init = 1.0, eps_decay = 0.999, eps_min = 0.01;
  double xi_init = 1.0, xi_decay = 0.999, xi_min = 0.01;
  double noise_sigma_init = 0.3, noise_sigma_decay = 0.999, noise_sigma_min = 0.01;

  int h_bar = 5;
  std::vector<double> drop_prob;  // empty = defaults for h_bar

  int tau_cap_vi = 20;
  int h_bar_vi = 2;
  double vi_tol = 1e-8;

  std::vector<int> hidden_dims = {256, 256};
  bool literal_actor_gradient = false;

  int eval_steps = 10000;
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError when any field lies outside its documented range.
void validate(const ExperimentConfig& config);

nlohmann::json config_to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// A randomly drawn instance: 2x2 unstable processes with spectral radii in
/// (1, 1.4), scalar measurements with entries in (0,1), identity noise
/// covariances, and per-pair random channel-state distributions.
struct GeneratedSystem {
  std::vector<ProcessModel> processes;
  ChannelModel channels;
  std::uint64_t seed = 0;
  std::vector<double> spectral_radii;
};

/// Deterministic in the seed. Redraws a sensor whose steady-state solve
/// fails; throws GenerationFailure after 100 attempts for one sensor.
GeneratedSystem generate_system(std::uint64_t seed, int sensors, int channels,
                                int h_bar, const Vector& drop_prob);

/// Everything needed to rebuild the environment: the generated system plus
/// gamma and the AoI cap.
nlohmann::json system_to_json(const GeneratedSystem& system, double gamma, int tau_cap);
struct LoadedSystem {
  GeneratedSystem system;
  MdpSpec spec;
};
LoadedSystem system_from_json(const nlohmann::json& j);
LoadedSystem load_system(const std::string& path);

using PolicyFn = std::function<ScheduleAction(const SystemState&)>;

PolicyFn make_vi_policy(const ValueIterationResult& vi, const ActionSpace& space);
PolicyFn make_qnet_policy(const Network& qnet, const MdpSpec& spec,
                          const ActionSpace& space);
PolicyFn make_actor_policy(const Network& actor, const MdpSpec& spec);

struct EvaluationResult {
  double avg_sum_mse = 0.0;
  int steps = 0;
  std::uint64_t seed = 0;
};

/// Greedy (noise-free) rollout from the all-fresh start state; returns the
/// mean over visited states of the summed per-sensor MSE. Optionally writes
/// a per-step CSV (step,sum_mse).
EvaluationResult evaluate_policy(const PolicyFn& policy, const MdpSpec& spec, int steps,
                                 std::uint64_t seed, std::ostream* per_step_csv = nullptr);

/// Training-curve CSV writers (header row, LF line endings).
void write_dqn_curve_csv(std::ostream& out, const std::vector<EpisodeLog>& log);
void write_ddpg_curve_csv(std::ostream& out, const std::vector<DdpgEpisodeLog>& log);

/// Runs one configured experiment end to end: generates the system, trains
/// the selected agent (or solves the truncated MDP exactly), evaluates the
/// resulting policy, and writes the artifact bundle (config echo, system
/// file, training-curve CSV, evaluation JSON, checkpoints, and for the
/// exact solver the threshold-certification report and policy dump) into
/// config.out_dir. Returns the evaluation result.
EvaluationResult run_experiment(const ExperimentConfig& config);

/// Rollout seed used by run_experiment: decorrelates evaluation from
/// training while staying deterministic in the config seed.
std::uint64_t derive_eval_seed(std::uint64_t seed);

}  // namespace sensched
