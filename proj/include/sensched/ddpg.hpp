#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sensched/dqn.hpp"
#include "sensched/mdp.hpp"
#include "sensched/network.hpp"

namespace sensched {

/// Replay record for the actor-critic agent. `v` is the executed virtual
/// action, `v_se` the structure-enhanced one (present iff executed), and
/// `v_actor` the raw actor output at acting time.
struct DdpgTransition {
  SystemState s;
  Vector v;
  std::optional<Vector> v_se;
  Vector v_actor;
  double r = 0.0;
  SystemState s_next;
};

/// Ranks sensors by v descending (ties toward the lower index) and assigns
/// channels 1..M in rank order; the rest idle. Output always satisfies the
/// assignment constraint.
ScheduleAction map_virtual_to_schedule(const Vector& v, int channels);

/// Deterministic encoding with map_virtual_to_schedule as its left inverse:
/// the sensor on channel m gets 1 - (m-1)*2/N; idle sensors get values
/// strictly below every scheduled one, descending by sensor index, evenly
/// spaced down to -1.
Vector canonical_virtual(const ScheduleAction& action, int channels);

/// clamp(mu(s) + N(0, sigma^2) per entry, [-1, 1]).
Vector actor_explore(const Network& actor, const SystemState& state, double sigma,
                     const MdpSpec& spec, Rng& rng);

enum class SeStage { loose, tight };

struct SelectedVirtual {
  Vector executed;
  std::optional<Vector> se;  // present iff `executed` is the SE encoding
  Vector actor_out;          // raw actor output at this state
};

/// SE selection with the actor in place of the Q-argmax: perturbed-state
/// proposals come from mapping the actor's output, exploration adds
/// Gaussian noise to the actor output, and a surviving SE schedule is
/// executed as its canonical virtual encoding. Falls back to the raw actor
/// output.
SelectedVirtual se_action_ddpg(const Network& actor, const SystemState& state,
                               const ExplorationSchedule& sched, double noise_sigma,
                               SeStage stage, const MdpSpec& spec, Rng& rng);

/// Critic loss: squared TD error with targets
/// r + gamma * Q(s', mu_target(s'); theta_target), plus the squared
/// action-difference Q(s, v_se) - Q(s, v_actor) on SE records, weighted
/// alpha1 / (1 - alpha1). Critic inputs are [state features; v].
LossResult critic_loss_and_grad(const std::vector<const DdpgTransition*>& batch,
                                const Network& critic, const Network& target_critic,
                                const Network& target_actor, const MdpSpec& spec,
                                double alpha1);

/// Actor loss, minimized over the actor parameters with the critic frozen.
/// Reconciled form (default): -alpha2 * Q(s, mu(s)) plus the imitation
/// penalty (1 - alpha2) * |v - mu(s)|^2 on SE records, and -Q(s, mu(s))
/// otherwise. With literal_gradient the printed ascent/penalty signs are
/// used instead (+alpha2 * Q, same penalty).
LossResult actor_loss_and_grad(const std::vector<const DdpgTransition*>& batch,
                               const Network& actor, const Network& critic,
                               const MdpSpec& spec, double alpha2,
                               bool literal_gradient = false);

struct DdpgConfig {
  int loose_episodes = 50;
  int tight_episodes = 100;
  int conventional_episodes = 150;
  int steps_per_episode = 500;
  int batch_size = 128;
  std::size_t replay_capacity = 20000;
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  double lr_decay = 1e-3;
  double alpha1 = 0.5;
  double alpha2 = 0.9;
  double delta = 0.005;
  double eps_init = 1.0, eps_decay = 0.999, eps_min = 0.01;
  double xi_init = 1.0, xi_decay = 0.999, xi_min = 0.01;
  double noise_sigma_init = 0.3, noise_sigma_decay = 0.999, noise_sigma_min = 0.01;
  std::vector<int> hidden_dims = {256, 256};
  bool literal_actor_gradient = false;

  int total_episodes() const {
    return loose_episodes + tight_episodes + conventional_episodes;
  }
};

struct DdpgEpisodeLog {
  int episode = 0;
  long steps = 0;
  double epsilon = 0.0;
  double xi = 0.0;
  double avg_sum_mse = 0.0;
  double loss_mean = 0.0;  // critic + actor combined mean, kept for symmetry
  double actor_loss_mean = 0.0;
  double critic_loss_mean = 0.0;
  double noise_sigma = 0.0;
  long wall_ms = 0;
};

struct DdpgTrainResult {
  Network actor;
  Network critic;
  std::vector<DdpgEpisodeLog> log;
};

using DdpgStageCallback =
    std::function<void(const std::string&, const Network& actor, const Network& critic)>;

/// Same three-stage schedule as the DQN trainer, with a per-step critic
/// update, actor update, and soft target updates for both networks.
DdpgTrainResult train_se_ddpg(const MdpSpec& spec, const DdpgConfig& config,
                              std::uint64_t seed,
                              const DdpgStageCallback& on_stage = {});

}  // namespace sensched
