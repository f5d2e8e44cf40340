#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sensched/mdp.hpp"
#include "sensched/network.hpp"
#include "sensched/replay.hpp"

namespace sensched {

/// Replay record. `se` is present exactly when the structure-enhanced
/// action was the one executed (so se == executed holds by construction);
/// `greedy` is the argmax action at the time of acting.
struct TransitionRecord {
  SystemState s;
  ScheduleAction executed;
  std::optional<ScheduleAction> se;
  ScheduleAction greedy;
  double r = 0.0;
  SystemState s_next;
};

/// epsilon drives random exploration, xi the better-channel randomization
/// inside the SE inference. Both decay multiplicatively per environment
/// step down to their floors.
struct ExplorationSchedule {
  double epsilon = 1.0;
  double xi = 1.0;
  double eps_decay = 0.999;
  double xi_decay = 0.999;
  double eps_floor = 0.01;
  double xi_floor = 0.01;

  void decay_step() {
    epsilon = std::max(epsilon * eps_decay, eps_floor);
    xi = std::max(xi * xi_decay, xi_floor);
  }
};

/// Network input features: AoI normalized by tau_cap, then channel states
/// normalized to [0, 1], row-major. Length N + N*M.
Vector state_to_input(const SystemState& state, const MdpSpec& spec);

/// Argmax of Q(s, .) over the canonical action list; ties break toward the
/// lowest index.
ScheduleAction greedy_action(const Network& qnet, const SystemState& state,
                             const MdpSpec& spec, const ActionSpace& space);

struct SelectedAction {
  ScheduleAction executed;
  std::optional<ScheduleAction> se;  // present iff `executed` is the SE action
  ScheduleAction greedy;
};

/// Greedy-proposal callback used by the SE inference: the Q argmax for the
/// DQN agent, the mapped actor output for the DDPG agent.
using ActionProposer = std::function<ScheduleAction(const SystemState&)>;

/// Per-sensor SE channel candidates: the proposal at the AoI-decremented
/// state, randomized toward strictly better channels with probability xi;
/// sensors whose proposal idles (or whose AoI is already 1) fall back to
/// their component of `greedy`.
Eigen::VectorXi se_channel_candidates(const ActionProposer& propose,
                                      const SystemState& state, double xi,
                                      const MdpSpec& spec, const ScheduleAction& greedy,
                                      Rng& rng);

/// Loose-constraint gate: if every channel is used at most once, hands the
/// unused channels to idle sensors by a uniform random matching and returns
/// the full schedule; otherwise nullopt.
std::optional<ScheduleAction> complete_loose_candidate(Eigen::VectorXi candidate,
                                                       const MdpSpec& spec, Rng& rng);

/// Tight-stage consistency check: each candidate channel must be proposed
/// again at the channel-decremented state (vacuously kept at the bottom
/// state); failures revert to the greedy component. Returns the schedule
/// only when it meets the exact assignment constraint.
std::optional<ScheduleAction> apply_tight_check(const ActionProposer& propose,
                                                Eigen::VectorXi candidate,
                                                const SystemState& state,
                                                const MdpSpec& spec,
                                                const ScheduleAction& greedy);

/// Stage-1 selection: infer each sensor's candidate channel from the greedy
/// action at the AoI-decremented state, randomize toward strictly better
/// channels with probability xi, and execute the candidate when every
/// channel is used at most once, filling unused channels by a uniform
/// random matching with idle sensors. Falls back to the greedy action.
SelectedAction loose_se_action(const Network& qnet, const SystemState& state,
                               const ExplorationSchedule& sched, const MdpSpec& spec,
                               const ActionSpace& space, Rng& rng);

/// Stage-2 selection: loose inference followed by the channel-decrement
/// consistency check per sensor; the candidate is executed only when it
/// meets the exact assignment constraint.
SelectedAction tight_se_action(const Network& qnet, const SystemState& state,
                               const ExplorationSchedule& sched, const MdpSpec& spec,
                               const ActionSpace& space, Rng& rng);

/// Stage-3 selection: plain epsilon-greedy.
SelectedAction epsilon_greedy_action(const Network& qnet, const SystemState& state,
                                     const ExplorationSchedule& sched,
                                     const MdpSpec& spec, const ActionSpace& space,
                                     Rng& rng);

struct LossResult {
  double loss = 0.0;
  Gradients grads;
};

/// Composite loss over a batch: squared TD error everywhere, plus the
/// squared action-difference error Q(s, se) - Q(s, greedy) on records whose
/// SE action was executed, weighted alpha1 / (1 - alpha1). Targets
/// r + gamma * max_a Q(s', a; target) are constants (semi-gradient).
LossResult se_loss_and_grad(const std::vector<const TransitionRecord*>& batch,
                            const Network& qnet, const Network& target_net,
                            const MdpSpec& spec, const ActionSpace& space,
                            double alpha1);

struct DqnConfig {
  int loose_episodes = 50;
  int tight_episodes = 100;
  int conventional_episodes = 150;
  int steps_per_episode = 500;
  int batch_size = 128;
  std::size_t replay_capacity = 20000;
  double lr = 1e-4;
  double lr_decay = 1e-3;
  double alpha1 = 0.5;
  int target_sync_period = 100;
  double eps_init = 1.0, eps_decay = 0.999, eps_min = 0.01;
  double xi_init = 1.0, xi_decay = 0.999, xi_min = 0.01;
  std::vector<int> hidden_dims = {256, 256};

  int total_episodes() const {
    return loose_episodes + tight_episodes + conventional_episodes;
  }
};

struct EpisodeLog {
  int episode = 0;
  long steps = 0;
  double epsilon = 0.0;
  double xi = 0.0;
  double avg_sum_mse = 0.0;
  double loss_mean = 0.0;
  long wall_ms = 0;
};

struct DqnTrainResult {
  Network qnet;
  std::vector<EpisodeLog> log;
};

/// Called at the end of each training stage with a label ("loose", "tight",
/// "final") and the online network.
using StageCallback = std::function<void(const std::string&, const Network&)>;

/// Three-stage training loop: loose SE episodes, tight SE episodes, then
/// conventional epsilon-greedy, with one gradient step per environment step
/// and hard target syncs every target_sync_period steps. Deterministic in
/// the seed.
DqnTrainResult train_se_dqn(const MdpSpec& spec, const DqnConfig& config,
                            std::uint64_t seed, const StageCallback& on_stage = {});

}  // namespace sensched
