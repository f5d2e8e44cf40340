#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "sensched/errors.hpp"
#include "sensched/experiment.hpp"
#include "sensched/gradcheck.hpp"
#include "sensched/value_iteration.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitCertification = 4;

int cmd_run(const std::string& config_path, const std::string& seed_override,
            const std::string& agent_override, const std::string& out_override) {
  sensched::ExperimentConfig config = sensched::load_config(config_path);
  if (!seed_override.empty()) config.seed = std::stoull(seed_override);
  if (!agent_override.empty()) config.agent = agent_override;
  if (!out_override.empty()) config.out_dir = out_override;
  sensched::validate(config);
  sensched::EvaluationResult eval = sensched::run_experiment(config);
  nlohmann::json j;
  j["avg_sum_mse"] = eval.avg_sum_mse;
  j["steps"] = eval.steps;
  j["seed"] = eval.seed;
  j["out_dir"] = config.out_dir;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& system_path,
                 int steps, const std::string& seed_str, const std::string& csv_path) {
  sensched::LoadedSystem loaded = sensched::load_system(system_path);
  sensched::Checkpoint ckpt = sensched::load_checkpoint(checkpoint_path);
  std::uint64_t seed = seed_str.empty()
                           ? sensched::derive_eval_seed(loaded.system.seed)
                           : std::stoull(seed_str);

  sensched::PolicyFn policy;
  sensched::ActionSpace space;
  if (ckpt.role == "actor") {
    policy = sensched::make_actor_policy(ckpt.net, loaded.spec);
  } else if (ckpt.role == "qnet" || ckpt.role.empty()) {
    space = sensched::enumerate_actions(loaded.spec.sensors(),
                                        loaded.spec.channel_count());
    if (ckpt.net.output_dim() != space.size()) {
      throw sensched::ConfigError(
          "evaluate: checkpoint output dimension does not match the action count");
    }
    policy = sensched::make_qnet_policy(ckpt.net, loaded.spec, space);
  } else {
    throw sensched::ConfigError("evaluate: checkpoint role '" + ckpt.role +
                                "' is not a policy");
  }

  sensched::EvaluationResult eval;
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw sensched::ConfigError("evaluate: cannot write " + csv_path);
    eval = sensched::evaluate_policy(policy, loaded.spec, steps, seed, &csv);
  } else {
    eval = sensched::evaluate_policy(policy, loaded.spec, steps, seed, nullptr);
  }
  nlohmann::json j;
  j["avg_sum_mse"] = eval.avg_sum_mse;
  j["steps"] = eval.steps;
  j["seed"] = eval.seed;
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_certify(const std::string& config_path) {
  sensched::ExperimentConfig config = sensched::load_config(config_path);
  config.agent = "value_iteration";
  sensched::validate(config);
  sensched::EvaluationResult eval = sensched::run_experiment(config);

  std::ifstream report_in(std::filesystem::path(config.out_dir) / "threshold_report.json");
  nlohmann::json report;
  report_in >> report;
  nlohmann::json j;
  j["violations"] = report.size();
  j["avg_sum_mse"] = eval.avg_sum_mse;
  j["out_dir"] = config.out_dir;
  std::cout << j.dump(2) << "\n";
  return report.empty() ? 0 : kExitCertification;
}

int cmd_gradcheck(std::uint64_t seed, int directions) {
  auto checks = sensched::run_loss_gradient_checks(seed, directions);
  bool all_pass = true;
  for (const auto& c : checks) {
    std::printf("%-20s max_rel_error=%.3e directions=%d %s\n", c.name.c_str(),
                c.max_rel_error, c.directions, c.pass ? "PASS" : "FAIL");
    all_pass = all_pass && c.pass;
  }
  return all_pass ? 0 : kExitCertification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-sensor transmission scheduling: simulator, exact solver, and "
               "structure-enhanced DRL trainers"};
  app.require_subcommand(1);

  std::string config_path, seed_str, agent, out_dir;
  auto* run = app.add_subcommand("run", "Run one configured experiment");
  run->add_option("--config", config_path, "Config JSON file")->required();
  run->add_option("--seed", seed_str, "Override the config seed");
  run->add_option("--agent", agent, "Override the agent");
  run->add_option("--out", out_dir, "Override the output directory");

  std::string ckpt_path, system_path, eval_seed_str, csv_path;
  int eval_steps = 10000;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a system");
  evaluate->add_option("--checkpoint", ckpt_path, "Checkpoint JSON file")->required();
  evaluate->add_option("--system", system_path, "System JSON file")->required();
  evaluate->add_option("--steps", eval_steps, "Rollout length");
  evaluate->add_option("--seed", eval_seed_str, "Rollout seed");
  evaluate->add_option("--per-step-csv", csv_path, "Write per-step sum MSE here");

  std::string certify_config;
  auto* certify = app.add_subcommand(
      "certify-threshold", "Solve the truncated instance exactly and certify the "
                           "threshold structure of its optimal policy");
  certify->add_option("--config", certify_config, "Config JSON file")->required();

  std::uint64_t gc_seed = 7;
  int gc_directions = 120;
  auto* gradcheck =
      app.add_subcommand("gradcheck", "Finite-difference checks of the training losses");
  gradcheck->add_option("--seed", gc_seed, "Fixture seed");
  gradcheck->add_option("--directions", gc_directions, "Random directions per loss");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, seed_str, agent, out_dir);
    if (evaluate->parsed()) {
      return cmd_evaluate(ckpt_path, system_path, eval_steps, eval_seed_str, csv_path);
    }
    if (certify->parsed()) return cmd_certify(certify_config);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_directions);
  } catch (const sensched::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sensched::NonFiniteLoss& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const sensched::NonFiniteGradient& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const sensched::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
