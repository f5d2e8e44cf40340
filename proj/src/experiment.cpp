#include "sensched/experiment.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "sensched/errors.hpp"

namespace sensched {

namespace {

const std::set<std::string> kAgents = {"dqn", "se_dqn", "ddpg", "se_ddpg",
                                       "value_iteration"};

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

std::vector<std::vector<double>> matrix_to_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (long r = 0; r < m.rows(); ++r) {
    rows[static_cast<std::size_t>(r)].assign(m.row(r).begin(), m.row(r).end());
  }
  return rows;
}

Matrix rows_to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ConfigError("system file: empty matrix");
  Matrix m(static_cast<long>(rows.size()), static_cast<long>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) {
      throw ConfigError("system file: ragged matrix");
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<long>(r), static_cast<long>(c)) = rows[r][c];
    }
  }
  return m;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  require(c.sensors >= 1, "sensors must be >= 1");
  require(c.channels >= 1 && c.channels <= c.sensors, "need 1 <= channels <= sensors");
  require(kAgents.count(c.agent) == 1, "unknown agent '" + c.agent + "'");
  require(c.loose_episodes >= 0 && c.tight_episodes >= 0 && c.conventional_episodes >= 0,
          "stage episode counts must be nonnegative");
  require(c.loose_episodes + c.tight_episodes + c.conventional_episodes > 0 ||
              c.agent == "value_iteration",
          "training agents need at least one episode");
  require(c.steps_per_episode >= 1, "steps_per_episode must be >= 1");
  require(c.tau_cap >= 1, "tau_cap must be >= 1");
  require(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must lie in [0, 1)");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.replay_capacity >= static_cast<std::size_t>(c.batch_size),
          "replay_capacity must be >= batch_size");
  require(c.lr > 0 && c.lr_actor > 0 && c.lr_critic > 0, "learning rates must be positive");
  require(c.lr_decay >= 0, "lr_decay must be nonnegative");
  require(c.target_sync_period >= 1, "target_sync_period must be >= 1");
  require(c.delta >= 0.0 && c.delta <= 1.0, "delta must lie in [0, 1]");
  require(c.alpha1 >= 0.0 && c.alpha1 <= 1.0, "alpha1 must lie in [0, 1]");
  require(c.alpha2 >= 0.0 && c.alpha2 <= 1.0, "alpha2 must lie in [0, 1]");
  for (auto [init, decay, floor] :
       {std::tuple{c.eps_init, c.eps_decay, c.eps_min},
        std::tuple{c.xi_init, c.xi_decay, c.xi_min}}) {
    require(init >= 0.0 && init <= 1.0, "exploration init must lie in [0, 1]");
    require(decay > 0.0 && decay <= 1.0, "exploration decay must lie in (0, 1]");
    require(floor >= 0.0 && floor <= 1.0, "exploration floor must lie in [0, 1]");
  }
  require(c.noise_sigma_init >= 0 && c.noise_sigma_decay > 0 && c.noise_sigma_decay <= 1 &&
              c.noise_sigma_min >= 0,
          "noise schedule out of range");
  require(c.h_bar >= 1, "h_bar must be >= 1");
  if (!c.drop_prob.empty()) {
    require(static_cast<int>(c.drop_prob.size()) == c.h_bar,
            "drop_prob must have h_bar entries");
  }
  require(c.tau_cap_vi >= 1 && c.h_bar_vi >= 1, "VI truncation must be >= 1");
  require(c.vi_tol > 0, "vi_tol must be positive");
  require(!c.hidden_dims.empty(), "hidden_dims must not be empty");
  for (int d : c.hidden_dims) require(d >= 1, "hidden dims must be positive");
  require(c.eval_steps >= 1, "eval_steps must be >= 1");
  require(!c.out_dir.empty(), "out_dir must not be empty");
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["sensors"] = c.sensors;
  j["channels"] = c.channels;
  j["seed"] = c.seed;
  j["agent"] = c.agent;
  j["loose_episodes"] = c.loose_episodes;
  j["tight_episodes"] = c.tight_episodes;
  j["conventional_episodes"] = c.conventional_episodes;
  j["steps_per_episode"] = c.steps_per_episode;
  j["tau_cap"] = c.tau_cap;
  j["gamma"] = c.gamma;
  j["batch_size"] = c.batch_size;
  j["replay_capacity"] = c.replay_capacity;
  j["lr"] = c.lr;
  j["lr_actor"] = c.lr_actor;
  j["lr_critic"] = c.lr_critic;
  j["lr_decay"] = c.lr_decay;
  j["target_sync_period"] = c.target_sync_period;
  j["delta"] = c.delta;
  j["alpha1"] = c.alpha1;
  j["alpha2"] = c.alpha2;
  j["eps_init"] = c.eps_init;
  j["eps_decay"] = c.eps_decay;
  j["eps_min"] = c.eps_min;
  j["xi_init"] = c.xi_init;
  j["xi_decay"] = c.xi_decay;
  j["xi_min"] = c.xi_min;
  j["noise_sigma_init"] = c.noise_sigma_init;
  j["noise_sigma_decay"] = c.noise_sigma_decay;
  j["noise_sigma_min"] = c.noise_sigma_min;
  j["h_bar"] = c.h_bar;
  j["drop_prob"] = c.drop_prob;
  j["tau_cap_vi"] = c.tau_cap_vi;
  j["h_bar_vi"] = c.h_bar_vi;
  j["vi_tol"] = c.vi_tol;
  j["hidden_dims"] = c.hidden_dims;
  j["literal_actor_gradient"] = c.literal_actor_gradient;
  j["eval_steps"] = c.eval_steps;
  j["out_dir"] = c.out_dir;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "sensors", "channels", "seed", "agent", "loose_episodes", "tight_episodes",
      "conventional_episodes", "steps_per_episode", "tau_cap", "gamma", "batch_size",
      "replay_capacity", "lr", "lr_actor", "lr_critic", "lr_decay",
      "target_sync_period", "delta", "alpha1", "alpha2", "eps_init", "eps_decay",
      "eps_min", "xi_init", "xi_decay", "xi_min", "noise_sigma_init",
      "noise_sigma_decay", "noise_sigma_min", "h_bar", "drop_prob", "tau_cap_vi",
      "h_bar_vi", "vi_tol", "hidden_dims", "literal_actor_gradient", "eval_steps",
      "out_dir"};
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) {
      throw ConfigError("config: unknown key '" + item.key() + "'");
    }
  }
  ExperimentConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("sensors", c.sensors);
  get("channels", c.channels);
  get("seed", c.seed);
  get("agent", c.agent);
  get("loose_episodes", c.loose_episodes);
  get("tight_episodes", c.tight_episodes);
  get("conventional_episodes", c.conventional_episodes);
  get("steps_per_episode", c.steps_per_episode);
  get("tau_cap", c.tau_cap);
  get("gamma", c.gamma);
  get("batch_size", c.batch_size);
  get("replay_capacity", c.replay_capacity);
  get("lr", c.lr);
  get("lr_actor", c.lr_actor);
  get("lr_critic", c.lr_critic);
  get("lr_decay", c.lr_decay);
  get("target_sync_period", c.target_sync_period);
  get("delta", c.delta);
  get("alpha1", c.alpha1);
  get("alpha2", c.alpha2);
  get("eps_init", c.eps_init);
  get("eps_decay", c.eps_decay);
  get("eps_min", c.eps_min);
  get("xi_init", c.xi_init);
  get("xi_decay", c.xi_decay);
  get("xi_min", c.xi_min);
  get("noise_sigma_init", c.noise_sigma_init);
  get("noise_sigma_decay", c.noise_sigma_decay);
  get("noise_sigma_min", c.noise_sigma_min);
  get("h_bar", c.h_bar);
  get("drop_prob", c.drop_prob);
  get("tau_cap_vi", c.tau_cap_vi);
  get("h_bar_vi", c.h_bar_vi);
  get("vi_tol", c.vi_tol);
  get("hidden_dims", c.hidden_dims);
  get("literal_actor_gradient", c.literal_actor_gradient);
  get("eval_steps", c.eval_steps);
  get("out_dir", c.out_dir);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  validate(c);
  return c;
}

GeneratedSystem generate_system(std::uint64_t seed, int sensors, int channels,
                                int h_bar, const Vector& drop_prob) {
  if (sensors < 1 || channels < 1 || channels > sensors) {
    throw DomainError("generate_system: need 1 <= channels <= sensors");
  }
  Rng rng(seed);
  GeneratedSystem sys;
  sys.seed = seed;
  for (int n = 0; n < sensors; ++n) {
    bool accepted = false;
    for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
      Matrix A(2, 2);
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) A(r, c) = uniform_range(rng, -1.0, 1.0);
      }
      double rho = spectral_radius(A);
      if (rho < 1e-6) continue;
      double target = uniform_range(rng, 1.0, 1.4);
      A *= target / rho;
      Matrix C(1, 2);
      C(0, 0) = uniform_unit(rng);
      C(0, 1) = uniform_unit(rng);
      try {
        sys.processes.push_back(
            make_process_model(A, C, Matrix::Identity(2, 2), Matrix::Identity(1, 1)));
      } catch (const NonConvergence&) {
        continue;
      }
      sys.spectral_radii.push_back(target);
      accepted = true;
    }
    if (!accepted) {
      throw GenerationFailure("generate_system: no usable draw in 100 attempts");
    }
  }
  Matrix dist(static_cast<long>(sensors) * channels, h_bar);
  for (long r = 0; r < dist.rows(); ++r) {
    for (int i = 0; i < h_bar; ++i) dist(r, i) = uniform_unit(rng);
    dist.row(r) /= dist.row(r).sum();
  }
  Vector p = drop_prob.size() > 0 ? drop_prob : default_drop_probabilities(h_bar);
  sys.channels = make_channel_model(sensors, channels, p, dist);
  return sys;
}

nlohmann::json system_to_json(const GeneratedSystem& system, double gamma, int tau_cap) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["seed"] = system.seed;
  j["gamma"] = gamma;
  j["tau_cap"] = tau_cap;
  j["spectral_radii"] = system.spectral_radii;
  nlohmann::json procs = nlohmann::json::array();
  for (const auto& p : system.processes) {
    procs.push_back({{"A", matrix_to_rows(p.A)},
                     {"C", matrix_to_rows(p.C)},
                     {"W", matrix_to_rows(p.W)},
                     {"V", matrix_to_rows(p.V)},
                     {"P_bar", matrix_to_rows(p.P_bar)}});
  }
  j["processes"] = std::move(procs);
  j["channels"] = {{"sensors", system.channels.sensors},
                   {"channels", system.channels.channels},
                   {"states", system.channels.states},
                   {"drop_prob",
                    std::vector<double>(system.channels.drop_prob.data(),
                                        system.channels.drop_prob.data() +
                                            system.channels.drop_prob.size())},
                   {"dist", matrix_to_rows(system.channels.dist)}};
  return j;
}

LoadedSystem system_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != 1) {
    throw ConfigError("system file: unsupported schema version");
  }
  GeneratedSystem sys;
  sys.seed = j.at("seed").get<std::uint64_t>();
  sys.spectral_radii = j.value("spectral_radii", std::vector<double>{});
  for (const auto& p : j.at("processes")) {
    ProcessModel model;
    model.A = rows_to_matrix(p.at("A").get<std::vector<std::vector<double>>>());
    model.C = rows_to_matrix(p.at("C").get<std::vector<std::vector<double>>>());
    model.W = rows_to_matrix(p.at("W").get<std::vector<std::vector<double>>>());
    model.V = rows_to_matrix(p.at("V").get<std::vector<std::vector<double>>>());
    model.P_bar = rows_to_matrix(p.at("P_bar").get<std::vector<std::vector<double>>>());
    sys.processes.push_back(std::move(model));
  }
  const auto& ch = j.at("channels");
  auto dp = ch.at("drop_prob").get<std::vector<double>>();
  sys.channels = make_channel_model(
      ch.at("sensors").get<int>(), ch.at("channels").get<int>(),
      Eigen::Map<const Vector>(dp.data(), static_cast<long>(dp.size())),
      rows_to_matrix(ch.at("dist").get<std::vector<std::vector<double>>>()));

  LoadedSystem loaded;
  loaded.spec = make_mdp_spec(sys.processes, sys.channels, j.at("gamma").get<double>(),
                              j.at("tau_cap").get<int>());
  loaded.system = std::move(sys);
  return loaded;
}

LoadedSystem load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open system file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("system file parse error: ") + e.what());
  }
  return system_from_json(j);
}

PolicyFn make_vi_policy(const ValueIterationResult& vi, const ActionSpace& space) {
  return [&vi, &space](const SystemState& s) {
    return space[vi.policy[static_cast<std::size_t>(vi.indexer.index_of(s))]];
  };
}

PolicyFn make_qnet_policy(const Network& qnet, const MdpSpec& spec,
                          const ActionSpace& space) {
  return [&qnet, &spec, &space](const SystemState& s) {
    return greedy_action(qnet, s, spec, space);
  };
}

PolicyFn make_actor_policy(const Network& actor, const MdpSpec& spec) {
  return [&actor, &spec](const SystemState& s) {
    return map_virtual_to_schedule(forward(actor, state_to_input(s, spec)),
                                   spec.channel_count());
  };
}

EvaluationResult evaluate_policy(const PolicyFn& policy, const MdpSpec& spec, int steps,
                                 std::uint64_t seed, std::ostream* per_step_csv) {
  if (steps < 1) throw DomainError("evaluate_policy: steps must be >= 1");
  Rng rng(seed);
  SystemState s = initial_state(spec, rng);
  if (per_step_csv) *per_step_csv << "step,sum_mse\n";
  double total = 0.0;
  for (int k = 0; k < steps; ++k) {
    double sum_mse = -reward(spec, s);
    total += sum_mse;
    if (per_step_csv) *per_step_csv << k << "," << fmt_double(sum_mse) << "\n";
    auto [next, r] = step(spec, s, policy(s), rng);
    (void)r;
    s = std::move(next);
  }
  return {total / steps, steps, seed};
}

void write_dqn_curve_csv(std::ostream& out, const std::vector<EpisodeLog>& log) {
  out << "episode,steps,epsilon,xi,avg_sum_mse,loss_mean,wall_ms\n";
  for (const auto& row : log) {
    out << row.episode << "," << row.steps << "," << fmt_double(row.epsilon) << ","
        << fmt_double(row.xi) << "," << fmt_double(row.avg_sum_mse) << ","
        << fmt_double(row.loss_mean) << "," << row.wall_ms << "\n";
  }
}

void write_ddpg_curve_csv(std::ostream& out, const std::vector<DdpgEpisodeLog>& log) {
  out << "episode,steps,epsilon,xi,avg_sum_mse,loss_mean,wall_ms,"
         "actor_loss_mean,critic_loss_mean,noise_sigma\n";
  for (const auto& row : log) {
    out << row.episode << "," << row.steps << "," << fmt_double(row.epsilon) << ","
        << fmt_double(row.xi) << "," << fmt_double(row.avg_sum_mse) << ","
        << fmt_double(row.loss_mean) << "," << row.wall_ms << ","
        << fmt_double(row.actor_loss_mean) << "," << fmt_double(row.critic_loss_mean)
        << "," << fmt_double(row.noise_sigma) << "\n";
  }
}

std::uint64_t derive_eval_seed(std::uint64_t seed) {
  return seed ^ 0x9e3779b97f4a7c15ULL;
}

namespace {

std::ofstream open_artifact(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write artifact " + path.string());
  return out;
}

DqnConfig dqn_config_of(const ExperimentConfig& c, bool se_stages) {
  DqnConfig d;
  d.loose_episodes = se_stages ? c.loose_episodes : 0;
  d.tight_episodes = se_stages ? c.tight_episodes : 0;
  d.conventional_episodes =
      se_stages ? c.conventional_episodes
                : c.loose_episodes + c.tight_episodes + c.conventional_episodes;
  d.steps_per_episode = c.steps_per_episode;
  d.batch_size = c.batch_size;
  d.replay_capacity = c.replay_capacity;
  d.lr = c.lr;
  d.lr_decay = c.lr_decay;
  d.alpha1 = c.alpha1;
  d.target_sync_period = c.target_sync_period;
  d.eps_init = c.eps_init;
  d.eps_decay = c.eps_decay;
  d.eps_min = c.eps_min;
  d.xi_init = c.xi_init;
  d.xi_decay = c.xi_decay;
  d.xi_min = c.xi_min;
  d.hidden_dims = c.hidden_dims;
  return d;
}

DdpgConfig ddpg_config_of(const ExperimentConfig& c, bool se_stages) {
  DdpgConfig d;
  d.loose_episodes = se_stages ? c.loose_episodes : 0;
  d.tight_episodes = se_stages ? c.tight_episodes : 0;
  d.conventional_episodes =
      se_stages ? c.conventional_episodes
                : c.loose_episodes + c.tight_episodes + c.conventional_episodes;
  d.steps_per_episode = c.steps_per_episode;
  d.batch_size = c.batch_size;
  d.replay_capacity = c.replay_capacity;
  d.lr_actor = c.lr_actor;
  d.lr_critic = c.lr_critic;
  d.lr_decay = c.lr_decay;
  d.alpha1 = c.alpha1;
  d.alpha2 = c.alpha2;
  d.delta = c.delta;
  d.eps_init = c.eps_init;
  d.eps_decay = c.eps_decay;
  d.eps_min = c.eps_min;
  d.xi_init = c.xi_init;
  d.xi_decay = c.xi_decay;
  d.xi_min = c.xi_min;
  d.noise_sigma_init = c.noise_sigma_init;
  d.noise_sigma_decay = c.noise_sigma_decay;
  d.noise_sigma_min = c.noise_sigma_min;
  d.hidden_dims = c.hidden_dims;
  d.literal_actor_gradient = c.literal_actor_gradient;
  return d;
}

}  // namespace

EvaluationResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  namespace fs = std::filesystem;
  const fs::path out_dir(config.out_dir);
  fs::create_directories(out_dir);

  // The exact solver runs on the truncated instance; trained agents on the
  // configured one.
  const bool exact = config.agent == "value_iteration";
  const int h_bar = exact ? config.h_bar_vi : config.h_bar;
  const int tau_cap = exact ? config.tau_cap_vi : config.tau_cap;
  Vector drop = config.drop_prob.empty()
                    ? default_drop_probabilities(h_bar)
                    : Eigen::Map<const Vector>(config.drop_prob.data(),
                                               static_cast<long>(config.drop_prob.size()));
  GeneratedSystem system =
      generate_system(config.seed, config.sensors, config.channels, h_bar, drop);
  MdpSpec spec = make_mdp_spec(system.processes, system.channels, config.gamma, tau_cap);

  {
    auto out = open_artifact(out_dir / "config.json");
    out << config_to_json(config).dump(2) << "\n";
  }
  {
    auto out = open_artifact(out_dir / "system.json");
    out << system_to_json(system, config.gamma, tau_cap).dump(2) << "\n";
  }

  PolicyFn policy;
  ActionSpace space;                       // kept alive for policy closures
  ValueIterationResult vi;                 // likewise
  Network qnet, actor;                     // likewise

  if (exact) {
    space = enumerate_actions(config.sensors, config.channels);
    vi = value_iteration(spec, space, config.vi_tol);
    auto violations = check_threshold_structure(vi.policy, spec, space);
    {
      auto out = open_artifact(out_dir / "threshold_report.json");
      out << threshold_report_to_json(violations).dump(2) << "\n";
    }
    {
      auto out = open_artifact(out_dir / "policy.csv");
      write_policy_csv(out, vi.policy, spec, space);
    }
    {
      auto out = open_artifact(out_dir / "vi_summary.json");
      nlohmann::json j;
      j["residual"] = vi.residual;
      j["sweeps"] = vi.sweeps;
      j["states"] = vi.indexer.state_count;
      j["violations"] = violations.size();
      out << j.dump(2) << "\n";
    }
    {
      auto out = open_artifact(out_dir / "curve.csv");
      write_dqn_curve_csv(out, {});  // solver runs have no training curve
    }
    policy = make_vi_policy(vi, space);
  } else if (config.agent == "dqn" || config.agent == "se_dqn") {
    space = enumerate_actions(config.sensors, config.channels);
    auto dconf = dqn_config_of(config, config.agent == "se_dqn");
    auto stage_writer = [&](const std::string& label, const Network& net) {
      std::string name = label == "final" ? "qnet.json" : "qnet_" + label + ".json";
      save_checkpoint((out_dir / name).string(), net, nullptr, "qnet");
    };
    DqnTrainResult trained = train_se_dqn(spec, dconf, config.seed, stage_writer);
    {
      auto out = open_artifact(out_dir / "curve.csv");
      write_dqn_curve_csv(out, trained.log);
    }
    qnet = std::move(trained.qnet);
    policy = make_qnet_policy(qnet, spec, space);
  } else {
    auto dconf = ddpg_config_of(config, config.agent == "se_ddpg");
    auto stage_writer = [&](const std::string& label, const Network& a,
                            const Network& c) {
      std::string suffix = label == "final" ? ".json" : "_" + label + ".json";
      save_checkpoint((out_dir / ("actor" + suffix)).string(), a, nullptr, "actor");
      save_checkpoint((out_dir / ("critic" + suffix)).string(), c, nullptr, "critic");
    };
    DdpgTrainResult trained = train_se_ddpg(spec, dconf, config.seed, stage_writer);
    {
      auto out = open_artifact(out_dir / "curve.csv");
      write_ddpg_curve_csv(out, trained.log);
    }
    actor = std::move(trained.actor);
    policy = make_actor_policy(actor, spec);
  }

  EvaluationResult eval;
  {
    auto steps_out = open_artifact(out_dir / "eval_steps.csv");
    eval = evaluate_policy(policy, spec, config.eval_steps,
                           derive_eval_seed(config.seed), &steps_out);
  }
  {
    auto out = open_artifact(out_dir / "evaluation.json");
    nlohmann::json j;
    j["avg_sum_mse"] = eval.avg_sum_mse;
    j["steps"] = eval.steps;
    j["seed"] = eval.seed;
    out << j.dump(2) << "\n";
  }
  return eval;
}

}  // namespace sensched
