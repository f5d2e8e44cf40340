#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sensched/estimation.hpp"
#include "sensched/rng.hpp"

#include "json.hpp"

namespace sensched {

enum class OutputActivation { identity, tanh_squash };

/// Fully-connected network: rectifier hidden layers, identity or tanh
/// output. Plain value object; training mutates it from a single thread.
struct Network {
  std::vector<int> layer_dims;         // input, hidden..., output
  std::vector<Matrix> weights;         // weights[l]: dims[l+1] x dims[l]
  std::vector<Vector> biases;          // biases[l]: dims[l+1]
  OutputActivation output_activation = OutputActivation::identity;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }

  bool operator==(const Network& other) const;
};

/// Parameter-shaped gradient accumulator.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

/// Post-activation values kept from a forward pass; activations[0] is the
/// input and activations[L] the output.
struct ForwardCache {
  std::vector<Matrix> activations;
};

/// Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero. When
/// small_final_init is set the output layer instead draws from
/// U(-3e-3, 3e-3) so a fresh actor starts near-zero rankings.
Network make_network(std::vector<int> layer_dims, OutputActivation activation,
                     Rng& rng, bool small_final_init = false);

/// Batched forward pass; columns are samples. Pure, no state mutation.
Matrix forward(const Network& net, const Matrix& input, ForwardCache* cache = nullptr);
Vector forward(const Network& net, const Vector& input);

struct BackwardResult {
  Gradients grads;
  Matrix input_grad;
};

/// Exact reverse-mode gradients of the forward map contracted with
/// `upstream` (output_dim x batch). Gradients sum over the batch.
BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Matrix& upstream);
BackwardResult backward(const Network& net, const Matrix& input, const Matrix& upstream);

Gradients zero_gradients(const Network& net);
void accumulate(Gradients& into, const Gradients& from, double scale = 1.0);

/// Adam accumulators plus the per-episode learning-rate decay state:
/// the effective rate is lr0 / (1 + decay * episode).
struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
  long step = 0;
  double lr0 = 1e-4;
  double decay = 0.0;
  int episode = 0;

  bool operator==(const AdamState& other) const;
};

AdamState make_adam(const Network& net, double lr0, double decay);

/// Standard Adam update (beta1 0.9, beta2 0.999, eps 1e-8) with bias
/// correction. Throws NonFiniteGradient if any gradient entry is NaN/Inf.
void adam_step(AdamState& state, Network& net, const Gradients& grads);

/// target <- delta * online + (1 - delta) * target, elementwise.
/// delta = 1 is a hard sync.
void sync_target(Network& target, const Network& online, double delta);

/// Parameter vector helpers (row-major per layer, weights then bias).
Vector flatten_parameters(const Network& net);
void set_parameters(Network& net, const Vector& params);
Vector flatten(const Gradients& grads, const Network& shape);

// Checkpoint format: schema-versioned JSON with layer dims, row-major
// parameter arrays, and optional optimizer state. Round-trips bit-exactly.
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);
nlohmann::json adam_to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j, const Network& net);

struct Checkpoint {
  Network net;
  std::optional<AdamState> optimizer;
  std::string role;  // e.g. "qnet", "actor", "critic"
};

nlohmann::json checkpoint_to_json(const Network& net, const AdamState* optimizer,
                                  const std::string& role);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::string& path, const Network& net,
                     const AdamState* optimizer, const std::string& role);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sensched
