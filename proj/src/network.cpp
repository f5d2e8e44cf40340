#include "sensched/network.hpp"

#include <cmath>
#include <fstream>

#include "sensched/errors.hpp"

namespace sensched {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

bool Network::operator==(const Network& other) const {
  if (layer_dims != other.layer_dims || output_activation != other.output_activation) {
    return false;
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  }
  return true;
}

bool AdamState::operator==(const AdamState& other) const {
  if (step != other.step || lr0 != other.lr0 || decay != other.decay ||
      episode != other.episode || m_w.size() != other.m_w.size()) {
    return false;
  }
  for (std::size_t l = 0; l < m_w.size(); ++l) {
    if (m_w[l] != other.m_w[l] || v_w[l] != other.v_w[l] || m_b[l] != other.m_b[l] ||
        v_b[l] != other.v_b[l]) {
      return false;
    }
  }
  return true;
}

Network make_network(std::vector<int> layer_dims, OutputActivation activation,
                     Rng& rng, bool small_final_init) {
  if (layer_dims.size() < 2) throw ShapeError("make_network: need at least two layers");
  for (int d : layer_dims) {
    if (d < 1) throw ShapeError("make_network: layer dimensions must be positive");
  }
  Network net;
  net.layer_dims = std::move(layer_dims);
  net.output_activation = activation;
  const int layers = static_cast<int>(net.layer_dims.size()) - 1;
  net.weights.resize(static_cast<std::size_t>(layers));
  net.biases.resize(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    const int fan_in = net.layer_dims[static_cast<std::size_t>(l)];
    const int fan_out = net.layer_dims[static_cast<std::size_t>(l) + 1];
    double bound = (small_final_init && l == layers - 1)
                       ? 3e-3
                       : 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = uniform_range(rng, -bound, bound);
    }
    net.weights[static_cast<std::size_t>(l)] = std::move(w);
    net.biases[static_cast<std::size_t>(l)] = Vector::Zero(fan_out);
  }
  return net;
}

Matrix forward(const Network& net, const Matrix& input, ForwardCache* cache) {
  if (input.rows() != net.input_dim()) {
    throw ShapeError("forward: input length does not match the first layer");
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.reserve(net.weights.size() + 1);
    cache->activations.push_back(input);
  }
  Matrix a = input;
  for (int l = 0; l < net.layer_count(); ++l) {
    Matrix z = net.weights[static_cast<std::size_t>(l)] * a;
    z.colwise() += net.biases[static_cast<std::size_t>(l)];
    if (l + 1 < net.layer_count()) {
      a = z.cwiseMax(0.0);
    } else if (net.output_activation == OutputActivation::tanh_squash) {
      a = z.array().tanh().matrix();
    } else {
      a = std::move(z);
    }
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

Vector forward(const Network& net, const Vector& input) {
  return forward(net, Matrix(input), nullptr).col(0);
}

BackwardResult backward(const Network& net, const ForwardCache& cache,
                        const Matrix& upstream) {
  const int layers = net.layer_count();
  if (static_cast<int>(cache.activations.size()) != layers + 1) {
    throw ShapeError("backward: cache does not match the network depth");
  }
  if (upstream.rows() != net.output_dim() ||
      upstream.cols() != cache.activations.front().cols()) {
    throw ShapeError("backward: upstream gradient shape mismatch");
  }

  BackwardResult result;
  result.grads.weights.resize(static_cast<std::size_t>(layers));
  result.grads.biases.resize(static_cast<std::size_t>(layers));

  Matrix delta;
  if (net.output_activation == OutputActivation::tanh_squash) {
    const Matrix& out = cache.activations.back();
    delta = upstream.cwiseProduct((1.0 - out.array().square()).matrix());
  } else {
    delta = upstream;
  }
  for (int l = layers - 1; l >= 0; --l) {
    const Matrix& below = cache.activations[static_cast<std::size_t>(l)];
    result.grads.weights[static_cast<std::size_t>(l)] = delta * below.transpose();
    result.grads.biases[static_cast<std::size_t>(l)] = delta.rowwise().sum();
    Matrix prev = net.weights[static_cast<std::size_t>(l)].transpose() * delta;
    if (l > 0) {
      // Rectifier mask from the stored post-activation; zero output means
      // the unit was clamped (subgradient 0 at the kink).
      prev = prev.cwiseProduct(
          (below.array() > 0.0).cast<double>().matrix());
    }
    delta = std::move(prev);
  }
  result.input_grad = std::move(delta);
  return result;
}

BackwardResult backward(const Network& net, const Matrix& input, const Matrix& upstream) {
  ForwardCache cache;
  forward(net, input, &cache);
  return backward(net, cache, upstream);
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  g.weights.reserve(net.weights.size());
  g.biases.reserve(net.biases.size());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(Vector::Zero(net.biases[l].size()));
  }
  return g;
}

void accumulate(Gradients& into, const Gradients& from, double scale) {
  if (into.weights.size() != from.weights.size()) {
    throw ShapeError("accumulate: gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    into.weights[l] += scale * from.weights[l];
    into.biases[l] += scale * from.biases[l];
  }
}

AdamState make_adam(const Network& net, double lr0, double decay) {
  AdamState state;
  state.lr0 = lr0;
  state.decay = decay;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    state.m_w.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    state.v_w.push_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    state.m_b.push_back(Vector::Zero(net.biases[l].size()));
    state.v_b.push_back(Vector::Zero(net.biases[l].size()));
  }
  return state;
}

void adam_step(AdamState& state, Network& net, const Gradients& grads) {
  if (state.m_w.size() != net.weights.size() ||
      grads.weights.size() != net.weights.size()) {
    throw ShapeError("adam_step: layer count mismatch");
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    if (grads.weights[l].rows() != net.weights[l].rows() ||
        grads.weights[l].cols() != net.weights[l].cols() ||
        grads.biases[l].size() != net.biases[l].size()) {
      throw ShapeError("adam_step: gradient shape mismatch");
    }
    if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite()) {
      throw NonFiniteGradient("adam_step: gradient contains NaN or Inf");
    }
  }
  state.step += 1;
  const double lr = state.lr0 / (1.0 + state.decay * state.episode);
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    state.m_w[l] = kBeta1 * state.m_w[l] + (1.0 - kBeta1) * grads.weights[l];
    state.v_w[l] = kBeta2 * state.v_w[l].array().matrix() +
                   (1.0 - kBeta2) * grads.weights[l].array().square().matrix();
    net.weights[l].array() -= lr * (state.m_w[l].array() / bc1) /
                              ((state.v_w[l].array() / bc2).sqrt() + kEps);
    state.m_b[l] = kBeta1 * state.m_b[l] + (1.0 - kBeta1) * grads.biases[l];
    state.v_b[l] = kBeta2 * state.v_b[l].array().matrix() +
                   (1.0 - kBeta2) * grads.biases[l].array().square().matrix();
    net.biases[l].array() -= lr * (state.m_b[l].array() / bc1) /
                             ((state.v_b[l].array() / bc2).sqrt() + kEps);
  }
}

void sync_target(Network& target, const Network& online, double delta) {
  if (target.layer_dims != online.layer_dims) {
    throw ShapeError("sync_target: layer dimensions differ");
  }
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    target.weights[l] = delta * online.weights[l] + (1.0 - delta) * target.weights[l];
    target.biases[l] = delta * online.biases[l] + (1.0 - delta) * target.biases[l];
  }
}

Vector flatten_parameters(const Network& net) {
  long total = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    total += net.weights[l].size() + net.biases[l].size();
  }
  Vector out(total);
  long at = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Matrix& w = net.weights[l];
    for (long r = 0; r < w.rows(); ++r) {
      for (long c = 0; c < w.cols(); ++c) out(at++) = w(r, c);
    }
    for (long i = 0; i < net.biases[l].size(); ++i) out(at++) = net.biases[l](i);
  }
  return out;
}

void set_parameters(Network& net, const Vector& params) {
  long at = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Matrix& w = net.weights[l];
    for (long r = 0; r < w.rows(); ++r) {
      for (long c = 0; c < w.cols(); ++c) {
        if (at >= params.size()) throw ShapeError("set_parameters: vector too short");
        w(r, c) = params(at++);
      }
    }
    for (long i = 0; i < net.biases[l].size(); ++i) {
      if (at >= params.size()) throw ShapeError("set_parameters: vector too short");
      net.biases[l](i) = params(at++);
    }
  }
  if (at != params.size()) throw ShapeError("set_parameters: vector too long");
}

Vector flatten(const Gradients& grads, const Network& shape) {
  Network tmp = shape;
  tmp.weights = grads.weights;
  tmp.biases = grads.biases;
  return flatten_parameters(tmp);
}

namespace {

std::vector<double> matrix_rowmajor(const Matrix& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (long r = 0; r < m.rows(); ++r) {
    for (long c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Matrix matrix_from_rowmajor(const std::vector<double>& data, long rows, long cols) {
  if (static_cast<long>(data.size()) != rows * cols) {
    throw ShapeError("checkpoint: parameter array size mismatch");
  }
  Matrix m(rows, cols);
  std::size_t at = 0;
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) m(r, c) = data[at++];
  }
  return m;
}

}  // namespace

nlohmann::json network_to_json(const Network& net) {
  nlohmann::json j;
  j["layer_dims"] = net.layer_dims;
  j["output_activation"] =
      net.output_activation == OutputActivation::tanh_squash ? "tanh" : "identity";
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    weights.push_back(matrix_rowmajor(net.weights[l]));
    biases.push_back(std::vector<double>(net.biases[l].data(),
                                         net.biases[l].data() + net.biases[l].size()));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

Network network_from_json(const nlohmann::json& j) {
  Network net;
  net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  std::string act = j.at("output_activation").get<std::string>();
  if (act == "tanh") {
    net.output_activation = OutputActivation::tanh_squash;
  } else if (act == "identity") {
    net.output_activation = OutputActivation::identity;
  } else {
    throw ConfigError("checkpoint: unknown output activation '" + act + "'");
  }
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (net.layer_dims.size() < 2 || weights.size() != net.layer_dims.size() - 1 ||
      biases.size() != weights.size()) {
    throw ShapeError("checkpoint: layer structure mismatch");
  }
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    long rows = net.layer_dims[l + 1];
    long cols = net.layer_dims[l];
    net.weights.push_back(
        matrix_from_rowmajor(weights[l].get<std::vector<double>>(), rows, cols));
    auto b = biases[l].get<std::vector<double>>();
    if (static_cast<long>(b.size()) != rows) {
      throw ShapeError("checkpoint: bias array size mismatch");
    }
    net.biases.push_back(Eigen::Map<const Vector>(b.data(), rows));
  }
  return net;
}

nlohmann::json adam_to_json(const AdamState& state) {
  nlohmann::json j;
  j["step"] = state.step;
  j["lr0"] = state.lr0;
  j["decay"] = state.decay;
  j["episode"] = state.episode;
  nlohmann::json mw = nlohmann::json::array(), vw = nlohmann::json::array();
  nlohmann::json mb = nlohmann::json::array(), vb = nlohmann::json::array();
  for (std::size_t l = 0; l < state.m_w.size(); ++l) {
    mw.push_back(matrix_rowmajor(state.m_w[l]));
    vw.push_back(matrix_rowmajor(state.v_w[l]));
    mb.push_back(std::vector<double>(state.m_b[l].data(),
                                     state.m_b[l].data() + state.m_b[l].size()));
    vb.push_back(std::vector<double>(state.v_b[l].data(),
                                     state.v_b[l].data() + state.v_b[l].size()));
  }
  j["m_w"] = std::move(mw);
  j["v_w"] = std::move(vw);
  j["m_b"] = std::move(mb);
  j["v_b"] = std::move(vb);
  return j;
}

AdamState adam_from_json(const nlohmann::json& j, const Network& net) {
  AdamState state;
  state.step = j.at("step").get<long>();
  state.lr0 = j.at("lr0").get<double>();
  state.decay = j.at("decay").get<double>();
  state.episode = j.at("episode").get<int>();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    long rows = net.weights[l].rows();
    long cols = net.weights[l].cols();
    state.m_w.push_back(
        matrix_from_rowmajor(j.at("m_w")[l].get<std::vector<double>>(), rows, cols));
    state.v_w.push_back(
        matrix_from_rowmajor(j.at("v_w")[l].get<std::vector<double>>(), rows, cols));
    auto mb = j.at("m_b")[l].get<std::vector<double>>();
    auto vb = j.at("v_b")[l].get<std::vector<double>>();
    state.m_b.push_back(Eigen::Map<const Vector>(mb.data(), static_cast<long>(mb.size())));
    state.v_b.push_back(Eigen::Map<const Vector>(vb.data(), static_cast<long>(vb.size())));
  }
  return state;
}

nlohmann::json checkpoint_to_json(const Network& net, const AdamState* optimizer,
                                  const std::string& role) {
  nlohmann::json j = network_to_json(net);
  j["schema_version"] = 1;
  j["role"] = role;
  if (optimizer) j["optimizer"] = adam_to_json(*optimizer);
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != 1) {
    throw ConfigError("checkpoint: unsupported schema version");
  }
  Checkpoint ckpt;
  ckpt.net = network_from_json(j);
  ckpt.role = j.value("role", std::string{});
  if (j.contains("optimizer")) {
    ckpt.optimizer = adam_from_json(j.at("optimizer"), ckpt.net);
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Network& net,
                     const AdamState* optimizer, const std::string& role) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_checkpoint: cannot open " + path);
  out << checkpoint_to_json(net, optimizer, role).dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

}  // namespace sensched
