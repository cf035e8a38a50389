#include "fdch/mlp.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "fdch/binary_io.hpp"
#include "fdch/rng.hpp"

namespace fdch {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

Mlp init_mlp(const std::vector<int>& dims,
             const std::vector<Activation>& activations, std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("need at least 2 layer sizes");
  if (activations.size() != dims.size() - 1)
    throw std::invalid_argument("need one activation per layer");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("layer sizes must be positive");

  SplitMix64 rng(seed);
  Mlp net;
  net.layers.resize(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer& layer = net.layers[l];
    const int in = dims[l];
    const int out = dims[l + 1];
    layer.weights.resize(out, in);
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    double* w = layer.weights.data();
    for (Index i = 0; i < layer.weights.size(); ++i) w[i] = stddev * rng.gaussian();
    layer.bias = Vector::Zero(out);
    layer.act = activations[l];
  }
  return net;
}

namespace {

void apply_activation(Activation act, Matrix& m) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::relu:
      m = m.array().max(0.0).matrix();
      break;
    case Activation::tanh:
      m = m.array().tanh().matrix();
      break;
  }
}

// d(activation)/d(pre), evaluated from the cached pre/post values.
Matrix activation_deriv(Activation act, const Matrix& pre, const Matrix& post) {
  switch (act) {
    case Activation::identity:
      return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::relu:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::tanh:
      return (1.0 - post.array().square()).matrix();
  }
  return Matrix();
}

}  // namespace

Matrix forward(const Mlp& net, const Matrix& x, ForwardTape* tape) {
  if (net.layers.empty()) throw std::invalid_argument("empty network");
  if (x.rows() != net.in_dim())
    throw std::invalid_argument("forward: input has " + std::to_string(x.rows()) +
                                " rows, network expects " +
                                std::to_string(net.in_dim()));
  if (tape) {
    tape->input = x;
    tape->pre.clear();
    tape->post.clear();
    tape->pre.reserve(net.layers.size());
    tape->post.reserve(net.layers.size());
  }

  Matrix cur = x;
  for (const Layer& layer : net.layers) {
    Matrix pre(layer.weights.rows(), cur.cols());
    for (Index j = 0; j < cur.cols(); ++j)
      pre.col(j).noalias() = layer.weights * cur.col(j) + layer.bias;
    Matrix post = pre;
    apply_activation(layer.act, post);
    if (tape) {
      tape->pre.push_back(pre);
      tape->post.push_back(post);
    }
    cur = std::move(post);
  }
  return cur;
}

Grads backward(const Mlp& net, const ForwardTape& tape, const Matrix& d_out) {
  const std::size_t depth = net.layers.size();
  if (tape.pre.size() != depth || tape.post.size() != depth)
    throw std::invalid_argument("backward: tape depth does not match network");
  if (d_out.rows() != net.out_dim() || d_out.cols() != tape.input.cols())
    throw std::invalid_argument("backward: output gradient shape mismatch");

  Grads grads;
  grads.layers.resize(depth);
  Matrix d_post = d_out;
  for (std::size_t l = depth; l-- > 0;) {
    const Layer& layer = net.layers[l];
    const Matrix d_pre =
        d_post.cwiseProduct(activation_deriv(layer.act, tape.pre[l], tape.post[l]));
    const Matrix& in = (l == 0) ? tape.input : tape.post[l - 1];
    grads.layers[l].weights.noalias() = d_pre * in.transpose();
    grads.layers[l].bias = d_pre.rowwise().sum();
    Matrix d_in(layer.weights.cols(), d_pre.cols());
    for (Index j = 0; j < d_pre.cols(); ++j)
      d_in.col(j).noalias() = layer.weights.transpose() * d_pre.col(j);
    d_post = std::move(d_in);
  }
  grads.input = std::move(d_post);
  return grads;
}

void sgd_step(Mlp& net, const Grads& grads, double lr) {
  if (grads.layers.size() != net.layers.size())
    throw std::invalid_argument("sgd_step: gradient depth mismatch");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Layer& layer = net.layers[l];
    const LayerGrads& g = grads.layers[l];
    if (g.weights.rows() != layer.weights.rows() ||
        g.weights.cols() != layer.weights.cols() ||
        g.bias.size() != layer.bias.size())
      throw std::invalid_argument("sgd_step: gradient shape mismatch");
    layer.weights -= lr * g.weights;
    layer.bias -= lr * g.bias;
  }
}

// -----------------------------------------------------------------------
// Checkpoint I/O
// -----------------------------------------------------------------------

namespace {
constexpr char kModelMagic[] = "FDCHM";
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

void save_networks(const std::string& path, const std::vector<const Mlp*>& nets) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  io::write_magic(out, kModelMagic);
  io::write_u32(out, kModelVersion);
  io::write_u16(out, static_cast<std::uint16_t>(nets.size()));
  for (const Mlp* net : nets) {
    io::write_u16(out, static_cast<std::uint16_t>(net->layers.size()));
    for (const Layer& layer : net->layers) {
      io::write_u32(out, static_cast<std::uint32_t>(layer.weights.cols()));
      io::write_u32(out, static_cast<std::uint32_t>(layer.weights.rows()));
    }
    for (const Layer& layer : net->layers)
      out.put(static_cast<char>(layer.act));
    for (const Layer& layer : net->layers) {
      // row-major on disk
      for (Index r = 0; r < layer.weights.rows(); ++r)
        for (Index c = 0; c < layer.weights.cols(); ++c)
          io::write_f64(out, layer.weights(r, c));
      for (Index r = 0; r < layer.bias.size(); ++r)
        io::write_f64(out, layer.bias(r));
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<Mlp> load_networks(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  io::expect_magic(in, kModelMagic, "not a model checkpoint file: " + path);
  const std::uint32_t version = io::read_u32(in);
  if (version != kModelVersion)
    throw std::runtime_error("unsupported model checkpoint version " +
                             std::to_string(version));
  const std::uint16_t count = io::read_u16(in);
  std::vector<Mlp> nets(count);
  for (Mlp& net : nets) {
    const std::uint16_t depth = io::read_u16(in);
    if (depth == 0) throw std::runtime_error("checkpoint network has no layers");
    net.layers.resize(depth);
    for (Layer& layer : net.layers) {
      const std::uint32_t in_dim = io::read_u32(in);
      const std::uint32_t out_dim = io::read_u32(in);
      if (in_dim == 0 || out_dim == 0)
        throw std::runtime_error("checkpoint layer has zero dimension");
      layer.weights.resize(out_dim, in_dim);
      layer.bias.resize(out_dim);
    }
    for (Layer& layer : net.layers) {
      const int tag = in.get();
      if (tag == EOF) throw std::runtime_error("unexpected end of file");
      if (tag > 2) throw std::runtime_error("unknown activation tag in checkpoint");
      layer.act = static_cast<Activation>(tag);
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      Layer& layer = net.layers[l];
      if (l > 0 && layer.weights.cols() != net.layers[l - 1].weights.rows())
        throw std::runtime_error("checkpoint layer dimensions do not chain");
      for (Index r = 0; r < layer.weights.rows(); ++r)
        for (Index c = 0; c < layer.weights.cols(); ++c)
          layer.weights(r, c) = io::read_f64(in);
      for (Index r = 0; r < layer.bias.size(); ++r)
        layer.bias(r) = io::read_f64(in);
      if (!layer.weights.allFinite() || !layer.bias.allFinite())
        throw std::runtime_error("non-finite parameter in checkpoint");
    }
  }
  return nets;
}

}  // namespace fdch
