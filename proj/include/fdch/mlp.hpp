#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdch/dataset.hpp"

namespace fdch {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh = 2 };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation act = Activation::identity;
};

// Plain feed-forward network with explicit forward / backward-from-dY /
// SGD step. No autodiff: the training objectives supply their output-layer
// gradients analytically and only the chain rule is needed below that.
struct Mlp {
  std::vector<Layer> layers;

  Index in_dim() const { return layers.front().weights.cols(); }
  Index out_dim() const { return layers.back().weights.rows(); }
};

// Per-layer intermediates of one forward pass, kept for backward.
struct ForwardTape {
  Matrix input;              // in x m
  std::vector<Matrix> pre;   // pre-activations, one per layer
  std::vector<Matrix> post;  // activations, one per layer
};

struct LayerGrads {
  Matrix weights;  // dL/dW
  Vector bias;     // dL/db
};

struct Grads {
  std::vector<LayerGrads> layers;
  Matrix input;  // dL/dX, so gradients can flow into an upstream network
};

// Weights ~ Gaussian(0, 2/in_dim), biases zero. Entries are drawn from
// SplitMix64(seed) layer by layer in column-major storage order.
Mlp init_mlp(const std::vector<int>& dims,
             const std::vector<Activation>& activations, std::uint64_t seed);

// Column-wise affine + activation over the batch. The affine step is applied
// one column at a time, which makes outputs independent of how the batch is
// chunked and exactly equivariant under column permutations.
// If tape is non-null it is filled for a later backward().
Matrix forward(const Mlp& net, const Matrix& x, ForwardTape* tape = nullptr);

// Exact chain-rule gradients for the batch recorded in tape. The relu
// derivative at exactly zero pre-activation is taken as 0.
Grads backward(const Mlp& net, const ForwardTape& tape, const Matrix& d_out);

// W <- W - lr*dW, b <- b - lr*db for every layer.
void sgd_step(Mlp& net, const Grads& grads, double lr);

// -----------------------------------------------------------------------
// Checkpoint container: magic "FDCHM", u32 version, u16 network count, then
// per network u16 layer count, per-layer u32 in / u32 out dims, per-layer
// u8 activation tag, then per-layer weights (row-major f64 LE) followed by
// the bias vector. Multi-byte values little-endian.
// -----------------------------------------------------------------------
void save_networks(const std::string& path, const std::vector<const Mlp*>& nets);
std::vector<Mlp> load_networks(const std::string& path);

}  // namespace fdch
