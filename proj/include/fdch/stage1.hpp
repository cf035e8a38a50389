#pragma once

#include <cstdint>
#include <vector>

#include "fdch/dataset.hpp"
#include "fdch/mlp.hpp"

namespace fdch {

struct Stage1Hyper {
  double lambda = 1.0;  // quantization weight
  double eta = 1.0;     // bit-balance weight
  double lr = 1e-4;     // applied per training column; see train_stage1
  int epochs = 30;
  int batch_size = 32;
  int bits = 16;  // code length k
  std::uint64_t seed = 0;
};

// Network shapes shared by both training stages. Feature nets run
// d -> hidden... -> embed_dim (relu hidden layers, identity last); the
// fusion net runs embed_dim -> fusion_hidden... -> k the same way. Stage-2
// hash nets reuse the feature-net shape with the last layer swapped for a
// k-wide identity hash layer.
struct ArchConfig {
  std::vector<int> img_hidden{128};
  std::vector<int> txt_hidden{128};
  int embed_dim = 64;
  std::vector<int> fusion_hidden{64};
  bool warm_start = true;  // stage-2 nets copy stage-1 feature layers
};

// Stage-1 state: two feature nets whose summed outputs pass through tanh
// into the fusion net, the current binary codes, and the cached fusion
// outputs for every training column.
struct FusionModel {
  Mlp img_net;
  Mlp txt_net;
  Mlp fusion_net;
  Matrix codes;         // k x n, entries in {-1,+1}
  Matrix output_cache;  // k x n, last computed fusion outputs
};

struct FuseResult {
  Matrix combined;  // tanh(img_out + txt_out), embed_dim x m
  Matrix out;       // fusion net output, k x m
  ForwardTape img_tape;
  ForwardTape txt_tape;
  ForwardTape fusion_tape;
};

// Paired forward pass through all three nets.
FuseResult fuse_forward(const FusionModel& model, const Matrix& img_batch,
                        const Matrix& txt_batch);

// Objective of the unified-code stage, evaluated for the given batch
// columns: the pairwise logistic term runs over batch columns against all
// n training columns (cache values stand in for out-of-batch columns), the
// quantization term covers the batch columns, and the balance term is the
// squared norm of the all-column row sums. batch_cols holds positions into
// the training set; batch_out column t corresponds to batch_cols[t].
double stage1_loss(const Matrix& batch_out, const std::vector<int>& batch_cols,
                   const Matrix& codes, const Matrix& output_cache,
                   const SimilarityOracle& sim, const Stage1Hyper& hyper);

// Exact gradient of stage1_loss with respect to batch_out.
Matrix stage1_output_grad(const Matrix& batch_out,
                          const std::vector<int>& batch_cols,
                          const Matrix& codes, const Matrix& output_cache,
                          const SimilarityOracle& sim,
                          const Stage1Hyper& hyper);

// Discrete code update: elementwise sign with sign(0) = +1. For any
// positive quantization weight this attains the exact maximum of
// tr(B^T H) over sign matrices, so the weight never changes the result.
Matrix update_codes(const Matrix& output_cache);

struct Stage1Result {
  FusionModel model;
  std::vector<double> objective_trace;  // full objective, one entry per epoch
};

// Alternating optimization: per epoch, mini-batch SGD on all three nets
// against stage1_output_grad (refreshing cached outputs with each batch's
// forward values), then a full cache recompute and the discrete code
// update. The applied step is hyper.lr / n_train: the pairwise and balance
// sums run over every training column, so raw gradients grow linearly with
// the training-set size. Sub-seeds from hyper.seed: 0 image net, 1 text
// net, 2 fusion net, 3 epoch shuffling.
Stage1Result train_stage1(const Dataset& ds, const std::vector<int>& train_idx,
                          const Stage1Hyper& hyper, const ArchConfig& arch);

// log(1 + e^x) without overflow.
inline double log1p_exp(double x) {
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace fdch
