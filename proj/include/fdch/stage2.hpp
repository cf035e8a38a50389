#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdch/dataset.hpp"
#include "fdch/mlp.hpp"
#include "fdch/stage1.hpp"

namespace fdch {

// Model variants: fdch_i drops the label-regression terms, fdch_ii drops
// the inter-modal pairwise term. The dropped component is exactly zero in
// every loss trace entry.
enum class Ablation { none, fdch_i, fdch_ii };

const char* to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct Stage2Hyper {
  double gamma = 1.0;  // code-regression weight
  double beta = 1.0;   // label-regression weight
  double alpha = 1.0;  // bit-balance weight
  double lr = 0.01;
  int epochs = 30;
  int batch_size = 16;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::none;
};

// Modality-specific hash networks plus the linear label maps and cached
// outputs over the training columns.
struct HashNets {
  Mlp img_net;            // d_v -> ... -> k, identity hash layer
  Mlp txt_net;            // d_t -> ... -> k, identity hash layer
  Matrix img_classifier;  // W1, c x k
  Matrix txt_classifier;  // W2, c x k
  Matrix img_out_cache;   // F, k x n
  Matrix txt_out_cache;   // G, k x n
};

// Loss components: total = pairwise + gamma*quantization + beta*label
// + alpha*balance, with theta_ij = F_i . G_j (no 1/2, unlike stage 1).
struct Stage2Terms {
  double total = 0.0;
  double pairwise = 0.0;      // J1
  double quantization = 0.0;  // J2
  double label = 0.0;         // J3
  double balance = 0.0;       // J4
};

Stage2Terms stage2_loss(const Matrix& img_out, const Matrix& txt_out,
                        const Matrix& codes, const Matrix& labels,
                        const Matrix& img_classifier, const Matrix& txt_classifier,
                        const SimilarityOracle& sim, const Stage2Hyper& hyper);

// Gradient of stage2_loss with respect to the image-side batch outputs:
// sum_j (sigma(theta_ij) - s_ij) G_j + 2*gamma (F_i - B_i)
// + 2*beta (F_i - W1^T Y_i) + 2*alpha F*1, with sums over all n columns
// through the caches.
Matrix stage2_grad_img(const Matrix& batch_out, const std::vector<int>& batch_cols,
                       const Matrix& img_out_cache, const Matrix& txt_out_cache,
                       const Matrix& codes, const Matrix& labels,
                       const Matrix& img_classifier, const SimilarityOracle& sim,
                       const Stage2Hyper& hyper);

// Mirror image for the text side: pairwise sums run over the first index.
Matrix stage2_grad_txt(const Matrix& batch_out, const std::vector<int>& batch_cols,
                       const Matrix& img_out_cache, const Matrix& txt_out_cache,
                       const Matrix& codes, const Matrix& labels,
                       const Matrix& txt_classifier, const SimilarityOracle& sim,
                       const Stage2Hyper& hyper);

// Ridge minimizer of |F - W^T Y|_F^2 + |W^T|_F^2: W = (Y Y^T + I)^-1 Y F^T,
// solved by Cholesky. The label weight multiplies the whole term and
// cancels out of the closed form.
Matrix solve_label_map(const Matrix& labels, const Matrix& outputs);

struct Stage2Result {
  HashNets nets;
  std::vector<Stage2Terms> trace;  // one entry per epoch
};

// Alternating updates per epoch: image net by SGD, text net by SGD, then
// both label maps in closed form. Steps cap each layer's gradient norm at 1
// before applying hyper.lr: the pairwise sum dominates gradients early and
// fades once its logistic terms saturate, while the code-regression pull
// stays O(1) per column, so a raw fixed rate either diverges early or
// never transfers the codes. When warm_start is non-null, all layers except
// the final hash layer start from the stage-1 feature nets.
// Sub-seeds from hyper.seed: 0 image net, 1 text net, 2 epoch shuffling.
Stage2Result train_stage2(const Dataset& ds, const std::vector<int>& train_idx,
                          const Matrix& codes, const Stage2Hyper& hyper,
                          const ArchConfig& arch,
                          const FusionModel* warm_start = nullptr);

}  // namespace fdch
