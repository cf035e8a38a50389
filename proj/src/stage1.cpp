#include "fdch/stage1.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fdch/rng.hpp"

namespace fdch {

namespace {

// Effective per-column view for a batch evaluation: batch columns take the
// fresh values, everything else comes from the cache.
Matrix effective_outputs(const Matrix& batch_out,
                         const std::vector<int>& batch_cols,
                         const Matrix& output_cache) {
  Matrix eff = output_cache;
  for (std::size_t t = 0; t < batch_cols.size(); ++t)
    eff.col(batch_cols[t]) = batch_out.col(static_cast<Index>(t));
  return eff;
}

void check_stage1_args(const Matrix& batch_out,
                       const std::vector<int>& batch_cols, const Matrix& codes,
                       const Matrix& output_cache, const SimilarityOracle& sim,
                       const Stage1Hyper& hyper) {
  if (hyper.lambda <= 0.0) throw std::invalid_argument("lambda must be > 0");
  if (hyper.eta < 0.0) throw std::invalid_argument("eta must be >= 0");
  if (batch_out.cols() != static_cast<Index>(batch_cols.size()))
    throw std::invalid_argument("batch column list does not match batch width");
  if (codes.rows() != batch_out.rows() || output_cache.rows() != batch_out.rows())
    throw std::invalid_argument("code length mismatch between batch, codes and cache");
  if (codes.cols() != output_cache.cols() || codes.cols() != sim.size())
    throw std::invalid_argument("codes, cache and similarity oracle must cover all columns");
  for (int c : batch_cols)
    if (c < 0 || c >= static_cast<int>(codes.cols()))
      throw std::invalid_argument("batch column out of range");
}

}  // namespace

FuseResult fuse_forward(const FusionModel& model, const Matrix& img_batch,
                        const Matrix& txt_batch) {
  if (img_batch.cols() != txt_batch.cols())
    throw std::invalid_argument("fuse_forward: batches are not paired");
  FuseResult r;
  const Matrix img_out = forward(model.img_net, img_batch, &r.img_tape);
  const Matrix txt_out = forward(model.txt_net, txt_batch, &r.txt_tape);
  if (img_out.rows() != txt_out.rows())
    throw std::invalid_argument("fuse_forward: feature net output dims differ");
  r.combined = (img_out + txt_out).array().tanh().matrix();
  r.out = forward(model.fusion_net, r.combined, &r.fusion_tape);
  return r;
}

double stage1_loss(const Matrix& batch_out, const std::vector<int>& batch_cols,
                   const Matrix& codes, const Matrix& output_cache,
                   const SimilarityOracle& sim, const Stage1Hyper& hyper) {
  check_stage1_args(batch_out, batch_cols, codes, output_cache, sim, hyper);
  const Matrix eff = effective_outputs(batch_out, batch_cols, output_cache);
  const Index n = eff.cols();

  double loss = 0.0;
  for (std::size_t t = 0; t < batch_cols.size(); ++t) {
    const int i = batch_cols[t];
    for (Index j = 0; j < n; ++j) {
      const double phi = 0.5 * batch_out.col(static_cast<Index>(t)).dot(eff.col(j));
      if (!std::isfinite(phi))
        throw std::runtime_error("non-finite pairwise term for pair (" +
                                 std::to_string(i) + ", " + std::to_string(j) + ")");
      const double s = sim(i, j) ? 1.0 : 0.0;
      loss += log1p_exp(phi) - s * phi;
    }
    loss += hyper.lambda *
            (codes.col(i) - batch_out.col(static_cast<Index>(t))).squaredNorm();
  }
  loss += hyper.eta * eff.rowwise().sum().squaredNorm();
  return loss;
}

Matrix stage1_output_grad(const Matrix& batch_out,
                          const std::vector<int>& batch_cols,
                          const Matrix& codes, const Matrix& output_cache,
                          const SimilarityOracle& sim,
                          const Stage1Hyper& hyper) {
  check_stage1_args(batch_out, batch_cols, codes, output_cache, sim, hyper);
  const Matrix eff = effective_outputs(batch_out, batch_cols, output_cache);
  const Index n = eff.cols();
  const Vector balance = eff.rowwise().sum();

  // dL/dH_i = 1/2 sum_j (sigma(phi_ij) - s_ij) H_j
  //         + 1/2 sum_j (sigma(phi_ji) - s_ji) H_j
  //         + 2*lambda (H_i - B_i) + 2*eta H*1.
  // phi and s are symmetric, so the two pairwise sums coincide.
  Matrix grad(batch_out.rows(), batch_out.cols());
  for (std::size_t t = 0; t < batch_cols.size(); ++t) {
    const int i = batch_cols[t];
    Vector g = Vector::Zero(batch_out.rows());
    for (Index j = 0; j < n; ++j) {
      const double phi = 0.5 * batch_out.col(static_cast<Index>(t)).dot(eff.col(j));
      if (!std::isfinite(phi))
        throw std::runtime_error("non-finite pairwise term for pair (" +
                                 std::to_string(i) + ", " + std::to_string(j) + ")");
      const double s = sim(i, j) ? 1.0 : 0.0;
      g += (sigmoid(phi) - s) * eff.col(j);
    }
    g += 2.0 * hyper.lambda *
         (batch_out.col(static_cast<Index>(t)) - codes.col(i));
    g += 2.0 * hyper.eta * balance;
    grad.col(static_cast<Index>(t)) = g;
  }
  return grad;
}

Matrix update_codes(const Matrix& output_cache) {
  return output_cache.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
}

namespace {

std::vector<Activation> feature_acts(std::size_t depth) {
  std::vector<Activation> acts(depth, Activation::relu);
  acts.back() = Activation::identity;
  return acts;
}

std::vector<int> feature_dims(int in_dim, const std::vector<int>& hidden, int out_dim) {
  std::vector<int> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out_dim);
  return dims;
}

Matrix full_outputs(const FusionModel& model, const Matrix& img, const Matrix& txt) {
  const Matrix img_out = forward(model.img_net, img);
  const Matrix txt_out = forward(model.txt_net, txt);
  const Matrix combined = (img_out + txt_out).array().tanh().matrix();
  return forward(model.fusion_net, combined);
}

}  // namespace

Stage1Result train_stage1(const Dataset& ds, const std::vector<int>& train_idx,
                          const Stage1Hyper& hyper, const ArchConfig& arch) {
  if (train_idx.empty()) throw std::invalid_argument("empty training set");
  if (hyper.bits < 1) throw std::invalid_argument("code length must be >= 1");
  if (hyper.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  const int n = static_cast<int>(train_idx.size());

  const Matrix img = gather_columns(ds.img, train_idx);
  const Matrix txt = gather_columns(ds.txt, train_idx);
  const Matrix labels = gather_columns(ds.labels, train_idx);
  const SimilarityOracle sim(labels);

  Stage1Result result;
  FusionModel& model = result.model;
  const auto img_dims = feature_dims(static_cast<int>(ds.img_dim()),
                                     arch.img_hidden, arch.embed_dim);
  const auto txt_dims = feature_dims(static_cast<int>(ds.txt_dim()),
                                     arch.txt_hidden, arch.embed_dim);
  const auto fus_dims = feature_dims(arch.embed_dim, arch.fusion_hidden, hyper.bits);
  model.img_net = init_mlp(img_dims, feature_acts(img_dims.size() - 1),
                           derive_seed(hyper.seed, 0));
  model.txt_net = init_mlp(txt_dims, feature_acts(txt_dims.size() - 1),
                           derive_seed(hyper.seed, 1));
  model.fusion_net = init_mlp(fus_dims, feature_acts(fus_dims.size() - 1),
                              derive_seed(hyper.seed, 2));

  model.output_cache = full_outputs(model, img, txt);
  model.codes = update_codes(model.output_cache);

  SplitMix64 shuffle_rng(derive_seed(hyper.seed, 3));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> all_cols = order;

  // The pairwise and balance sums make output gradients grow linearly with
  // n; applying the rate per training column keeps steps size-invariant and
  // the epoch objective descending smoothly.
  const double step = hyper.lr / static_cast<double>(n);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int start = 0; start < n; start += hyper.batch_size) {
      const int stop = std::min(start + hyper.batch_size, n);
      const std::vector<int> batch_cols(order.begin() + start, order.begin() + stop);
      const Matrix img_b = gather_columns(img, batch_cols);
      const Matrix txt_b = gather_columns(txt, batch_cols);

      FuseResult fused = fuse_forward(model, img_b, txt_b);
      const Matrix d_out = stage1_output_grad(fused.out, batch_cols, model.codes,
                                              model.output_cache, sim, hyper);
      const Grads fusion_grads = backward(model.fusion_net, fused.fusion_tape, d_out);
      // chain through the tanh combiner into both feature nets
      const Matrix d_combined =
          fusion_grads.input.cwiseProduct((1.0 - fused.combined.array().square()).matrix());
      const Grads img_grads = backward(model.img_net, fused.img_tape, d_combined);
      const Grads txt_grads = backward(model.txt_net, fused.txt_tape, d_combined);
      sgd_step(model.fusion_net, fusion_grads, step);
      sgd_step(model.img_net, img_grads, step);
      sgd_step(model.txt_net, txt_grads, step);

      for (std::size_t t = 0; t < batch_cols.size(); ++t)
        model.output_cache.col(batch_cols[t]) = fused.out.col(static_cast<Index>(t));
    }
    model.output_cache = full_outputs(model, img, txt);
    model.codes = update_codes(model.output_cache);
    result.objective_trace.push_back(stage1_loss(
        model.output_cache, all_cols, model.codes, model.output_cache, sim, hyper));
  }
  return result;
}

}  // namespace fdch
