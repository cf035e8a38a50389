#include "fdch/stage2.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fdch/rng.hpp"
#include "sgd_clip.hpp"

namespace fdch {

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::fdch_i: return "fdch-i";
    case Ablation::fdch_ii: return "fdch-ii";
  }
  return "?";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "fdch-i" || s == "fdch_i") return Ablation::fdch_i;
  if (s == "fdch-ii" || s == "fdch_ii") return Ablation::fdch_ii;
  throw std::invalid_argument("unknown ablation '" + s + "'");
}

namespace {

void check_hyper(const Stage2Hyper& hyper) {
  if (hyper.gamma < 0.0 || hyper.beta < 0.0 || hyper.alpha < 0.0)
    throw std::invalid_argument("stage-2 weights must be >= 0");
}

double effective_beta(const Stage2Hyper& hyper) {
  return hyper.ablation == Ablation::fdch_i ? 0.0 : hyper.beta;
}

bool pairwise_enabled(const Stage2Hyper& hyper) {
  return hyper.ablation != Ablation::fdch_ii;
}

Matrix effective_outputs(const Matrix& batch_out,
                         const std::vector<int>& batch_cols, const Matrix& cache) {
  Matrix eff = cache;
  for (std::size_t t = 0; t < batch_cols.size(); ++t)
    eff.col(batch_cols[t]) = batch_out.col(static_cast<Index>(t));
  return eff;
}

}  // namespace

Stage2Terms stage2_loss(const Matrix& img_out, const Matrix& txt_out,
                        const Matrix& codes, const Matrix& labels,
                        const Matrix& img_classifier, const Matrix& txt_classifier,
                        const SimilarityOracle& sim, const Stage2Hyper& hyper) {
  check_hyper(hyper);
  const Index n = img_out.cols();
  if (txt_out.cols() != n || codes.cols() != n || labels.cols() != n ||
      sim.size() != n)
    throw std::invalid_argument("stage2_loss: column counts differ");

  Stage2Terms terms;
  if (pairwise_enabled(hyper)) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        const double theta = img_out.col(i).dot(txt_out.col(j));
        if (!std::isfinite(theta))
          throw std::runtime_error("non-finite pairwise term for pair (" +
                                   std::to_string(i) + ", " + std::to_string(j) + ")");
        const double s = sim(i, j) ? 1.0 : 0.0;
        terms.pairwise += log1p_exp(theta) - s * theta;
      }
    }
  }
  terms.quantization =
      (codes - img_out).squaredNorm() + (codes - txt_out).squaredNorm();
  if (hyper.ablation != Ablation::fdch_i) {
    terms.label = (img_out - img_classifier.transpose() * labels).squaredNorm() +
                  (txt_out - txt_classifier.transpose() * labels).squaredNorm() +
                  img_classifier.squaredNorm() + txt_classifier.squaredNorm();
  }
  terms.balance = img_out.rowwise().sum().squaredNorm() +
                  txt_out.rowwise().sum().squaredNorm();
  terms.total = terms.pairwise + hyper.gamma * terms.quantization +
                effective_beta(hyper) * terms.label + hyper.alpha * terms.balance;
  return terms;
}

Matrix stage2_grad_img(const Matrix& batch_out, const std::vector<int>& batch_cols,
                       const Matrix& img_out_cache, const Matrix& txt_out_cache,
                       const Matrix& codes, const Matrix& labels,
                       const Matrix& img_classifier, const SimilarityOracle& sim,
                       const Stage2Hyper& hyper) {
  check_hyper(hyper);
  if (batch_out.cols() != static_cast<Index>(batch_cols.size()))
    throw std::invalid_argument("batch column list does not match batch width");
  const Index n = txt_out_cache.cols();
  const Matrix eff = effective_outputs(batch_out, batch_cols, img_out_cache);
  const Vector balance = eff.rowwise().sum();
  const Matrix label_targets = img_classifier.transpose() * labels;  // k x n
  const double beta = effective_beta(hyper);

  // dJ/dF_i = sum_j (sigma(theta_ij) - s_ij) G_j + 2*gamma (F_i - B_i)
  //         + 2*beta (F_i - W1^T Y_i) + 2*alpha F*1
  Matrix grad(batch_out.rows(), batch_out.cols());
  for (std::size_t t = 0; t < batch_cols.size(); ++t) {
    const int i = batch_cols[t];
    Vector g = Vector::Zero(batch_out.rows());
    if (pairwise_enabled(hyper)) {
      for (Index j = 0; j < n; ++j) {
        const double theta = batch_out.col(static_cast<Index>(t)).dot(txt_out_cache.col(j));
        if (!std::isfinite(theta))
          throw std::runtime_error("non-finite pairwise term for pair (" +
                                   std::to_string(i) + ", " + std::to_string(j) + ")");
        const double s = sim(i, j) ? 1.0 : 0.0;
        g += (sigmoid(theta) - s) * txt_out_cache.col(j);
      }
    }
    g += 2.0 * hyper.gamma * (batch_out.col(static_cast<Index>(t)) - codes.col(i));
    g += 2.0 * beta * (batch_out.col(static_cast<Index>(t)) - label_targets.col(i));
    g += 2.0 * hyper.alpha * balance;
    grad.col(static_cast<Index>(t)) = g;
  }
  return grad;
}

Matrix stage2_grad_txt(const Matrix& batch_out, const std::vector<int>& batch_cols,
                       const Matrix& img_out_cache, const Matrix& txt_out_cache,
                       const Matrix& codes, const Matrix& labels,
                       const Matrix& txt_classifier, const SimilarityOracle& sim,
                       const Stage2Hyper& hyper) {
  check_hyper(hyper);
  if (batch_out.cols() != static_cast<Index>(batch_cols.size()))
    throw std::invalid_argument("batch column list does not match batch width");
  const Index n = img_out_cache.cols();
  const Matrix eff = effective_outputs(batch_out, batch_cols, txt_out_cache);
  const Vector balance = eff.rowwise().sum();
  const Matrix label_targets = txt_classifier.transpose() * labels;
  const double beta = effective_beta(hyper);

  // dJ/dG_j = sum_i (sigma(theta_ij) - s_ij) F_i + 2*gamma (G_j - B_j)
  //         + 2*beta (G_j - W2^T Y_j) + 2*alpha G*1
  Matrix grad(batch_out.rows(), batch_out.cols());
  for (std::size_t t = 0; t < batch_cols.size(); ++t) {
    const int j = batch_cols[t];
    Vector g = Vector::Zero(batch_out.rows());
    if (pairwise_enabled(hyper)) {
      for (Index i = 0; i < n; ++i) {
        const double theta = img_out_cache.col(i).dot(batch_out.col(static_cast<Index>(t)));
        if (!std::isfinite(theta))
          throw std::runtime_error("non-finite pairwise term for pair (" +
                                   std::to_string(i) + ", " + std::to_string(j) + ")");
        const double s = sim(i, j) ? 1.0 : 0.0;
        g += (sigmoid(theta) - s) * img_out_cache.col(i);
      }
    }
    g += 2.0 * hyper.gamma * (batch_out.col(static_cast<Index>(t)) - codes.col(j));
    g += 2.0 * beta * (batch_out.col(static_cast<Index>(t)) - label_targets.col(j));
    g += 2.0 * hyper.alpha * balance;
    grad.col(static_cast<Index>(t)) = g;
  }
  return grad;
}

Matrix solve_label_map(const Matrix& labels, const Matrix& outputs) {
  if (labels.cols() != outputs.cols())
    throw std::invalid_argument("solve_label_map: column counts differ");
  const Index c = labels.rows();
  const Matrix gram =
      labels * labels.transpose() + Matrix::Identity(c, c);  // SPD by construction
  return gram.llt().solve(labels * outputs.transpose());
}

namespace {

std::vector<Activation> hash_acts(std::size_t depth) {
  std::vector<Activation> acts(depth, Activation::relu);
  acts.back() = Activation::identity;
  return acts;
}

std::vector<int> hash_dims(int in_dim, const std::vector<int>& hidden, int k) {
  std::vector<int> dims;
  dims.push_back(in_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(k);
  return dims;
}

// All layers except the freshly initialized hash layer come from the
// stage-1 feature net.
void copy_shared_layers(Mlp& net, const Mlp& source) {
  if (net.layers.size() != source.layers.size())
    throw std::invalid_argument("warm start: layer counts differ");
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    if (net.layers[l].weights.rows() != source.layers[l].weights.rows() ||
        net.layers[l].weights.cols() != source.layers[l].weights.cols())
      throw std::invalid_argument("warm start: layer shapes differ");
    net.layers[l] = source.layers[l];
  }
}

}  // namespace

Stage2Result train_stage2(const Dataset& ds, const std::vector<int>& train_idx,
                          const Matrix& codes, const Stage2Hyper& hyper,
                          const ArchConfig& arch, const FusionModel* warm_start) {
  check_hyper(hyper);
  if (train_idx.empty()) throw std::invalid_argument("empty training set");
  if (hyper.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  const int n = static_cast<int>(train_idx.size());
  if (codes.cols() != n)
    throw std::invalid_argument("codes do not cover the training set");
  const int k = static_cast<int>(codes.rows());

  const Matrix img = gather_columns(ds.img, train_idx);
  const Matrix txt = gather_columns(ds.txt, train_idx);
  const Matrix labels = gather_columns(ds.labels, train_idx);
  const SimilarityOracle sim(labels);

  Stage2Result result;
  HashNets& nets = result.nets;
  const auto img_dims = hash_dims(static_cast<int>(ds.img_dim()), arch.img_hidden, k);
  const auto txt_dims = hash_dims(static_cast<int>(ds.txt_dim()), arch.txt_hidden, k);
  nets.img_net = init_mlp(img_dims, hash_acts(img_dims.size() - 1),
                          derive_seed(hyper.seed, 0));
  nets.txt_net = init_mlp(txt_dims, hash_acts(txt_dims.size() - 1),
                          derive_seed(hyper.seed, 1));
  if (warm_start) {
    copy_shared_layers(nets.img_net, warm_start->img_net);
    copy_shared_layers(nets.txt_net, warm_start->txt_net);
  }
  nets.img_classifier = Matrix::Zero(ds.num_classes(), k);
  nets.txt_classifier = Matrix::Zero(ds.num_classes(), k);
  nets.img_out_cache = forward(nets.img_net, img);
  nets.txt_out_cache = forward(nets.txt_net, txt);

  SplitMix64 shuffle_rng(derive_seed(hyper.seed, 2));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  const bool solve_maps = effective_beta(hyper) > 0.0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    // image network
    shuffle_rng.shuffle(order);
    for (int start = 0; start < n; start += hyper.batch_size) {
      const int stop = std::min(start + hyper.batch_size, n);
      const std::vector<int> batch_cols(order.begin() + start, order.begin() + stop);
      ForwardTape tape;
      const Matrix out = forward(nets.img_net, gather_columns(img, batch_cols), &tape);
      const Matrix d_out =
          stage2_grad_img(out, batch_cols, nets.img_out_cache, nets.txt_out_cache,
                          codes, labels, nets.img_classifier, sim, hyper);
      const Grads grads = backward(nets.img_net, tape, d_out);
      detail::clipped_sgd(nets.img_net, grads, hyper.lr);
      for (std::size_t t = 0; t < batch_cols.size(); ++t)
        nets.img_out_cache.col(batch_cols[t]) = out.col(static_cast<Index>(t));
    }
    nets.img_out_cache = forward(nets.img_net, img);

    // text network
    shuffle_rng.shuffle(order);
    for (int start = 0; start < n; start += hyper.batch_size) {
      const int stop = std::min(start + hyper.batch_size, n);
      const std::vector<int> batch_cols(order.begin() + start, order.begin() + stop);
      ForwardTape tape;
      const Matrix out = forward(nets.txt_net, gather_columns(txt, batch_cols), &tape);
      const Matrix d_out =
          stage2_grad_txt(out, batch_cols, nets.img_out_cache, nets.txt_out_cache,
                          codes, labels, nets.txt_classifier, sim, hyper);
      const Grads grads = backward(nets.txt_net, tape, d_out);
      detail::clipped_sgd(nets.txt_net, grads, hyper.lr);
      for (std::size_t t = 0; t < batch_cols.size(); ++t)
        nets.txt_out_cache.col(batch_cols[t]) = out.col(static_cast<Index>(t));
    }
    nets.txt_out_cache = forward(nets.txt_net, txt);

    // closed-form label maps
    if (solve_maps) {
      nets.img_classifier = solve_label_map(labels, nets.img_out_cache);
      nets.txt_classifier = solve_label_map(labels, nets.txt_out_cache);
    }

    result.trace.push_back(stage2_loss(nets.img_out_cache, nets.txt_out_cache,
                                       codes, labels, nets.img_classifier,
                                       nets.txt_classifier, sim, hyper));
  }
  return result;
}

}  // namespace fdch
