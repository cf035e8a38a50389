#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace fdch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Paired multi-modal dataset. One column per instance: img is d_v x n,
// txt is d_t x n, labels is c x n multi-hot with entries in {0,1} and at
// least one nonzero per column. Immutable by convention after construction.
struct Dataset {
  Matrix img;
  Matrix txt;
  Matrix labels;
  std::vector<std::string> names;  // optional, empty or one per instance

  Index n() const { return img.cols(); }
  Index img_dim() const { return img.rows(); }
  Index txt_dim() const { return txt.rows(); }
  Index num_classes() const { return labels.rows(); }
};

// Throws std::invalid_argument naming the violated invariant.
void validate(const Dataset& ds);

// s_ij = 1 iff columns i and j of the label matrix share at least one label.
bool similar(const Matrix& labels, Index i, Index j);

// O(1) pairwise label-sharing test over a fixed label matrix; packs each
// label column into ceil(c/64) bit words once at construction.
class SimilarityOracle {
 public:
  explicit SimilarityOracle(const Matrix& labels);

  bool operator()(Index i, Index j) const {
    const std::uint64_t* a = words_.data() + static_cast<std::size_t>(i) * wpl_;
    const std::uint64_t* b = words_.data() + static_cast<std::size_t>(j) * wpl_;
    for (std::size_t w = 0; w < wpl_; ++w)
      if (a[w] & b[w]) return true;
    return false;
  }

  Index size() const { return n_; }

 private:
  Index n_ = 0;
  std::size_t wpl_ = 0;
  std::vector<std::uint64_t> words_;
};

// CSV layout: one row per instance, comma separated decimal values, no
// header. Feature values are written with 17 significant digits so a
// save/load cycle is bit exact; labels are 0/1 integers.
Dataset load_dataset(const std::string& img_path, const std::string& txt_path,
                     const std::string& labels_path);
void save_dataset(const Dataset& ds, const std::string& img_path,
                  const std::string& txt_path, const std::string& labels_path);

// Deterministic clustered data for desk-scale experiments. Draw order from
// SplitMix64(seed): image class centers (class-major, entry by entry, uniform
// in [-1,1)), text class centers, then per instance the Gaussian feature
// noise (image entries, then text entries). Instance i belongs to class
// i mod classes; labels are one-hot.
Dataset make_synthetic(int n, int d_img, int d_txt, int classes, double noise,
                       std::uint64_t seed);

// Disjoint query/database partition; train is sampled from the database.
struct Split {
  std::vector<int> train;
  std::vector<int> query;
  std::vector<int> db;
};

// Samples n_query indices without replacement (the rest become the
// database), then n_train database indices. Index lists are sorted
// ascending. Deterministic per seed.
Split split_dataset(const Dataset& ds, int n_query, int n_train,
                    std::uint64_t seed);

// Columns of m gathered by idx, in idx order.
Matrix gather_columns(const Matrix& m, const std::vector<int>& idx);

}  // namespace fdch
