#include "fdch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fdch/rng.hpp"

namespace fdch {

void validate(const Dataset& ds) {
  const Index n = ds.img.cols();
  if (n < 1) throw std::invalid_argument("dataset is empty");
  if (ds.txt.cols() != n || ds.labels.cols() != n)
    throw std::invalid_argument("row count mismatch across modalities");
  if (!ds.names.empty() && static_cast<Index>(ds.names.size()) != n)
    throw std::invalid_argument("names list does not match instance count");
  if (!ds.img.allFinite() || !ds.txt.allFinite())
    throw std::invalid_argument("non-finite feature value");
  for (Index j = 0; j < n; ++j) {
    if ((ds.labels.col(j).array() != 0.0).count() == 0)
      throw std::invalid_argument("instance " + std::to_string(j + 1) +
                                  " has no label");
  }
  if (((ds.labels.array() != 0.0) && (ds.labels.array() != 1.0)).any())
    throw std::invalid_argument("label entries must be 0 or 1");
}

bool similar(const Matrix& labels, Index i, Index j) {
  if (i < 0 || j < 0 || i >= labels.cols() || j >= labels.cols())
    throw std::out_of_range("similarity index out of range");
  return labels.col(i).dot(labels.col(j)) > 0.0;
}

SimilarityOracle::SimilarityOracle(const Matrix& labels) {
  n_ = labels.cols();
  const Index c = labels.rows();
  wpl_ = static_cast<std::size_t>((c + 63) / 64);
  if (wpl_ == 0) wpl_ = 1;
  words_.assign(static_cast<std::size_t>(n_) * wpl_, 0);
  for (Index j = 0; j < n_; ++j)
    for (Index r = 0; r < c; ++r)
      if (labels(r, j) != 0.0)
        words_[static_cast<std::size_t>(j) * wpl_ + static_cast<std::size_t>(r / 64)] |=
            std::uint64_t{1} << (r % 64);
}

namespace {

// Reads a headerless CSV into rows of doubles; enforces a rectangular shape.
std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string tok = line.substr(pos, comma == std::string::npos
                                                   ? std::string::npos
                                                   : comma - pos);
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0')
        throw std::runtime_error(path + " row " + std::to_string(lineno) +
                                 ": cannot parse value '" + tok + "'");
      if (!std::isfinite(v))
        throw std::runtime_error(path + " row " + std::to_string(lineno) +
                                 ": non-finite value");
      row.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(path + " row " + std::to_string(lineno) +
                               ": has " + std::to_string(row.size()) +
                               " columns, expected " +
                               std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + " is empty");
  return rows;
}

// One instance per CSV row; feature matrices store one instance per column.
Matrix rows_to_columns(const std::vector<std::vector<double>>& rows) {
  Matrix m(static_cast<Index>(rows.front().size()),
           static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t d = 0; d < rows[i].size(); ++d)
      m(static_cast<Index>(d), static_cast<Index>(i)) = rows[i][d];
  return m;
}

void write_csv(const Matrix& m, const std::string& path, bool integers) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[40];
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index r = 0; r < m.rows(); ++r) {
      if (integers)
        std::snprintf(buf, sizeof buf, "%d", static_cast<int>(m(r, j)));
      else
        std::snprintf(buf, sizeof buf, "%.17g", m(r, j));
      if (r > 0) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

Dataset load_dataset(const std::string& img_path, const std::string& txt_path,
                     const std::string& labels_path) {
  const auto img_rows = read_csv(img_path);
  const auto txt_rows = read_csv(txt_path);
  const auto lab_rows = read_csv(labels_path);
  if (img_rows.size() != txt_rows.size() || img_rows.size() != lab_rows.size())
    throw std::runtime_error(
        "row count mismatch: " + img_path + " has " +
        std::to_string(img_rows.size()) + " rows, " + txt_path + " has " +
        std::to_string(txt_rows.size()) + ", " + labels_path + " has " +
        std::to_string(lab_rows.size()));

  Dataset ds;
  ds.img = rows_to_columns(img_rows);
  ds.txt = rows_to_columns(txt_rows);
  ds.labels = rows_to_columns(lab_rows);
  validate(ds);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& img_path,
                  const std::string& txt_path, const std::string& labels_path) {
  write_csv(ds.img, img_path, false);
  write_csv(ds.txt, txt_path, false);
  write_csv(ds.labels, labels_path, true);
}

Dataset make_synthetic(int n, int d_img, int d_txt, int classes, double noise,
                       std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("need at least 2 classes");
  if (n < classes) throw std::invalid_argument("need at least one instance per class");
  if (d_img < 1 || d_txt < 1) throw std::invalid_argument("feature dims must be positive");
  if (noise < 0.0) throw std::invalid_argument("noise must be non-negative");

  SplitMix64 rng(seed);
  Matrix img_centers(d_img, classes);
  for (int k = 0; k < classes; ++k)
    for (int d = 0; d < d_img; ++d) img_centers(d, k) = rng.uniform_sym();
  Matrix txt_centers(d_txt, classes);
  for (int k = 0; k < classes; ++k)
    for (int d = 0; d < d_txt; ++d) txt_centers(d, k) = rng.uniform_sym();

  Dataset ds;
  ds.img.resize(d_img, n);
  ds.txt.resize(d_txt, n);
  ds.labels = Matrix::Zero(classes, n);
  for (int i = 0; i < n; ++i) {
    const int k = i % classes;
    for (int d = 0; d < d_img; ++d)
      ds.img(d, i) = img_centers(d, k) + noise * rng.gaussian();
    for (int d = 0; d < d_txt; ++d)
      ds.txt(d, i) = txt_centers(d, k) + noise * rng.gaussian();
    ds.labels(k, i) = 1.0;
  }
  return ds;
}

Split split_dataset(const Dataset& ds, int n_query, int n_train,
                    std::uint64_t seed) {
  const int n = static_cast<int>(ds.n());
  if (n_query < 0 || n_train < 0)
    throw std::invalid_argument("split counts must be non-negative");
  if (n_query >= n) throw std::invalid_argument("empty database: n_query must be < n");
  if (n_train > n - n_query)
    throw std::invalid_argument("train count exceeds database size");

  SplitMix64 rng(seed);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  Split sp;
  sp.query.assign(perm.begin(), perm.begin() + n_query);
  sp.db.assign(perm.begin() + n_query, perm.end());
  std::sort(sp.query.begin(), sp.query.end());
  std::sort(sp.db.begin(), sp.db.end());

  std::vector<int> pool = sp.db;
  rng.shuffle(pool);
  sp.train.assign(pool.begin(), pool.begin() + n_train);
  std::sort(sp.train.begin(), sp.train.end());
  return sp;
}

Matrix gather_columns(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(m.rows(), static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.col(static_cast<Index>(i)) = m.col(idx[i]);
  return out;
}

}  // namespace fdch
