#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fdch/dataset.hpp"
#include "fdch/mlp.hpp"

namespace fdch {

// One k-bit code packed into ceil(k/64) little-endian words. Bit j lives at
// (word[j/64] >> (j%64)) & 1; bit value 1 stands for +1, 0 for -1. Bits at
// positions >= k are always zero so XOR+popcount distances are exact.
struct HashCode {
  int bits = 0;
  std::vector<std::uint64_t> words;
};

// sign with sign(0) = +1: entry >= 0 packs as bit 1.
HashCode pack_signs(const Vector& v);

// Column j of a {-1,+1} (or real) matrix packed as a code.
HashCode pack_column(const Matrix& m, Index j);

// Out-of-sample encoding: forward through the modality network, then sign.
HashCode encode_image(const Mlp& img_net, const Vector& v);
HashCode encode_text(const Mlp& txt_net, const Vector& t);

// One code per column of x; computed column by column, so the result does
// not depend on any batch chunking.
std::vector<HashCode> encode_matrix(const Mlp& net, const Matrix& x);

int hamming(const HashCode& a, const HashCode& b);

// <a,b> over the +/-1 values; equals bits - 2*hamming(a,b).
int inner_product(const HashCode& a, const HashCode& b);

// Immutable code database with per-instance packed label bits.
struct HashIndex {
  int bits = 0;
  int num_classes = 0;
  std::uint8_t modality = 0;  // 0 unified, 1 image, 2 text
  std::vector<std::uint64_t> code_words;
  std::vector<std::uint64_t> label_words;
  std::vector<std::string> ids;

  std::int64_t size() const { return static_cast<std::int64_t>(ids.size()); }
  int words_per_code() const { return (bits + 63) / 64; }
  int words_per_label() const { return num_classes == 0 ? 1 : (num_classes + 63) / 64; }
  const std::uint64_t* code(std::int64_t i) const {
    return code_words.data() + i * words_per_code();
  }
  const std::uint64_t* label(std::int64_t i) const {
    return label_words.data() + i * words_per_label();
  }
};

HashIndex build_index(int bits, const std::vector<HashCode>& codes,
                      const Matrix& labels, std::vector<std::string> ids,
                      std::uint8_t modality = 0);

// Label column packed the same way as codes (bit r set iff class r active).
std::vector<std::uint64_t> pack_label_bits(const Vector& label_col);

// Whole database ordered by (Hamming distance asc, db position asc).
struct RankedResult {
  std::vector<std::pair<std::int64_t, int>> entries;  // (position, distance)
};

RankedResult rank(const HashIndex& index, const HashCode& query);

struct QueryItem {
  HashCode code;
  std::vector<std::uint64_t> label_words;
};

// mAP over the full ranking; relevance = shared label. Queries with no
// relevant database item are skipped and counted.
struct MapReport {
  double map = 0.0;
  std::int64_t evaluated = 0;
  std::int64_t skipped = 0;
};

MapReport mean_average_precision(const HashIndex& index,
                                 const std::vector<QueryItem>& queries);

// Micro-averaged hash-lookup precision/recall at every radius 0..k. When
// nothing is retrieved at a radius, precision is reported as 1.0 with the
// zero_retrieval flag set so curves keep k+1 points.
struct PrPoint {
  int radius = 0;
  double precision = 0.0;
  double recall = 0.0;
  bool zero_retrieval = false;
};

std::vector<PrPoint> precision_recall_by_radius(
    const HashIndex& index, const std::vector<QueryItem>& queries);

// -----------------------------------------------------------------------
// Code index file: magic "FDCHX", u32 version, u16 k, u64 n, u16 class
// count, u8 modality tag, packed codes (n * ceil(k/64) u64 LE), packed label
// bits (n * ceil(c/64) u64 LE), then ids as u32 length-prefixed byte
// strings.
// -----------------------------------------------------------------------
void save_index(const HashIndex& index, const std::string& path);
HashIndex load_index(const std::string& path);

}  // namespace fdch
