#include "fdch/hash_index.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

#include "fdch/binary_io.hpp"

namespace fdch {

HashCode pack_signs(const Vector& v) {
  HashCode code;
  code.bits = static_cast<int>(v.size());
  code.words.assign(static_cast<std::size_t>((code.bits + 63) / 64), 0);
  for (int j = 0; j < code.bits; ++j)
    if (v(j) >= 0.0) code.words[static_cast<std::size_t>(j / 64)] |= std::uint64_t{1} << (j % 64);
  return code;
}

HashCode pack_column(const Matrix& m, Index j) { return pack_signs(m.col(j)); }

HashCode encode_image(const Mlp& img_net, const Vector& v) {
  return pack_signs(forward(img_net, v).col(0));
}

HashCode encode_text(const Mlp& txt_net, const Vector& t) {
  return pack_signs(forward(txt_net, t).col(0));
}

std::vector<HashCode> encode_matrix(const Mlp& net, const Matrix& x) {
  std::vector<HashCode> codes;
  codes.reserve(static_cast<std::size_t>(x.cols()));
  for (Index j = 0; j < x.cols(); ++j)
    codes.push_back(pack_signs(forward(net, x.col(j)).col(0)));
  return codes;
}

int hamming(const HashCode& a, const HashCode& b) {
  if (a.bits != b.bits) throw std::invalid_argument("hamming: code length mismatch");
  int dist = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w)
    dist += std::popcount(a.words[w] ^ b.words[w]);
  return dist;
}

int inner_product(const HashCode& a, const HashCode& b) {
  return a.bits - 2 * hamming(a, b);
}

std::vector<std::uint64_t> pack_label_bits(const Vector& label_col) {
  const int c = static_cast<int>(label_col.size());
  std::vector<std::uint64_t> words(static_cast<std::size_t>(c == 0 ? 1 : (c + 63) / 64), 0);
  for (int r = 0; r < c; ++r)
    if (label_col(r) != 0.0) words[static_cast<std::size_t>(r / 64)] |= std::uint64_t{1} << (r % 64);
  return words;
}

HashIndex build_index(int bits, const std::vector<HashCode>& codes,
                      const Matrix& labels, std::vector<std::string> ids,
                      std::uint8_t modality) {
  if (bits < 1) throw std::invalid_argument("code length must be >= 1");
  const std::int64_t n = static_cast<std::int64_t>(codes.size());
  if (labels.cols() != n || static_cast<std::int64_t>(ids.size()) != n)
    throw std::invalid_argument("index: codes, labels and ids must have equal counts");

  HashIndex index;
  index.bits = bits;
  index.num_classes = static_cast<int>(labels.rows());
  index.modality = modality;
  index.ids = std::move(ids);
  const int wpc = index.words_per_code();
  const int wpl = index.words_per_label();
  index.code_words.assign(static_cast<std::size_t>(n) * wpc, 0);
  index.label_words.assign(static_cast<std::size_t>(n) * wpl, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    if (codes[static_cast<std::size_t>(i)].bits != bits)
      throw std::invalid_argument("index: code length mismatch at position " +
                                  std::to_string(i));
    for (int w = 0; w < wpc; ++w)
      index.code_words[static_cast<std::size_t>(i * wpc + w)] =
          codes[static_cast<std::size_t>(i)].words[static_cast<std::size_t>(w)];
    const auto lw = pack_label_bits(labels.col(i));
    for (int w = 0; w < wpl; ++w)
      index.label_words[static_cast<std::size_t>(i * wpl + w)] = lw[static_cast<std::size_t>(w)];
  }
  return index;
}

namespace {

int packed_distance(const HashIndex& index, std::int64_t i, const HashCode& q) {
  const std::uint64_t* c = index.code(i);
  int dist = 0;
  for (int w = 0; w < index.words_per_code(); ++w)
    dist += std::popcount(c[w] ^ q.words[static_cast<std::size_t>(w)]);
  return dist;
}

bool labels_overlap(const HashIndex& index, std::int64_t i,
                    const std::vector<std::uint64_t>& query_words) {
  const std::uint64_t* l = index.label(i);
  const int wpl = index.words_per_label();
  if (static_cast<int>(query_words.size()) != wpl)
    throw std::invalid_argument("query label width does not match index");
  for (int w = 0; w < wpl; ++w)
    if (l[w] & query_words[static_cast<std::size_t>(w)]) return true;
  return false;
}

}  // namespace

RankedResult rank(const HashIndex& index, const HashCode& query) {
  if (query.bits != index.bits)
    throw std::invalid_argument("rank: query code length mismatch");
  const std::int64_t n = index.size();
  // counting sort over distances; scanning positions in order makes ties
  // come out in ascending db position
  std::vector<int> dist(static_cast<std::size_t>(n));
  std::vector<std::int64_t> bucket_count(static_cast<std::size_t>(index.bits) + 1, 0);
  for (std::int64_t i = 0; i < n; ++i) {
    dist[static_cast<std::size_t>(i)] = packed_distance(index, i, query);
    ++bucket_count[static_cast<std::size_t>(dist[static_cast<std::size_t>(i)])];
  }
  std::vector<std::int64_t> offset(bucket_count.size(), 0);
  for (std::size_t d = 1; d < bucket_count.size(); ++d)
    offset[d] = offset[d - 1] + bucket_count[d - 1];

  RankedResult result;
  result.entries.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const int d = dist[static_cast<std::size_t>(i)];
    result.entries[static_cast<std::size_t>(offset[static_cast<std::size_t>(d)]++)] = {i, d};
  }
  return result;
}

MapReport mean_average_precision(const HashIndex& index,
                                 const std::vector<QueryItem>& queries) {
  MapReport report;
  double sum_ap = 0.0;
  for (const QueryItem& q : queries) {
    const RankedResult ranked = rank(index, q.code);
    std::int64_t total_relevant = 0;
    for (std::int64_t i = 0; i < index.size(); ++i)
      if (labels_overlap(index, i, q.label_words)) ++total_relevant;
    if (total_relevant == 0) {
      ++report.skipped;
      continue;
    }
    double ap = 0.0;
    std::int64_t hits = 0;
    for (std::size_t r = 0; r < ranked.entries.size(); ++r) {
      if (labels_overlap(index, ranked.entries[r].first, q.label_words)) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    sum_ap += ap / static_cast<double>(total_relevant);
    ++report.evaluated;
  }
  if (report.evaluated == 0) throw std::runtime_error("no evaluable queries");
  report.map = sum_ap / static_cast<double>(report.evaluated);
  return report;
}

std::vector<PrPoint> precision_recall_by_radius(
    const HashIndex& index, const std::vector<QueryItem>& queries) {
  const int k = index.bits;
  // per-radius histograms accumulated over all queries
  std::vector<std::int64_t> retrieved(static_cast<std::size_t>(k) + 1, 0);
  std::vector<std::int64_t> relevant_retrieved(static_cast<std::size_t>(k) + 1, 0);
  std::int64_t total_relevant = 0;
  for (const QueryItem& q : queries) {
    if (q.code.bits != k)
      throw std::invalid_argument("precision_recall: query code length mismatch");
    for (std::int64_t i = 0; i < index.size(); ++i) {
      const int d = packed_distance(index, i, q.code);
      ++retrieved[static_cast<std::size_t>(d)];
      if (labels_overlap(index, i, q.label_words)) {
        ++relevant_retrieved[static_cast<std::size_t>(d)];
        ++total_relevant;
      }
    }
  }
  if (total_relevant == 0) throw std::runtime_error("no evaluable queries");

  std::vector<PrPoint> curve(static_cast<std::size_t>(k) + 1);
  std::int64_t cum_ret = 0;
  std::int64_t cum_rel = 0;
  for (int r = 0; r <= k; ++r) {
    cum_ret += retrieved[static_cast<std::size_t>(r)];
    cum_rel += relevant_retrieved[static_cast<std::size_t>(r)];
    PrPoint& p = curve[static_cast<std::size_t>(r)];
    p.radius = r;
    p.zero_retrieval = (cum_ret == 0);
    p.precision = p.zero_retrieval
                      ? 1.0
                      : static_cast<double>(cum_rel) / static_cast<double>(cum_ret);
    p.recall = static_cast<double>(cum_rel) / static_cast<double>(total_relevant);
  }
  return curve;
}

// -----------------------------------------------------------------------
// Index file I/O
// -----------------------------------------------------------------------

namespace {
constexpr char kIndexMagic[] = "FDCHX";
constexpr std::uint32_t kIndexVersion = 1;
}  // namespace

void save_index(const HashIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  io::write_magic(out, kIndexMagic);
  io::write_u32(out, kIndexVersion);
  io::write_u16(out, static_cast<std::uint16_t>(index.bits));
  io::write_u64(out, static_cast<std::uint64_t>(index.size()));
  io::write_u16(out, static_cast<std::uint16_t>(index.num_classes));
  out.put(static_cast<char>(index.modality));
  for (std::uint64_t w : index.code_words) io::write_u64(out, w);
  for (std::uint64_t w : index.label_words) io::write_u64(out, w);
  for (const std::string& id : index.ids) {
    io::write_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

HashIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  io::expect_magic(in, kIndexMagic, "not a code index file: " + path);
  const std::uint32_t version = io::read_u32(in);
  if (version != kIndexVersion)
    throw std::runtime_error("unsupported code index version " +
                             std::to_string(version));
  HashIndex index;
  index.bits = io::read_u16(in);
  const std::uint64_t n = io::read_u64(in);
  index.num_classes = io::read_u16(in);
  const int modality = in.get();
  if (modality == EOF) throw std::runtime_error("unexpected end of file");
  index.modality = static_cast<std::uint8_t>(modality);
  if (index.bits < 1) throw std::runtime_error("code index has zero code length");

  index.code_words.resize(n * static_cast<std::uint64_t>(index.words_per_code()));
  for (std::uint64_t& w : index.code_words) w = io::read_u64(in);
  index.label_words.resize(n * static_cast<std::uint64_t>(index.words_per_label()));
  for (std::uint64_t& w : index.label_words) w = io::read_u64(in);
  index.ids.resize(n);
  for (std::string& id : index.ids) {
    const std::uint32_t len = io::read_u32(in);
    id.resize(len);
    in.read(id.data(), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len))
      throw std::runtime_error("unexpected end of file");
  }
  return index;
}

}  // namespace fdch
