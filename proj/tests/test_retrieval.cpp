#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "fdch/hash_index.hpp"
#include "fdch/rng.hpp"
#include "test_util.hpp"

using namespace fdch;

namespace {

// Sign-vector view of a code for the unpacked reference path.
std::vector<int> unpack(const HashCode& c) {
  std::vector<int> v(static_cast<std::size_t>(c.bits));
  for (int j = 0; j < c.bits; ++j)
    v[static_cast<std::size_t>(j)] =
        (c.words[static_cast<std::size_t>(j / 64)] >> (j % 64)) & 1 ? 1 : -1;
  return v;
}

int reference_hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++d;
  return d;
}

HashCode random_code(int bits, SplitMix64& rng) {
  Vector v(bits);
  for (int j = 0; j < bits; ++j) v(j) = rng.uniform01() < 0.5 ? -1.0 : 1.0;
  return pack_signs(v);
}

// Direct-definition average precision on unpacked codes: rank the database
// by (distance, position) with a stable sort, then accumulate precision at
// every relevant rank.
double brute_force_ap(const std::vector<std::vector<int>>& db_codes,
                      const std::vector<bool>& relevant,
                      const std::vector<int>& query) {
  const std::size_t n = db_codes.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<int> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = reference_hamming(db_codes[i], query);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  std::int64_t total_relevant = 0;
  for (bool r : relevant)
    if (r) ++total_relevant;
  if (total_relevant == 0) return -1.0;
  double ap = 0.0;
  std::int64_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (relevant[order[r]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return ap / static_cast<double>(total_relevant);
}

}  // namespace

TEST_CASE("pack_signs applies sign with +1 at zero") {
  Vector v(4);
  v << 0.7, -0.2, 0.0, -3.0;
  const HashCode c = pack_signs(v);
  const auto bits = unpack(c);
  CHECK(bits == std::vector<int>{1, -1, 1, -1});
}

TEST_CASE("encode_image and encode_text are deterministic and scale-invariant") {
  Mlp net = init_mlp({6, 4}, {Activation::identity}, 17);
  SplitMix64 rng(2);
  Vector v(6);
  for (int i = 0; i < 6; ++i) v(i) = rng.gaussian();
  const HashCode a = encode_image(net, v);
  const HashCode b = encode_image(net, v);
  CHECK(a.words == b.words);
  CHECK(a.bits == 4);

  // doubling the final-layer weights and biases never moves a sign
  Mlp scaled = net;
  scaled.layers.back().weights *= 2.0;
  scaled.layers.back().bias *= 2.0;
  CHECK(encode_image(scaled, v).words == a.words);

  // zero-bias identity net on the zero vector: all bits +1
  Mlp id;
  id.layers.push_back({Matrix::Identity(4, 4), Vector::Zero(4), Activation::identity});
  const HashCode z = encode_text(id, Vector::Zero(4));
  CHECK(unpack(z) == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("encoding a matrix equals encoding column by column") {
  const Mlp net = init_mlp({5, 8}, {Activation::identity}, 23);
  SplitMix64 rng(3);
  Matrix x(5, 9);
  for (Index c = 0; c < 9; ++c)
    for (Index r = 0; r < 5; ++r) x(r, c) = rng.gaussian();
  const auto codes = encode_matrix(net, x);
  REQUIRE(codes.size() == 9);
  for (Index j = 0; j < 9; ++j)
    CHECK(codes[static_cast<std::size_t>(j)].words ==
          encode_image(net, x.col(j)).words);
}

TEST_CASE("hamming satisfies the inner-product identity") {
  SUBCASE("hand cases at k=16") {
    SplitMix64 rng(4);
    const HashCode a = random_code(16, rng);
    CHECK(hamming(a, a) == 0);
    CHECK(inner_product(a, a) == 16);
    Vector flipped(16);
    const auto av = unpack(a);
    for (int j = 0; j < 16; ++j) flipped(j) = -av[static_cast<std::size_t>(j)];
    const HashCode na = pack_signs(flipped);
    CHECK(hamming(a, na) == 16);
    CHECK(inner_product(a, na) == -16);

    Vector three(16);
    for (int j = 0; j < 16; ++j) three(j) = av[static_cast<std::size_t>(j)];
    for (int j = 0; j < 3; ++j) three(j) = -three(j);
    const HashCode t = pack_signs(three);
    CHECK(hamming(a, t) == 3);
    CHECK(inner_product(a, t) == 10);
  }
  SUBCASE("exhaustive for k=8") {
    for (int x = 0; x < 256; ++x)
      for (int y = 0; y < 256; ++y) {
        Vector vx(8), vy(8);
        for (int j = 0; j < 8; ++j) {
          vx(j) = (x >> j) & 1 ? 1.0 : -1.0;
          vy(j) = (y >> j) & 1 ? 1.0 : -1.0;
        }
        const HashCode a = pack_signs(vx);
        const HashCode b = pack_signs(vy);
        const int d = hamming(a, b);
        CHECK(2 * d + inner_product(a, b) == 8);
        CHECK(d == reference_hamming(unpack(a), unpack(b)));
      }
  }
  SUBCASE("randomized for larger k with the unpacked reference") {
    SplitMix64 rng(5);
    for (int k : {16, 32, 64, 77}) {
      for (int trial = 0; trial < 300; ++trial) {
        const HashCode a = random_code(k, rng);
        const HashCode b = random_code(k, rng);
        CHECK(hamming(a, b) == reference_hamming(unpack(a), unpack(b)));
        CHECK(2 * hamming(a, b) + inner_product(a, b) == k);
      }
    }
  }
  SUBCASE("length mismatch is rejected") {
    SplitMix64 rng(6);
    CHECK_THROWS_AS(hamming(random_code(8, rng), random_code(16, rng)),
                    std::invalid_argument);
  }
}

TEST_CASE("rank orders by distance with position tie-break") {
  // db codes at distances (2, 0, 2) from the query
  Vector q(4);
  q << 1, 1, 1, 1;
  Vector d0(4), d1(4), d2(4);
  d0 << -1, -1, 1, 1;
  d1 << 1, 1, 1, 1;
  d2 << 1, 1, -1, -1;
  Matrix labels = Matrix::Ones(1, 3);
  const HashIndex index = build_index(
      4, {pack_signs(d0), pack_signs(d1), pack_signs(d2)}, labels, {"a", "b", "c"});
  const RankedResult r = rank(index, pack_signs(q));
  REQUIRE(r.entries.size() == 3);
  CHECK(r.entries[0] == std::pair<std::int64_t, int>{1, 0});
  CHECK(r.entries[1] == std::pair<std::int64_t, int>{0, 2});
  CHECK(r.entries[2] == std::pair<std::int64_t, int>{2, 2});
}

TEST_CASE("rank output is a permutation with non-decreasing distances") {
  SplitMix64 rng(7);
  std::vector<HashCode> codes;
  for (int i = 0; i < 50; ++i) codes.push_back(random_code(16, rng));
  const HashIndex index = build_index(16, codes, Matrix::Ones(1, 50),
                                      std::vector<std::string>(50, "x"));
  const RankedResult r = rank(index, random_code(16, rng));
  std::vector<bool> seen(50, false);
  int prev = -1;
  for (const auto& [pos, dist] : r.entries) {
    CHECK_FALSE(seen[static_cast<std::size_t>(pos)]);
    seen[static_cast<std::size_t>(pos)] = true;
    CHECK(dist >= prev);
    prev = dist;
  }
}

TEST_CASE("average precision hand case") {
  // ranked relevance [rel, irr, rel, irr] with R=2: AP = (1 + 2/3)/2
  Vector q(4);
  q << 1, 1, 1, 1;
  // distances 0,1,2,3 with relevance pattern via labels
  std::vector<Vector> cols(4, q);
  cols[1](0) = -1;
  cols[2](0) = -1;
  cols[2](1) = -1;
  cols[3](0) = -1;
  cols[3](1) = -1;
  cols[3](2) = -1;
  Matrix labels(2, 4);
  labels.col(0) << 1, 0;  // relevant
  labels.col(1) << 0, 1;
  labels.col(2) << 1, 0;  // relevant
  labels.col(3) << 0, 1;
  const HashIndex index =
      build_index(4, {pack_signs(cols[0]), pack_signs(cols[1]), pack_signs(cols[2]),
                      pack_signs(cols[3])},
                  labels, {"0", "1", "2", "3"});
  QueryItem item;
  item.code = pack_signs(q);
  Vector ql(2);
  ql << 1, 0;
  item.label_words = pack_label_bits(ql);
  const MapReport report = mean_average_precision(index, {item});
  CHECK(report.evaluated == 1);
  CHECK(report.map == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("average precision is 1 when all retrieved items are relevant") {
  SplitMix64 rng(8);
  std::vector<HashCode> codes;
  for (int i = 0; i < 10; ++i) codes.push_back(random_code(8, rng));
  const HashIndex index = build_index(8, codes, Matrix::Ones(1, 10),
                                      std::vector<std::string>(10, "x"));
  QueryItem item;
  item.code = random_code(8, rng);
  item.label_words = pack_label_bits(Vector::Ones(1));
  CHECK(mean_average_precision(index, {item}).map == 1.0);
}

TEST_CASE("mean_average_precision equals the brute-force oracle exactly") {
  SplitMix64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 30;
    const int k = 8;
    const int classes = 3;
    std::vector<HashCode> codes;
    Matrix labels = Matrix::Zero(classes, n);
    std::vector<std::vector<int>> raw;
    for (int i = 0; i < n; ++i) {
      codes.push_back(random_code(k, rng));
      raw.push_back(unpack(codes.back()));
      labels(static_cast<Index>(rng.below(classes)), i) = 1.0;
    }
    const HashIndex index =
        build_index(k, codes, labels, std::vector<std::string>(n, "x"));

    QueryItem item;
    item.code = random_code(k, rng);
    Vector ql = Vector::Zero(classes);
    ql(static_cast<Index>(rng.below(classes))) = 1.0;
    item.label_words = pack_label_bits(ql);

    std::vector<bool> relevant(n);
    for (int i = 0; i < n; ++i)
      relevant[static_cast<std::size_t>(i)] = ql.dot(labels.col(i)) > 0.0;
    const double oracle = brute_force_ap(raw, relevant, unpack(item.code));
    if (oracle < 0.0) {
      CHECK_THROWS_WITH_AS(mean_average_precision(index, {item}),
                           doctest::Contains("no evaluable queries"),
                           std::runtime_error);
    } else {
      CHECK(mean_average_precision(index, {item}).map == oracle);
    }
  }
}

TEST_CASE("mAP skips queries without relevant items and errors when all are") {
  SplitMix64 rng(10);
  Matrix labels(2, 4);
  labels << 1, 1, 1, 1, 0, 0, 0, 0;  // every db item in class 0
  std::vector<HashCode> codes;
  for (int i = 0; i < 4; ++i) codes.push_back(random_code(8, rng));
  const HashIndex index =
      build_index(8, codes, labels, std::vector<std::string>(4, "x"));

  Vector matchable(2), orphan(2);
  matchable << 1, 0;
  orphan << 0, 1;
  QueryItem good{random_code(8, rng), pack_label_bits(matchable)};
  QueryItem bad{random_code(8, rng), pack_label_bits(orphan)};
  const MapReport report = mean_average_precision(index, {good, bad});
  CHECK(report.evaluated == 1);
  CHECK(report.skipped == 1);
  CHECK_THROWS_WITH_AS(mean_average_precision(index, {bad}),
                       doctest::Contains("no evaluable queries"),
                       std::runtime_error);
}

TEST_CASE("precision-recall by radius: hand case and curve properties") {
  SUBCASE("same + opposite code at k=8") {
    Vector q = Vector::Ones(8);
    Matrix labels(2, 2);
    labels.col(0) << 1, 0;  // relevant (same code)
    labels.col(1) << 0, 1;  // irrelevant (opposite code)
    const HashIndex index = build_index(
        8, {pack_signs(q), pack_signs(Vector::Constant(8, -1.0))}, labels, {"s", "o"});
    QueryItem item;
    item.code = pack_signs(q);
    Vector ql(2);
    ql << 1, 0;
    item.label_words = pack_label_bits(ql);
    const auto curve = precision_recall_by_radius(index, {item});
    REQUIRE(curve.size() == 9);
    CHECK(curve[0].precision == 1.0);
    CHECK(curve[0].recall == 1.0);
    CHECK_FALSE(curve[0].zero_retrieval);
    CHECK(curve[8].precision == 0.5);
    CHECK(curve[8].recall == 1.0);
  }
  SUBCASE("recall is non-decreasing and reaches 1 at radius k") {
    SplitMix64 rng(11);
    const int n = 40, k = 16;
    std::vector<HashCode> codes;
    Matrix labels = Matrix::Zero(2, n);
    for (int i = 0; i < n; ++i) {
      codes.push_back(random_code(k, rng));
      labels(i % 2, i) = 1.0;
    }
    const HashIndex index =
        build_index(k, codes, labels, std::vector<std::string>(n, "x"));
    std::vector<QueryItem> queries;
    for (int i = 0; i < 5; ++i) {
      Vector ql = Vector::Zero(2);
      ql(i % 2) = 1.0;
      queries.push_back({random_code(k, rng), pack_label_bits(ql)});
    }
    const auto curve = precision_recall_by_radius(index, queries);
    REQUIRE(curve.size() == static_cast<std::size_t>(k) + 1);
    double prev = 0.0;
    for (const PrPoint& p : curve) {
      CHECK(p.recall >= prev);
      prev = p.recall;
    }
    CHECK(curve.back().recall == 1.0);
  }
  SUBCASE("empty retrieval at small radius is flagged with precision 1") {
    Vector q = Vector::Ones(8);
    const HashIndex index = build_index(
        8, {pack_signs(Vector::Constant(8, -1.0))}, Matrix::Ones(1, 1), {"o"});
    QueryItem item{pack_signs(q), pack_label_bits(Vector::Ones(1))};
    const auto curve = precision_recall_by_radius(index, {item});
    CHECK(curve[0].zero_retrieval);
    CHECK(curve[0].precision == 1.0);
    CHECK(curve[0].recall == 0.0);
    CHECK_FALSE(curve[8].zero_retrieval);
  }
}

TEST_CASE("index save/load round-trips and rejects malformed files") {
  const std::string dir = testutil::scratch_dir("index_io");
  SplitMix64 rng(12);
  std::vector<HashCode> codes;
  Matrix labels = Matrix::Zero(3, 7);
  std::vector<std::string> ids;
  for (int i = 0; i < 7; ++i) {
    codes.push_back(random_code(20, rng));
    labels(static_cast<Index>(rng.below(3)), i) = 1.0;
    ids.push_back("item-" + std::to_string(i));
  }
  const HashIndex index = build_index(20, codes, labels, ids, 2);
  save_index(index, dir + "/db.fdchx");
  const HashIndex loaded = load_index(dir + "/db.fdchx");
  CHECK(loaded.bits == index.bits);
  CHECK(loaded.num_classes == index.num_classes);
  CHECK(loaded.modality == index.modality);
  CHECK(loaded.code_words == index.code_words);
  CHECK(loaded.label_words == index.label_words);
  CHECK(loaded.ids == index.ids);

  const std::string bytes = testutil::read_file(dir + "/db.fdchx");
  {
    std::string garbled = bytes;
    garbled[2] = 'z';
    std::ofstream(dir + "/bad.fdchx", std::ios::binary) << garbled;
    CHECK_THROWS_WITH_AS(load_index(dir + "/bad.fdchx"),
                         doctest::Contains("not a code index file"),
                         std::runtime_error);
  }
  {
    std::ofstream(dir + "/short.fdchx", std::ios::binary)
        << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_WITH_AS(load_index(dir + "/short.fdchx"),
                         doctest::Contains("unexpected end of file"),
                         std::runtime_error);
  }
}
