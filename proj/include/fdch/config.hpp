#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fdch/stage1.hpp"
#include "fdch/stage2.hpp"

namespace fdch {

struct DatasetPaths {
  std::string images;
  std::string texts;
  std::string labels;
};

struct SyntheticSpec {
  int n = 400;
  int d_img = 16;
  int d_txt = 12;
  int classes = 2;
  double noise = 0.15;
  std::optional<std::uint64_t> seed;  // derived from the master seed if unset
};

struct SplitSpec {
  int n_query = 50;
  int n_train = 200;
  std::optional<std::uint64_t> seed;
};

// Full run description. One config file drives every command; flags override
// file keys. Sub-seeds left unset derive deterministically from the master
// seed (streams: 16 synthetic, 17 split, 18 stage 1, 19 stage 2).
struct RunConfig {
  std::uint64_t seed = 1;
  int bits = 16;
  std::string out_dir = "run";
  std::optional<DatasetPaths> dataset;
  std::optional<SyntheticSpec> synthetic;
  SplitSpec split;
  Stage1Hyper stage1;  // seed filled in by effective_* below
  Stage2Hyper stage2;
  ArchConfig arch;

  // unset in the file <=> derive from master
  std::optional<std::uint64_t> stage1_seed;
  std::optional<std::uint64_t> stage2_seed;
};

std::uint64_t effective_synthetic_seed(const RunConfig& cfg);
std::uint64_t effective_split_seed(const RunConfig& cfg);
Stage1Hyper effective_stage1(const RunConfig& cfg);
Stage2Hyper effective_stage2(const RunConfig& cfg);

// Strict parse: unknown keys anywhere are errors naming the key path.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);

// Canonical serialization of the effective config (sorted keys); the run
// manifest stores a hash of this.
std::string canonical_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace fdch
