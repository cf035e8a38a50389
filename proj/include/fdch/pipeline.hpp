#pragma once

#include <string>
#include <vector>

#include "fdch/config.hpp"
#include "fdch/dataset.hpp"
#include "fdch/hash_index.hpp"

namespace fdch {

// Fixed artifact names under the run directory.
namespace artifact {
inline constexpr const char* img_csv = "img.csv";
inline constexpr const char* txt_csv = "txt.csv";
inline constexpr const char* labels_csv = "labels.csv";
inline constexpr const char* synth_manifest = "synth_manifest.json";
inline constexpr const char* fusion_checkpoint = "fusion.fdchm";
inline constexpr const char* hash_checkpoint = "hash_nets.fdchm";
inline constexpr const char* codes_index = "codes.fdchx";
inline constexpr const char* stage1_trace = "stage1_trace.csv";
inline constexpr const char* stage2_trace = "stage2_trace.csv";
inline constexpr const char* run_manifest = "manifest.json";
inline constexpr const char* db_img_index = "db_img.fdchx";
inline constexpr const char* db_txt_index = "db_txt.fdchx";
inline constexpr const char* pr_i2t = "pr_i2t.csv";
inline constexpr const char* pr_t2i = "pr_t2i.csv";
inline constexpr const char* map_summary = "map_summary.csv";
}  // namespace artifact

std::string artifact_path(const RunConfig& cfg, const char* name);

// Dataset named by the config: CSV files when given, otherwise the
// synthetic generator.
Dataset resolve_dataset(const RunConfig& cfg);

// Writes img/txt/labels CSVs plus a manifest with every generation
// parameter into the run directory.
void cmd_synth(const RunConfig& cfg);

// Runs stage 1 then stage 2 on the training split; writes the fusion and
// hash-net checkpoints, the unified-code index file and both loss traces.
void cmd_train(const RunConfig& cfg);

// Encodes the database split through both trained hash networks and writes
// one index per modality (text index serves image queries and vice versa).
// checkpoint may be empty to use the run directory default.
void cmd_encode(const RunConfig& cfg, const std::string& checkpoint = "");

struct EvalSummary {
  MapReport i2t;
  MapReport t2i;
};

// Encodes the query split, evaluates both retrieval directions against the
// given indexes (run-directory defaults when empty) and writes the mAP
// summary and per-radius precision/recall CSVs.
EvalSummary cmd_eval(const RunConfig& cfg, const std::string& img_index_path = "",
                     const std::string& txt_index_path = "");

}  // namespace fdch
