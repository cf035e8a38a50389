#include "fdch/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fdch/rng.hpp"

namespace fdch {

using nlohmann::json;

namespace {

// fixed sub-seed streams off the master seed
constexpr std::uint64_t kSynthStream = 16;
constexpr std::uint64_t kSplitStream = 17;
constexpr std::uint64_t kStage1Stream = 18;
constexpr std::uint64_t kStage2Stream = 19;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& scope) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key))
      throw std::runtime_error("unknown config key: " +
                               (scope.empty() ? key : scope + "." + key));
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_seed_field(const json& obj, const char* key,
                     std::optional<std::uint64_t>& out) {
  if (obj.contains(key)) out = obj.at(key).get<std::uint64_t>();
}

}  // namespace

std::uint64_t effective_synthetic_seed(const RunConfig& cfg) {
  if (cfg.synthetic && cfg.synthetic->seed) return *cfg.synthetic->seed;
  return derive_seed(cfg.seed, kSynthStream);
}

std::uint64_t effective_split_seed(const RunConfig& cfg) {
  if (cfg.split.seed) return *cfg.split.seed;
  return derive_seed(cfg.seed, kSplitStream);
}

Stage1Hyper effective_stage1(const RunConfig& cfg) {
  Stage1Hyper h = cfg.stage1;
  h.bits = cfg.bits;
  h.seed = cfg.stage1_seed ? *cfg.stage1_seed : derive_seed(cfg.seed, kStage1Stream);
  return h;
}

Stage2Hyper effective_stage2(const RunConfig& cfg) {
  Stage2Hyper h = cfg.stage2;
  h.seed = cfg.stage2_seed ? *cfg.stage2_seed : derive_seed(cfg.seed, kStage2Stream);
  return h;
}

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::runtime_error("config root must be an object");
  reject_unknown_keys(root,
                      {"seed", "bits", "out_dir", "dataset", "synthetic", "split",
                       "stage1", "stage2", "arch"},
                      "");

  RunConfig cfg;
  read_field(root, "seed", cfg.seed);
  read_field(root, "bits", cfg.bits);
  read_field(root, "out_dir", cfg.out_dir);
  if (cfg.bits < 1) throw std::runtime_error("bits must be >= 1");

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    reject_unknown_keys(d, {"images", "texts", "labels"}, "dataset");
    DatasetPaths paths;
    read_field(d, "images", paths.images);
    read_field(d, "texts", paths.texts);
    read_field(d, "labels", paths.labels);
    if (paths.images.empty() || paths.texts.empty() || paths.labels.empty())
      throw std::runtime_error("dataset requires images, texts and labels paths");
    cfg.dataset = paths;
  }
  if (root.contains("synthetic")) {
    const json& s = root.at("synthetic");
    reject_unknown_keys(s, {"n", "d_img", "d_txt", "classes", "noise", "seed"},
                        "synthetic");
    SyntheticSpec spec;
    read_field(s, "n", spec.n);
    read_field(s, "d_img", spec.d_img);
    read_field(s, "d_txt", spec.d_txt);
    read_field(s, "classes", spec.classes);
    read_field(s, "noise", spec.noise);
    read_seed_field(s, "seed", spec.seed);
    cfg.synthetic = spec;
  }
  if (root.contains("split")) {
    const json& s = root.at("split");
    reject_unknown_keys(s, {"n_query", "n_train", "seed"}, "split");
    read_field(s, "n_query", cfg.split.n_query);
    read_field(s, "n_train", cfg.split.n_train);
    read_seed_field(s, "seed", cfg.split.seed);
  }
  if (root.contains("stage1")) {
    const json& s = root.at("stage1");
    reject_unknown_keys(s, {"lambda", "eta", "lr", "epochs", "batch_size", "seed"},
                        "stage1");
    read_field(s, "lambda", cfg.stage1.lambda);
    read_field(s, "eta", cfg.stage1.eta);
    read_field(s, "lr", cfg.stage1.lr);
    read_field(s, "epochs", cfg.stage1.epochs);
    read_field(s, "batch_size", cfg.stage1.batch_size);
    read_seed_field(s, "seed", cfg.stage1_seed);
  }
  if (root.contains("stage2")) {
    const json& s = root.at("stage2");
    reject_unknown_keys(
        s, {"gamma", "beta", "alpha", "lr", "epochs", "batch_size", "ablation", "seed"},
        "stage2");
    read_field(s, "gamma", cfg.stage2.gamma);
    read_field(s, "beta", cfg.stage2.beta);
    read_field(s, "alpha", cfg.stage2.alpha);
    read_field(s, "lr", cfg.stage2.lr);
    read_field(s, "epochs", cfg.stage2.epochs);
    read_field(s, "batch_size", cfg.stage2.batch_size);
    if (s.contains("ablation"))
      cfg.stage2.ablation = ablation_from_string(s.at("ablation").get<std::string>());
    read_seed_field(s, "seed", cfg.stage2_seed);
  }
  if (root.contains("arch")) {
    const json& a = root.at("arch");
    reject_unknown_keys(
        a, {"img_hidden", "txt_hidden", "embed_dim", "fusion_hidden", "warm_start"},
        "arch");
    read_field(a, "img_hidden", cfg.arch.img_hidden);
    read_field(a, "txt_hidden", cfg.arch.txt_hidden);
    read_field(a, "embed_dim", cfg.arch.embed_dim);
    read_field(a, "fusion_hidden", cfg.arch.fusion_hidden);
    read_field(a, "warm_start", cfg.arch.warm_start);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string canonical_config(const RunConfig& cfg) {
  json root;
  root["seed"] = cfg.seed;
  root["bits"] = cfg.bits;
  root["out_dir"] = cfg.out_dir;
  if (cfg.dataset) {
    root["dataset"] = {{"images", cfg.dataset->images},
                       {"texts", cfg.dataset->texts},
                       {"labels", cfg.dataset->labels}};
  }
  if (cfg.synthetic) {
    root["synthetic"] = {{"n", cfg.synthetic->n},
                         {"d_img", cfg.synthetic->d_img},
                         {"d_txt", cfg.synthetic->d_txt},
                         {"classes", cfg.synthetic->classes},
                         {"noise", cfg.synthetic->noise},
                         {"seed", effective_synthetic_seed(cfg)}};
  }
  root["split"] = {{"n_query", cfg.split.n_query},
                   {"n_train", cfg.split.n_train},
                   {"seed", effective_split_seed(cfg)}};
  const Stage1Hyper s1 = effective_stage1(cfg);
  root["stage1"] = {{"lambda", s1.lambda}, {"eta", s1.eta},
                    {"lr", s1.lr},         {"epochs", s1.epochs},
                    {"batch_size", s1.batch_size}, {"seed", s1.seed}};
  const Stage2Hyper s2 = effective_stage2(cfg);
  root["stage2"] = {{"gamma", s2.gamma},
                    {"beta", s2.beta},
                    {"alpha", s2.alpha},
                    {"lr", s2.lr},
                    {"epochs", s2.epochs},
                    {"batch_size", s2.batch_size},
                    {"ablation", to_string(s2.ablation)},
                    {"seed", s2.seed}};
  root["arch"] = {{"img_hidden", cfg.arch.img_hidden},
                  {"txt_hidden", cfg.arch.txt_hidden},
                  {"embed_dim", cfg.arch.embed_dim},
                  {"fusion_hidden", cfg.arch.fusion_hidden},
                  {"warm_start", cfg.arch.warm_start}};
  return root.dump();  // keys sorted by nlohmann's object ordering
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // FNV-1a 64
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace fdch
