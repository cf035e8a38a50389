#include "fdch/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fdch/stage1.hpp"
#include "fdch/stage2.hpp"

namespace fdch {

namespace fs = std::filesystem;
using nlohmann::json;

std::string artifact_path(const RunConfig& cfg, const char* name) {
  return (fs::path(cfg.out_dir) / name).string();
}

namespace {

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + cfg.out_dir);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_run_manifest(const RunConfig& cfg, const std::string& command,
                        const std::vector<std::string>& artifacts) {
  json m;
  m["format_version"] = 1;
  m["command"] = command;
  m["config_hash"] = hash_hex(config_hash(cfg));
  m["seed"] = cfg.seed;
  m["bits"] = cfg.bits;
  m["artifacts"] = artifacts;
  m["config"] = json::parse(canonical_config(cfg));
  write_text(artifact_path(cfg, artifact::run_manifest), m.dump(2) + "\n");
}

std::vector<std::string> db_ids(const Dataset& ds, const std::vector<int>& idx) {
  std::vector<std::string> ids;
  ids.reserve(idx.size());
  for (int i : idx)
    ids.push_back(ds.names.empty() ? std::to_string(i)
                                   : ds.names[static_cast<std::size_t>(i)]);
  return ids;
}

std::vector<QueryItem> make_queries(const Mlp& net, const Dataset& ds,
                                    const std::vector<int>& idx, bool image_side) {
  std::vector<QueryItem> queries;
  queries.reserve(idx.size());
  for (int i : idx) {
    QueryItem q;
    q.code = image_side ? encode_image(net, ds.img.col(i))
                        : encode_text(net, ds.txt.col(i));
    q.label_words = pack_label_bits(ds.labels.col(i));
    queries.push_back(std::move(q));
  }
  return queries;
}

void check_bits(int got, int want, const std::string& what) {
  if (got != want)
    throw std::runtime_error("code length mismatch: " + what + " has " +
                             std::to_string(got) + " bits, config says " +
                             std::to_string(want));
}

}  // namespace

Dataset resolve_dataset(const RunConfig& cfg) {
  if (cfg.dataset)
    return load_dataset(cfg.dataset->images, cfg.dataset->texts, cfg.dataset->labels);
  if (cfg.synthetic) {
    const SyntheticSpec& s = *cfg.synthetic;
    return make_synthetic(s.n, s.d_img, s.d_txt, s.classes, s.noise,
                          effective_synthetic_seed(cfg));
  }
  throw std::runtime_error("config names neither dataset files nor a synthetic spec");
}

void cmd_synth(const RunConfig& cfg) {
  if (!cfg.synthetic) throw std::runtime_error("synth requires a synthetic spec");
  ensure_out_dir(cfg);
  const Dataset ds = resolve_dataset(cfg);
  save_dataset(ds, artifact_path(cfg, artifact::img_csv),
               artifact_path(cfg, artifact::txt_csv),
               artifact_path(cfg, artifact::labels_csv));

  const SyntheticSpec& s = *cfg.synthetic;
  json m;
  m["n"] = s.n;
  m["d_img"] = s.d_img;
  m["d_txt"] = s.d_txt;
  m["classes"] = s.classes;
  m["noise"] = s.noise;
  m["seed"] = effective_synthetic_seed(cfg);
  m["files"] = {artifact::img_csv, artifact::txt_csv, artifact::labels_csv};
  write_text(artifact_path(cfg, artifact::synth_manifest), m.dump(2) + "\n");
}

void cmd_train(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  Dataset ds;
  Split split;
  try {
    ds = resolve_dataset(cfg);
    validate(ds);
    split = split_dataset(ds, cfg.split.n_query, cfg.split.n_train,
                          effective_split_seed(cfg));
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("train (data): ") + e.what());
  }

  Stage1Result s1;
  try {
    s1 = train_stage1(ds, split.train, effective_stage1(cfg), cfg.arch);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("train (stage 1): ") + e.what());
  }
  save_networks(artifact_path(cfg, artifact::fusion_checkpoint),
                {&s1.model.img_net, &s1.model.txt_net, &s1.model.fusion_net});
  {
    std::string csv = "epoch,objective\n";
    for (std::size_t e = 0; e < s1.objective_trace.size(); ++e)
      csv += std::to_string(e + 1) + "," + fmt_double(s1.objective_trace[e]) + "\n";
    write_text(artifact_path(cfg, artifact::stage1_trace), csv);
  }

  Stage2Result s2;
  try {
    s2 = train_stage2(ds, split.train, s1.model.codes, effective_stage2(cfg),
                      cfg.arch, cfg.arch.warm_start ? &s1.model : nullptr);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("train (stage 2): ") + e.what());
  }
  save_networks(artifact_path(cfg, artifact::hash_checkpoint),
                {&s2.nets.img_net, &s2.nets.txt_net});
  {
    std::string csv = "epoch,J,J1,J2,J3,J4\n";
    for (std::size_t e = 0; e < s2.trace.size(); ++e) {
      const Stage2Terms& t = s2.trace[e];
      csv += std::to_string(e + 1) + "," + fmt_double(t.total) + "," +
             fmt_double(t.pairwise) + "," + fmt_double(t.quantization) + "," +
             fmt_double(t.label) + "," + fmt_double(t.balance) + "\n";
    }
    write_text(artifact_path(cfg, artifact::stage2_trace), csv);
  }

  // unified codes as a code index over the training instances
  std::vector<HashCode> codes;
  codes.reserve(split.train.size());
  for (Index j = 0; j < s1.model.codes.cols(); ++j)
    codes.push_back(pack_column(s1.model.codes, j));
  const HashIndex code_index =
      build_index(cfg.bits, codes, gather_columns(ds.labels, split.train),
                  db_ids(ds, split.train), 0);
  save_index(code_index, artifact_path(cfg, artifact::codes_index));

  write_run_manifest(cfg, "train",
                     {artifact::fusion_checkpoint, artifact::hash_checkpoint,
                      artifact::codes_index, artifact::stage1_trace,
                      artifact::stage2_trace});
}

void cmd_encode(const RunConfig& cfg, const std::string& checkpoint) {
  ensure_out_dir(cfg);
  const std::string ckpt_path =
      checkpoint.empty() ? artifact_path(cfg, artifact::hash_checkpoint) : checkpoint;
  const std::vector<Mlp> nets = load_networks(ckpt_path);
  if (nets.size() != 2)
    throw std::runtime_error("hash checkpoint must hold exactly two networks, got " +
                             std::to_string(nets.size()));
  const Mlp& img_net = nets[0];
  const Mlp& txt_net = nets[1];
  check_bits(static_cast<int>(img_net.out_dim()), cfg.bits, "image network");
  check_bits(static_cast<int>(txt_net.out_dim()), cfg.bits, "text network");

  const Dataset ds = resolve_dataset(cfg);
  if (ds.img_dim() != img_net.in_dim() || ds.txt_dim() != txt_net.in_dim())
    throw std::runtime_error("checkpoint input dims do not match the dataset");
  const Split split = split_dataset(ds, cfg.split.n_query, cfg.split.n_train,
                                    effective_split_seed(cfg));

  const Matrix img_db = gather_columns(ds.img, split.db);
  const Matrix txt_db = gather_columns(ds.txt, split.db);
  const Matrix label_db = gather_columns(ds.labels, split.db);
  const auto ids = db_ids(ds, split.db);

  const HashIndex img_index =
      build_index(cfg.bits, encode_matrix(img_net, img_db), label_db, ids, 1);
  save_index(img_index, artifact_path(cfg, artifact::db_img_index));
  const HashIndex txt_index =
      build_index(cfg.bits, encode_matrix(txt_net, txt_db), label_db, ids, 2);
  save_index(txt_index, artifact_path(cfg, artifact::db_txt_index));
}

EvalSummary cmd_eval(const RunConfig& cfg, const std::string& img_index_path,
                     const std::string& txt_index_path) {
  ensure_out_dir(cfg);
  const std::vector<Mlp> nets =
      load_networks(artifact_path(cfg, artifact::hash_checkpoint));
  if (nets.size() != 2)
    throw std::runtime_error("hash checkpoint must hold exactly two networks, got " +
                             std::to_string(nets.size()));
  const HashIndex img_index = load_index(
      img_index_path.empty() ? artifact_path(cfg, artifact::db_img_index)
                             : img_index_path);
  const HashIndex txt_index = load_index(
      txt_index_path.empty() ? artifact_path(cfg, artifact::db_txt_index)
                             : txt_index_path);
  check_bits(img_index.bits, cfg.bits, "image index");
  check_bits(txt_index.bits, cfg.bits, "text index");
  if (img_index.modality == 2)
    throw std::runtime_error(
        "direction mismatch: text-query evaluation needs an image-modality "
        "database index, got a text-modality index");
  if (txt_index.modality == 1)
    throw std::runtime_error(
        "direction mismatch: image-query evaluation needs a text-modality "
        "database index, got an image-modality index");

  const Dataset ds = resolve_dataset(cfg);
  const Split split = split_dataset(ds, cfg.split.n_query, cfg.split.n_train,
                                    effective_split_seed(cfg));
  const auto img_queries = make_queries(nets[0], ds, split.query, true);
  const auto txt_queries = make_queries(nets[1], ds, split.query, false);

  EvalSummary summary;
  // I2T: image queries against the text-side database
  summary.i2t = mean_average_precision(txt_index, img_queries);
  const auto pr_i2t = precision_recall_by_radius(txt_index, img_queries);
  // T2I: text queries against the image-side database
  summary.t2i = mean_average_precision(img_index, txt_queries);
  const auto pr_t2i = precision_recall_by_radius(img_index, txt_queries);

  const auto write_pr = [&](const std::vector<PrPoint>& curve, const char* name) {
    std::string csv = "radius,precision,recall,zero_retrieval\n";
    for (const PrPoint& p : curve)
      csv += std::to_string(p.radius) + "," + fmt_double(p.precision) + "," +
             fmt_double(p.recall) + "," + (p.zero_retrieval ? "1" : "0") + "\n";
    write_text(artifact_path(cfg, name), csv);
  };
  write_pr(pr_i2t, artifact::pr_i2t);
  write_pr(pr_t2i, artifact::pr_t2i);

  std::string csv = "direction,map,queries_evaluated,queries_skipped\n";
  csv += "i2t," + fmt_double(summary.i2t.map) + "," +
         std::to_string(summary.i2t.evaluated) + "," +
         std::to_string(summary.i2t.skipped) + "\n";
  csv += "t2i," + fmt_double(summary.t2i.map) + "," +
         std::to_string(summary.t2i.evaluated) + "," +
         std::to_string(summary.t2i.skipped) + "\n";
  write_text(artifact_path(cfg, artifact::map_summary), csv);
  return summary;
}

}  // namespace fdch
