#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "fdch/config.hpp"
#include "fdch/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int bits = 0;
  std::string ablation;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "run configuration file (JSON)")
      ->required();
  cmd->add_option("--seed", flags.seed, "override the master seed");
  cmd->add_option("--out", flags.out_dir, "override the output directory");
  cmd->add_option("--bits", flags.bits, "override the code length")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--ablation", flags.ablation,
                  "override the model variant: none, fdch-i, fdch-ii");
}

fdch::RunConfig resolve(const CLI::App* cmd, const CommonFlags& flags) {
  fdch::RunConfig cfg = fdch::load_config(flags.config_path);
  if (cmd->count("--seed")) cfg.seed = flags.seed;
  if (cmd->count("--out")) cfg.out_dir = flags.out_dir;
  if (cmd->count("--bits")) cfg.bits = flags.bits;
  if (cmd->count("--ablation"))
    cfg.stage2.ablation = fdch::ablation_from_string(flags.ablation);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fusion-supervised cross-modal hashing pipeline"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string checkpoint;
  std::string img_index;
  std::string txt_index;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, flags);
  CLI::App* train = app.add_subcommand("train", "train both stages");
  add_common(train, flags);
  CLI::App* encode = app.add_subcommand("encode", "encode the database split");
  add_common(encode, flags);
  encode->add_option("--checkpoint", checkpoint, "hash-network checkpoint to use");
  CLI::App* eval = app.add_subcommand("eval", "evaluate both retrieval directions");
  add_common(eval, flags);
  eval->add_option("--img-index", img_index, "image-modality database index");
  eval->add_option("--txt-index", txt_index, "text-modality database index");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      fdch::cmd_synth(resolve(synth, flags));
      std::printf("synth: wrote dataset to %s\n",
                  resolve(synth, flags).out_dir.c_str());
    } else if (train->parsed()) {
      const fdch::RunConfig cfg = resolve(train, flags);
      fdch::cmd_train(cfg);
      std::printf("train: wrote checkpoints, codes and traces to %s\n",
                  cfg.out_dir.c_str());
    } else if (encode->parsed()) {
      const fdch::RunConfig cfg = resolve(encode, flags);
      fdch::cmd_encode(cfg, checkpoint);
      std::printf("encode: wrote database indexes to %s\n", cfg.out_dir.c_str());
    } else if (eval->parsed()) {
      const fdch::RunConfig cfg = resolve(eval, flags);
      const fdch::EvalSummary summary = fdch::cmd_eval(cfg, img_index, txt_index);
      std::printf("eval: I2T mAP %.4f (%lld queries), T2I mAP %.4f (%lld queries)\n",
                  summary.i2t.map, static_cast<long long>(summary.i2t.evaluated),
                  summary.t2i.map, static_cast<long long>(summary.t2i.evaluated));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
