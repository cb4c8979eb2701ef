#include "ccl/cli.hpp"

#include <filesystem>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "ccl/artifacts.hpp"
#include "ccl/data.hpp"
#include "ccl/errors.hpp"
#include "ccl/metrics.hpp"

namespace ccl::cli {

namespace {

struct AppBinding {
  CLI::App app{"cclnet: class-correlation soft labels for classifier training"};
  std::string mode_name = "ccl";
};

void build_app(AppBinding& b, RunConfig& cfg) {
  auto& app = b.app;
  auto& t = cfg.train;
  app.set_config("--config", "", "flat key=value file; any flag name is a key");
  app.add_option("command", cfg.command, "train | eval | gen-data | export-softlabels")->required();
  app.add_option("--seed", cfg.seed, "seed for data generation, splitting and training");
  app.add_option("--out", cfg.out_dir, "output directory");
  app.add_option("--data", cfg.data_path, "dataset file (K=<int> dim=<int> header)");
  app.add_option("--synthetic", cfg.synthetic, "synthetic preset: pairs2, separable7, siblings6, dermoscopy7");
  app.add_option("--synth-stddev", cfg.synth_stddev, "override the preset's within-class stddev");
  app.add_option("--val-ratio", cfg.val_ratio, "train fraction of the stratified split");
  app.add_option("--params", cfg.params_path, "parameter file written by train");
  app.add_option("--mode", b.mode_name, "hard | lsr-u | lsr-a | ccl");
  app.add_option("--epsilon", t.epsilon, "smoothing weight for lsr modes");
  app.add_option("--epochs", t.epochs, "training epochs");
  app.add_option("--batch-size", t.batch_size, "minibatch size");
  app.add_option("--lr-backbone", t.lr_backbone, "learning rate of backbone and fc layer");
  app.add_option("--lr-ccl", t.head.lr_ccl, "learning rate of embedding net and dictionary");
  app.add_option("--lr-drops", t.lr_drop_epochs, "0-based epochs where both lrs drop x0.1")->delimiter(',');
  app.add_option("--momentum", t.momentum, "SGD momentum");
  app.add_option("--weight-decay", t.weight_decay, "L2 weight decay");
  app.add_option("--clip", t.grad_clip_norm, "global gradient norm limit per update phase");
  app.add_option("--patience", t.patience, "epochs without a softness drop before freezing");
  app.add_option("--freeze-dictionary", t.freeze_dictionary, "freeze the dictionary once softness stalls");
  app.add_option("--kl-weight", t.kl_weight, "weight of the KL term toward the soft labels");
  app.add_option("--alpha-cc", t.head.alpha_cc, "weight of the class correlation penalty");
  app.add_option("--margin", t.head.margin, "distance margin b of the correlation penalty");
  app.add_option("--backbone-widths", t.backbone_widths, "backbone layer widths")->delimiter(',');
  app.add_option("--embed-widths", t.head.embed_widths, "embedding net layer widths")->delimiter(',');
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string in_dir(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

LabeledDataset load_source(const RunConfig& cfg) {
  if (!cfg.data_path.empty()) return load_dataset(cfg.data_path);
  SyntheticSpec spec = synthetic_preset(cfg.synthetic, cfg.seed);
  if (cfg.synth_stddev >= 0.0) spec.stddev = cfg.synth_stddev;
  return generate_synthetic(spec);
}

std::string metrics_block(const ConfusionMatrix& cm) {
  std::string out = format_report(evaluate_metrics(cm));
  std::istringstream rows(cm.to_text());
  std::string row;
  for (std::size_t k = 1; std::getline(rows, row); ++k) {
    out += "confusion_" + std::to_string(k) + "=" + row + "\n";
  }
  return out;
}

std::string softness_block(const SoftLabelMatrix& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "p_bar=%.6f\nnearest_epsilon=%.6f\ncollapsed_epsilon=%.6f\n",
                mean_correct_softness(m), nearest_uniform_epsilon(m),
                collapsed_epsilon(m.num_classes(), m.margin()));
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  if (command == "train") {
    if (data_path.empty() == synthetic.empty()) {
      throw ConfigError("train needs exactly one of --data or --synthetic");
    }
    if (!(val_ratio > 0.0 && val_ratio < 1.0)) throw ConfigError("--val-ratio must lie in (0, 1)");
    train.validate();
  } else if (command == "eval") {
    if (params_path.empty() || data_path.empty()) throw ConfigError("eval needs --params and --data");
  } else if (command == "gen-data") {
    if (synthetic.empty()) throw ConfigError("gen-data needs --synthetic");
  } else if (command == "export-softlabels") {
    if (params_path.empty()) throw ConfigError("export-softlabels needs --params");
  } else {
    throw ConfigError("unknown command '" + command +
                      "' (expected train, eval, gen-data or export-softlabels)");
  }
}

RunConfig parse_args(int argc, const char* const* argv) {
  RunConfig cfg;
  AppBinding b;
  build_app(b, cfg);
  try {
    b.app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  cfg.train.mode = parse_target_mode(b.mode_name);
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const LabeledDataset all = load_source(cfg);
  const auto [train, val] = stratified_split(all, cfg.val_ratio, derive_seed(cfg.seed, 17));
  ensure_dir(cfg.out_dir);

  std::string log;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainResult result = fit(tc, train, &val, {}, [&](const EpochReport& r) {
    const std::string line = format_epoch_record(r);
    log += line + "\n";
    out << line << "\n";
  });
  write_text_file(in_dir(cfg.out_dir, "train.log"), log);

  ModelArtifact artifact{tc.mode, result.state.model, result.state.head, result.state.epoch};
  save_artifact(artifact, in_dir(cfg.out_dir, "params.txt"));
  if (result.state.head) {
    const SoftLabelMatrix m = soft_labels(result.state.head->dictionary, tc.head.margin,
                                          static_cast<int>(result.state.epoch));
    write_text_file(in_dir(cfg.out_dir, "softlabels.csv"), m.to_text());
  }
  const std::string metrics = metrics_block(evaluate(result.state.model, val));
  write_text_file(in_dir(cfg.out_dir, "metrics.txt"), metrics);
  out << metrics;
}

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const ModelArtifact artifact = load_artifact(cfg.params_path);
  const LabeledDataset data = load_dataset(cfg.data_path);
  const std::string metrics = metrics_block(evaluate(artifact.model, data));
  ensure_dir(cfg.out_dir);
  write_text_file(in_dir(cfg.out_dir, "eval_metrics.txt"), metrics);
  out << metrics;
}

void cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const LabeledDataset ds = load_source(cfg);
  ensure_dir(cfg.out_dir);
  const std::string path = in_dir(cfg.out_dir, "data.txt");
  save_dataset(ds, path);
  out << "wrote " << ds.size() << " samples to " << path << "\n";
}

void cmd_export_softlabels(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const ModelArtifact artifact = load_artifact(cfg.params_path);
  if (!artifact.head) {
    throw ConfigError("'" + cfg.params_path + "' holds a " + to_string(artifact.mode) +
                      " model without class embeddings");
  }
  const SoftLabelMatrix m = soft_labels(artifact.head->dictionary, artifact.head->config.margin,
                                        static_cast<int>(artifact.epoch));
  ensure_dir(cfg.out_dir);
  write_text_file(in_dir(cfg.out_dir, "softlabels.csv"), m.to_text());
  const std::string summary = softness_block(m);
  write_text_file(in_dir(cfg.out_dir, "softness.txt"), summary);
  out << summary;
}

int exit_code_for(const std::string& category) {
  if (category == "config") return 2;
  if (category == "io") return 3;
  if (category == "parse") return 4;
  if (category == "dimension") return 5;
  if (category == "degenerate") return 6;
  return 1;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--help" || a == "-h") {
      RunConfig scratch;
      AppBinding b;
      build_app(b, scratch);
      out << b.app.help();
      return 0;
    }
  }
  auto fail = [&](const std::string& category, std::string msg) {
    for (char& c : msg)
      if (c == '\n') c = ' ';
    err << "error: " << category << ": " << msg << "\n";
    return exit_code_for(category);
  };
  try {
    const RunConfig cfg = parse_args(argc, argv);
    if (cfg.command == "train") cmd_train(cfg, out);
    else if (cfg.command == "eval") cmd_eval(cfg, out);
    else if (cfg.command == "gen-data") cmd_gen_data(cfg, out);
    else cmd_export_softlabels(cfg, out);
    return 0;
  } catch (const Error& e) {
    return fail(e.category(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}

}  // namespace ccl::cli
