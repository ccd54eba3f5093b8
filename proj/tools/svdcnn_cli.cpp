// Command-line front end: describe / verify / train / predict / bench.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "svdcnn/bench.hpp"
#include "svdcnn/checkpoint.hpp"
#include "svdcnn/params.hpp"

#ifndef SVDCNN_REFERENCE_TABLE
#define SVDCNN_REFERENCE_TABLE "data/reference_params.txt"
#endif

namespace fs = std::filesystem;
using namespace svdcnn;

namespace {

std::string grouped(Count n) {
  std::string digits = std::to_string(n < 0 ? -n : n);
  for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
  return n < 0 ? "-" + digits : digits;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct SpecFlags {
  std::string family = "svdcnn";
  int depth = 9;
  Index seq_len = 1024;
  Index embedding_dim = 16;
  Index n_classes = 4;
  Index fc_hidden = 2048;
  Index k = 8;

  void attach(CLI::App& app) {
    app.add_option("--family", family, "vdcnn or svdcnn")
        ->check(CLI::IsMember({"vdcnn", "svdcnn"}))
        ->capture_default_str();
    app.add_option("--depth", depth, "9, 17, 29 or 49")
        ->check(CLI::IsMember({9, 17, 29, 49}))
        ->capture_default_str();
    app.add_option("--s", seq_len, "characters per input")->capture_default_str();
    app.add_option("--f0", embedding_dim, "embedding dimension")->capture_default_str();
    app.add_option("--classes", n_classes, "number of target classes")->capture_default_str();
    app.add_option("--hidden", fc_hidden, "hidden units of the vdcnn head")->capture_default_str();
    app.add_option("--k", k, "k-max / average-pool output length")->capture_default_str();
  }

  ArchitectureSpec spec() const {
    ArchitectureSpec s;
    s.family = parse_family(family);
    s.depth = depth;
    s.seq_len = seq_len;
    s.embedding_dim = embedding_dim;
    s.vocab_size = Vocabulary::standard().size();
    s.n_classes = n_classes;
    s.fc_hidden = fc_hidden;
    s.k = k;
    s.validate();
    return s;
  }
};

// ---------------------------------------------------------------------------

int run_describe(const SpecFlags& flags, std::uint64_t seed) {
  const ArchitectureSpec spec = flags.spec();
  auto model = build_model<float>(spec, seed);
  const ParamReport counted = count_params(model);
  const ParamReport closed = closed_form_params(spec);

  std::printf("%s  (s=%td, f0=%td, k=%td, classes=%td, depth counted %d)\n", spec.name().c_str(),
              spec.seq_len, spec.embedding_dim, spec.k, spec.n_classes, model.depth());
  std::printf("%-12s %16s %16s\n", "category", "enumerated", "closed-form");
  auto row = [](const char* name, Count a, Count b) {
    std::printf("%-12s %16s %16s%s\n", name, grouped(a).c_str(), grouped(b).c_str(),
                a == b ? "" : "  MISMATCH");
  };
  row("embedding", counted.embedding, closed.embedding);
  row("conv", counted.conv, closed.conv);
  row("batchnorm", counted.batchnorm, closed.batchnorm);
  row("fc", counted.fc, closed.fc);
  row("total", counted.total(), closed.total());
  std::printf("classifier weights (no bias): %s\n", grouped(classifier_weights(spec)).c_str());
  std::printf("conv %s M | fc %s M | total %s M | storage %s MB\n",
              fixed2(to_millions(counted.conv)).c_str(), fixed2(to_millions(counted.fc)).c_str(),
              fixed2(to_millions(counted.total())).c_str(),
              fixed2(round_half_up(counted.storage_mb(), 2)).c_str());
  return counted == closed ? 0 : 1;
}

// ---------------------------------------------------------------------------

int run_verify(const fs::path& golden, double tolerance) {
  if (!fs::exists(golden)) {
    std::cerr << "error: reference table not found: " << golden.string() << "\n";
    return 2;
  }
  const auto table = load_reference_table(golden);
  int failures = 0;
  auto expect = [&](const std::string& what, bool ok, const std::string& detail) {
    std::printf("[%s] %s: %s\n", ok ? "pass" : "FAIL", what.c_str(), detail.c_str());
    if (!ok) ++failures;
  };

  const Count standard = standard_block_weights(128, 256);
  const Count separable = tdsc_block_weights(128, 256);
  expect("standard block 128->256", standard == 294912, grouped(standard));
  expect("tdsc block 128->256", separable == 99456, grouped(separable));
  const double block_cut = reduction_percent(standard, separable);
  expect("block reduction", fixed2(block_cut) == "66.28", fixed2(block_cut) + "%");

  ArchitectureSpec vd;
  vd.family = Family::vdcnn;
  ArchitectureSpec svd;
  const Count head_fc = classifier_weights(vd), head_gap = classifier_weights(svd);
  expect("k-max + 3 FC head weights", head_fc == 12591104, grouped(head_fc));
  expect("average-pool head weights", head_gap == 16384, grouped(head_gap));
  std::printf("       head reduction from exact counts: %s%%\n",
              fixed2(reduction_percent(head_fc, head_gap)).c_str());
  expect("storage of 1,580,000 parameters", fixed2(round_half_up(storage_mb(1580000), 2)) == "6.03",
         fixed2(storage_mb(1580000)) + " MB");

  for (int depth : supported_depths()) {
    const auto layout = depth_layout(depth);
    const int sum = layout[0] + layout[1] + layout[2] + layout[3] + 1;
    expect("depth layout " + std::to_string(depth), sum == depth,
           std::to_string(layout[0]) + "+" + std::to_string(layout[1]) + "+" +
               std::to_string(layout[2]) + "+" + std::to_string(layout[3]) + "+1");
  }

  for (Family family : {Family::svdcnn, Family::vdcnn}) {
    for (int depth : supported_depths()) {
      ArchitectureSpec spec;
      spec.family = family;
      spec.depth = depth;
      spec.vocab_size = Vocabulary::standard().size();
      auto model = build_model<float>(spec, 0);
      const ParamReport counted = count_params(model);
      expect("enumeration == closed form " + spec.name(), counted == closed_form_params(spec),
             grouped(counted.total()) + " parameters");
    }
  }

  int flagged = 0;
  for (const auto& ref : table) {
    ArchitectureSpec spec;
    spec.family = ref.family;
    spec.depth = ref.depth;
    spec.vocab_size = Vocabulary::standard().size();
    auto model = build_model<float>(spec, 0);
    const ReconcileReport rec = reconcile(count_params(model), ref, tolerance);
    for (const auto& c : rec.checks) {
      std::printf("[%s] %s %-10s measured %8.2f  reference %8.2f  diff %6.2f%%\n",
                  to_string(c.status), rec.config.c_str(), c.field.c_str(), c.measured,
                  c.reference, 100.0 * c.rel_diff);
      if (c.status == CheckStatus::fail) ++failures;
      if (c.status == CheckStatus::flag) ++flagged;
    }
  }
  std::printf("%d failure(s), %d flagged value(s) outside tolerance %.0f%%\n", failures, flagged,
              100.0 * tolerance);
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string csv;
  std::string val_csv;
  bool synthetic = false;
  Index train_size = 400;
  Index val_size = 200;
  std::string out = "svdcnn.ckpt";
  std::string history;
};

int run_train(const SpecFlags& spec_flags, const TrainFlags& flags, TrainConfig config) {
  if (!flags.synthetic && flags.csv.empty()) {
    std::cerr << "error: pass --csv <file> or --synthetic\n";
    return 2;
  }
  for (const auto& p : {flags.csv, flags.val_csv}) {
    if (!p.empty() && !fs::exists(p)) {
      std::cerr << "error: dataset not found: " << p << "\n";
      return 2;
    }
  }
  const fs::path out(flags.out);
  if (out.has_parent_path() && !fs::exists(out.parent_path())) {
    std::cerr << "error: output directory does not exist: " << out.parent_path().string() << "\n";
    return 2;
  }
  const ArchitectureSpec spec = spec_flags.spec();
  config.validate();
  std::printf("lr=%g momentum=%g weight_decay=%g batch=%td epochs=%d seed=%llu\n", config.lr,
              config.momentum, config.weight_decay, config.batch_size, config.max_epochs,
              static_cast<unsigned long long>(config.seed));

  Dataset train_set, val_set;
  if (flags.synthetic) {
    train_set = synth_dataset(flags.train_size, spec.n_classes, spec.seq_len, config.seed);
    val_set = synth_dataset(flags.val_size, spec.n_classes, spec.seq_len, config.seed + 1000003);
  } else {
    const auto& vocab = Vocabulary::standard();
    Dataset all = load_csv(flags.csv, spec.n_classes, vocab, spec.seq_len);
    if (!flags.val_csv.empty()) {
      train_set = std::move(all);
      val_set = load_csv(flags.val_csv, spec.n_classes, vocab, spec.seq_len);
    } else {
      // Every tenth record is held out.
      train_set = val_set = Dataset{{}, all.n_classes, all.seq_len, all.provenance};
      for (std::size_t i = 0; i < all.samples.size(); ++i) {
        (i % 10 == 9 ? val_set : train_set).samples.push_back(std::move(all.samples[i]));
      }
      if (val_set.samples.empty()) val_set.samples = train_set.samples;
    }
  }
  std::printf("%s: %td train / %td validation samples\n", spec.name().c_str(), train_set.size(),
              val_set.size());

  const std::string history_path = flags.history.empty() ? flags.out + ".history.tsv" : flags.history;
  std::ofstream history(history_path);
  if (!history) {
    std::cerr << "error: cannot write history file " << history_path << "\n";
    return 2;
  }
  history << "epoch\ttrain_loss\tval_accuracy\n";

  auto model = build_model<float>(spec, config.seed);
  TrainResult result;
  try {
    result = train(model, train_set, val_set, config, [&](const EpochRecord& r) {
      std::printf("epoch %3d  loss %.6f  val_acc %.4f\n", r.epoch, r.train_loss, r.val_accuracy);
      std::fflush(stdout);
      history << r.epoch << '\t' << r.train_loss << '\t' << r.val_accuracy << '\n' << std::flush;
    });
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  save_checkpoint(model, out, result.best_epoch, result.history);
  std::printf("initial loss %.6f, best val_acc %.4f at epoch %d, checkpoint %s\n",
              result.initial_loss, result.best_val_accuracy, result.best_epoch, flags.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

int run_predict(const std::string& checkpoint, const std::string& text) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const auto& spec = ck.model.spec();
  IndexBatch batch{1, spec.seq_len, quantize(text, Vocabulary::standard(), spec.seq_len)};
  const auto logits = ck.model.forward(batch);
  const auto z = logits.data();
  const float peak = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double norm = 0;
  for (std::size_t i = 0; i < z.size(); ++i) norm += (p[i] = std::exp(double(z[i] - peak)));
  std::printf("class %d\n", argmax_rows(logits)[0]);
  for (std::size_t i = 0; i < p.size(); ++i) std::printf("p[%zu] = %.6f\n", i, p[i] / norm);
  return 0;
}

// ---------------------------------------------------------------------------

int run_bench(const SpecFlags& spec_flags, const std::string& checkpoint, int reps, int warmup,
              std::uint64_t seed, const std::string& environment, const std::string& record,
              const std::vector<std::string>& compare) {
  if (!compare.empty()) {
    auto read = [](const std::string& path) {
      std::ifstream in(path);
      if (!in) throw ArgumentError("cannot read latency record " + path);
      std::string line;
      std::getline(in, line);
      return parse_record(line);
    };
    const LatencyStats a = read(compare[0]), b = read(compare[1]);
    std::cout << format_row(a) << "\n" << format_row(b) << "\n";
    std::printf("ratio %s\n", fixed2(latency_ratio(a, b)).c_str());
    return 0;
  }

  Model<float> model = checkpoint.empty() ? build_model<float>(spec_flags.spec(), seed)
                                          : load_checkpoint(checkpoint).model;
  model.set_mode(Mode::eval);
  const auto& spec = model.spec();
  const Dataset probe = synth_dataset(spec.n_classes, spec.n_classes, spec.seq_len, seed);
  LatencyStats stats = measure_latency(model, std::span<const std::int32_t>(probe.samples[0].indices),
                                       reps, warmup);
  stats.environment = environment;
  std::cout << format_row(stats) << "\n";
  if (!record.empty()) {
    std::ofstream out(record);
    if (!out) throw ArgumentError("cannot write latency record " + record);
    out << to_record(stats) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Very deep character-level CNNs for text classification"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  auto* describe = app.add_subcommand("describe", "parameter and storage report for one model");
  SpecFlags describe_flags;
  describe_flags.attach(*describe);

  auto* verify = app.add_subcommand("verify", "check parameter accounting against reference figures");
  std::string golden = SVDCNN_REFERENCE_TABLE;
  double tolerance = 0.05;
  verify->add_option("--golden", golden, "reference table")->capture_default_str();
  verify->add_option("--tolerance", tolerance, "relative tolerance")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  SpecFlags train_spec;
  train_spec.attach(*train_cmd);
  TrainFlags train_flags;
  TrainConfig config;
  train_cmd->add_option("--csv", train_flags.csv, "class-first CSV training file");
  train_cmd->add_option("--val-csv", train_flags.val_csv, "validation CSV (default: hold out every 10th row)");
  train_cmd->add_flag("--synthetic", train_flags.synthetic, "use the synthetic letter-frequency corpus");
  train_cmd->add_option("--train-size", train_flags.train_size, "synthetic training samples")->capture_default_str();
  train_cmd->add_option("--val-size", train_flags.val_size, "synthetic validation samples")->capture_default_str();
  train_cmd->add_option("--epochs", config.max_epochs, "epoch budget")->capture_default_str();
  train_cmd->add_option("--lr", config.lr, "learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", config.momentum, "momentum")->capture_default_str();
  train_cmd->add_option("--wd", config.weight_decay, "weight decay")->capture_default_str();
  train_cmd->add_option("--batch", config.batch_size, "batch size")->capture_default_str();
  train_cmd->add_option("--out", train_flags.out, "checkpoint path")->capture_default_str();
  train_cmd->add_option("--history", train_flags.history, "per-epoch history file (default: <out>.history.tsv)");

  auto* predict = app.add_subcommand("predict", "classify one text with a checkpoint");
  std::string predict_ckpt, text;
  predict->add_option("--checkpoint", predict_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  predict->add_option("--text", text, "input text");

  auto* bench = app.add_subcommand("bench", "single-instance inference latency");
  SpecFlags bench_spec;
  bench_spec.attach(*bench);
  std::string bench_ckpt, environment = "cpu", record;
  int reps = 1000, warmup = 10;
  std::vector<std::string> compare;
  bench->add_option("--checkpoint", bench_ckpt, "checkpoint file (default: freshly built model)")
      ->check(CLI::ExistingFile);
  bench->add_option("--reps", reps, "timed repetitions")->check(CLI::Range(2, 1 << 30))->capture_default_str();
  bench->add_option("--warmup", warmup, "untimed warm-up passes")->check(CLI::NonNegativeNumber)->capture_default_str();
  bench->add_option("--env", environment, "environment label")->capture_default_str();
  bench->add_option("--record", record, "write a JSON latency record");
  bench->add_option("--compare", compare, "print the latency ratio of two records")->expected(2)->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*describe) return run_describe(describe_flags, seed);
    if (*verify) return run_verify(golden, tolerance);
    if (*train_cmd) {
      config.seed = seed;
      return run_train(train_spec, train_flags, config);
    }
    if (*predict) return run_predict(predict_ckpt, text);
    if (*bench) return run_bench(bench_spec, bench_ckpt, reps, warmup, seed, environment, record, compare);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
