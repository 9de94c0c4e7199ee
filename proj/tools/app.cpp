// SPDX-License-Identifier: Apache-2.0
#include "app.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "elf/binary_io.hpp"
#include "elf/error.hpp"
#include "elf/inference.hpp"
#include "elf/kernels.hpp"
#include "elf/metrics.hpp"

namespace elf::app {

namespace fs = std::filesystem;

// ---- shared helpers ----

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

GeneratedData generate_data(const GenParams& p) {
  if (p.classes < 2) throw ConfigError("gen-data: need at least two classes");
  if (p.n == 0) throw ConfigError("gen-data: --n must be positive");
  GaussianTask task;
  task.classes = p.classes;
  task.dims = p.dims;
  task.noise_sigma = p.sigma;
  task.mean_scale = p.mean_scale;
  task.mean_seed = derive_seed(p.seed, 0);
  // Validate the ratio before drawing the balanced source.
  longtail_counts(p.n, p.classes, p.ratio);
  const LongTailedDataset source =
      synth_gaussian(task, std::vector<std::size_t>(p.classes, p.n), derive_seed(p.seed, 1));
  return {make_longtail(source, p.ratio, derive_seed(p.seed, 2)),
          synth_gaussian(task, std::vector<std::size_t>(p.classes, p.val_per_class), derive_seed(p.seed, 3)),
          synth_gaussian(task, std::vector<std::size_t>(p.classes, p.eval_per_class), derive_seed(p.seed, 4))};
}

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError(what + ": '" + s + "' is not a number");
  return v;
}

std::size_t to_count(const std::string& s, const std::string& what) {
  const double v = to_double(s, what);
  if (v < 0 || v != std::floor(v)) throw ConfigError(what + ": '" + s + "' is not a non-negative integer");
  return static_cast<std::size_t>(v);
}

LossKind to_loss(const std::string& name) {
  const auto k = parse_loss(name);
  if (!k) throw ConfigError("--loss: expected ce, focal or ldam, got '" + name + "'");
  return *k;
}

}  // namespace

std::vector<std::size_t> resolve_widths(const std::string& spec, std::size_t exits) {
  if (exits == 0) throw ConfigError("--exits must be at least 1");
  std::vector<std::size_t> w;
  if (spec == "auto") {
    for (std::size_t k = 0; k < exits; ++k) w.push_back(std::size_t{16} << k);
    return w;
  }
  for (const auto& item : split_list(spec, ',')) w.push_back(to_count(item, "--widths"));
  if (w.size() != exits) {
    throw ConfigError("--widths lists " + std::to_string(w.size()) + " values for " + std::to_string(exits) +
                      " exits");
  }
  return w;
}

double resolve_train_threshold(const std::string& spec, LossKind loss, std::size_t classes) {
  if (spec == "auto") return loss == LossKind::ldam ? 2.0 / static_cast<double>(classes) : 0.9;
  return to_double(spec, "--train-threshold");
}

TrainConfig make_train_config(const TrainParams& p, std::size_t classes) {
  TrainConfig c;
  c.epochs = p.epochs;
  c.batch_size = p.batch;
  c.lr = p.lr;
  c.momentum = p.momentum;
  c.weight_decay = p.wd;
  c.warmup_epochs = p.warmup;
  c.seed = derive_seed(p.seed, 11);
  if (p.lr_decay == "auto") {
    c.lr_decay = {{p.epochs * 8 / 10, 0.1}, {p.epochs * 9 / 10, 0.1}};
  } else if (p.lr_decay != "none" && !p.lr_decay.empty()) {
    for (const auto& item : split_list(p.lr_decay, ',')) {
      const auto parts = split_list(item, ':');
      if (parts.size() != 2) throw ConfigError("--lr-decay: expected epoch:factor pairs, got '" + item + "'");
      c.lr_decay.push_back({to_count(parts[0], "--lr-decay epoch"), to_double(parts[1], "--lr-decay factor")});
    }
  }
  c.loss.kind = to_loss(p.loss);
  c.loss.gamma = p.gamma;
  c.loss.max_margin = p.max_margin;
  c.loss.beta = p.beta;
  if (p.drw_epoch == "auto") {
    c.loss.drw_epoch = p.epochs * 8 / 10;
  } else if (p.drw_epoch != "none") {
    c.loss.drw_epoch = to_count(p.drw_epoch, "--drw-epoch");
  }
  const double t = resolve_train_threshold(p.train_threshold, c.loss.kind, classes);
  // Training never consults the inference thresholds.
  c.policy = ExitPolicy::uniform(p.exits, t, 1.0);
  return c;
}

NetworkSpec make_network_spec(const TrainParams& p, std::size_t classes, InputDims dims) {
  return NetworkSpec{classes, dims, resolve_widths(p.widths, p.exits), derive_seed(p.seed, 10)};
}

std::vector<double> default_grid(LossKind loss, std::size_t classes) {
  std::vector<double> g;
  if (loss == LossKind::ldam) {
    for (int i = 150; i <= 175; i += 5) g.push_back(i / 100.0 / static_cast<double>(classes));
  } else {
    for (int i = 50; i <= 95; i += 5) g.push_back(i / 100.0);
  }
  return g;
}

std::vector<std::string> config_to_args(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r");
      const auto r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

namespace {

// ---- command plumbing ----

struct Common {
  std::string config;
  std::string out_dir = ".";
  bool no_timestamp = false;
  std::string simd = "auto";
};

struct GenOpts {
  Common common;
  GenParams p;
  std::size_t channels = 1, height = 5, width = 5;
};

struct TrainOpts {
  Common common;
  TrainParams p;
  std::string data = "train.elfd";
  std::string checkpoint = "model.elfc";
  bool quiet = false;
};

struct EvalOpts {
  Common common;
  std::string checkpoint = "model.elfc";
  std::string data = "eval.elfd";
  std::string train_data;
  double infer_threshold = 0.9;
  std::string train_threshold = "auto";
  std::string loss = "ce";
  double gamma = 0.5;
  double max_margin = 0.5;
  std::size_t many_min = 100;
  std::size_t few_max = 20;
  std::size_t bins = 10;
};

struct SweepOpts {
  Common common;
  std::string checkpoint = "model.elfc";
  std::string data = "val.elfd";
  std::string grid = "auto";
  std::string loss = "ce";
};

struct ReportOpts {
  Common common;
  std::string checkpoint = "model.elfc";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config,
                  "Flat key=value file; keys are flag names without dashes; flags win");
  sub->add_option("--out-dir", c.out_dir, "Directory for CSV and JSON outputs");
  sub->add_flag("--no-timestamp", c.no_timestamp, "Omit the timestamp header line from CSV outputs");
  sub->add_option("--simd", c.simd, "Kernel backend: auto, scalar, avx2 or avx512")
      ->check(CLI::IsMember({"auto", "scalar", "avx2", "avx512"}));
}

void apply_simd(const Common& c) {
  if (c.simd == "auto") return;
  const auto b = simd::parse_backend(c.simd);
  if (!b) throw ConfigError("--simd: unknown backend '" + c.simd + "'");
  simd::set_backend(*b);
}

std::size_t worker_count() {
  const char* env = std::getenv("ELF_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const std::size_t n = to_count(env, "ELF_THREADS");
  if (n == 0) throw ConfigError("ELF_THREADS must be at least 1");
  return n;
}

std::string timestamp_line() {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[64];
  std::strftime(buf, sizeof buf, "# generated %Y-%m-%dT%H:%M:%SZ\n", &utc);
  return buf;
}

fs::path output_path(const Common& c, const std::string& name) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + c.out_dir + "': " + ec.message());
  return fs::path(c.out_dir) / name;
}

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path.string(), std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_csv(const Common& c, const std::string& name, const std::string& body) {
  write_text(output_path(c, name), (c.no_timestamp ? std::string() : timestamp_line()) + body);
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

// ---- commands ----

int cmd_gen_data(GenOpts& o, std::ostream& out) {
  o.p.dims = InputDims{static_cast<std::uint32_t>(o.channels), static_cast<std::uint32_t>(o.height),
                       static_cast<std::uint32_t>(o.width)};
  const GeneratedData d = generate_data(o.p);
  save_dataset(d.train, output_path(o.common, "train.elfd").string());
  if (o.p.val_per_class > 0) save_dataset(d.val, output_path(o.common, "val.elfd").string());
  save_dataset(d.eval, output_path(o.common, "eval.elfd").string());

  out << "train: " << d.train.size() << " examples, counts";
  for (auto n : d.train.class_counts()) out << ' ' << n;
  out << ", imbalance ratio " << format_float(d.train.imbalance_ratio()) << '\n';
  if (o.p.val_per_class > 0) out << "val: " << d.val.size() << " examples (balanced)\n";
  out << "eval: " << d.eval.size() << " examples (balanced)\n";
  return kOk;
}

int cmd_train(TrainOpts& o, std::ostream& out) {
  const LongTailedDataset data = load_dataset(o.data);
  const TrainConfig config = make_train_config(o.p, data.classes());
  MultiExitNetwork net = build_network(make_network_spec(o.p, data.classes(), data.dims()));

  std::string log = "epoch,lr,mean_loss";
  for (std::size_t k = 1; k <= net.exits(); ++k) log += ",loss_exit_" + std::to_string(k);
  for (std::size_t k = 1; k <= net.exits(); ++k) log += ",count_exit_" + std::to_string(k);
  log += ",train_top1\n";
  train(net, data, config, [&](const EpochLog& e) {
    log += std::to_string(e.epoch) + ',' + format_float(e.lr) + ',' + format_float(e.mean_total_loss);
    for (double v : e.per_exit_mean_loss) log += ',' + format_float(v);
    for (auto n : e.exit_histogram) log += ',' + std::to_string(n);
    log += ',' + format_float(e.train_top1) + '\n';
    if (!o.quiet) {
      out << "epoch " << e.epoch << " lr " << format_float(e.lr) << " loss " << format_float(e.mean_total_loss)
          << " train top1 " << format_float(e.train_top1) << '\n'
          << std::flush;
    }
  });
  save_checkpoint(net, o.checkpoint);
  write_csv(o.common, "train_log.csv", log);
  out << "saved " << o.checkpoint << '\n';
  return kOk;
}

int cmd_eval(EvalOpts& o, std::ostream& out) {
  const MultiExitNetwork net = load_checkpoint(o.checkpoint);
  const LongTailedDataset data = load_dataset(o.data);
  if (data.classes() != net.classes()) {
    throw ConfigError("checkpoint has " + std::to_string(net.classes()) + " classes, dataset " +
                      std::to_string(data.classes()));
  }
  std::optional<LongTailedDataset> train_data;
  if (!o.train_data.empty()) train_data = load_dataset(o.train_data);

  // Split membership comes from the training distribution.
  std::vector<std::size_t> counts = net.class_counts();
  if (counts.empty() && train_data) counts = train_data->class_counts();
  if (counts.empty()) counts = data.class_counts();
  const SplitAssignment splits = split_classes(counts, SplitThresholds{o.many_min, o.few_max});

  const std::size_t k_total = net.exits();
  ExitPolicy policy = ExitPolicy::uniform(k_total, 1.0, o.infer_threshold);
  const LossKind kind = to_loss(o.loss);
  policy.train_thresholds.assign(k_total, resolve_train_threshold(o.train_threshold, kind, net.classes()));
  policy.validate(k_total);

  const auto preds = predict_dataset(net, data, policy, worker_count());
  std::vector<std::size_t> labels_pred;
  labels_pred.reserve(preds.size());
  for (const auto& p : preds) labels_pred.push_back(p.label);
  const SplitAccuracy acc = split_accuracy(labels_pred, data.labels(), splits);
  const FlopsReport flops = flops_report(net, preds);
  const CurvePoint point = curve_point(o.infer_threshold, preds, data.labels(), k_total);

  LossConfig lc;
  lc.kind = kind;
  lc.gamma = o.gamma;
  lc.max_margin = o.max_margin;
  const ExitLoss loss = make_loss_setup(lc, counts).loss;
  const LossStats stats = per_exit_loss_stats(net, train_data ? *train_data : data, loss,
                                              ClassWeights::uniform(net.classes()), policy);

  std::vector<ClassSubset> subsets{{"all", {}}};
  for (std::size_t c = 0; c < net.classes(); ++c) subsets[0].classes.push_back(c);
  for (auto s : {Split::many, Split::medium, Split::few}) {
    auto cls = splits.classes_in(s);
    if (!cls.empty()) subsets.push_back({split_name(s), std::move(cls)});
  }
  const auto hist = confidence_histogram(net, data, subsets, o.bins);

  std::string exits = "index,label,prediction,exit,confidence\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    exits += std::to_string(i) + ',' + std::to_string(data.label(i)) + ',' + std::to_string(p.label) + ',' +
             std::to_string(p.trace.exit_index) + ',' + format_float(p.trace.per_exit_confidence.back()) + '\n';
  }

  write_csv(o.common, "splits.csv", splits_csv(acc));
  write_csv(o.common, "property1.csv", property1_csv(stats));
  write_csv(o.common, "histogram.csv", histogram_csv(hist));
  write_csv(o.common, "exits.csv", exits);

  nlohmann::ordered_json j;
  j["infer_threshold"] = o.infer_threshold;
  j["top1"] = {{"many", optional_json(acc[Split::many])},
               {"medium", optional_json(acc[Split::medium])},
               {"few", optional_json(acc[Split::few])},
               {"all", acc.all}};
  j["mean_flops"] = flops.mean_flops_per_example;
  j["baseline_flops"] = flops.baseline;
  j["relative_flops_percent"] = flops.relative_to_baseline;
  j["per_exit_cumulative_flops"] = flops.per_exit_cumulative_flops;
  j["exit_histogram"] = point.exit_histogram;
  j["property1_strictly_increasing"] = stats.strictly_increasing;
  write_text(output_path(o.common, "summary.json"), j.dump(2) + '\n');

  out << "top1 all " << format_float(acc.all);
  for (auto s : {Split::many, Split::medium, Split::few}) {
    out << ' ' << split_name(s) << ' ' << (acc[s] ? format_float(*acc[s]) : std::string("absent"));
  }
  out << "\nmean flops " << format_float(flops.mean_flops_per_example) << " ("
      << format_float(flops.relative_to_baseline) << "% vs baseline)\n";
  return kOk;
}

int cmd_sweep(SweepOpts& o, std::ostream& out) {
  const MultiExitNetwork net = load_checkpoint(o.checkpoint);
  const LongTailedDataset data = load_dataset(o.data);
  std::vector<double> grid;
  if (o.grid == "auto") {
    grid = default_grid(to_loss(o.loss), net.classes());
  } else {
    for (const auto& item : split_list(o.grid, ',')) {
      if (!item.empty()) grid.push_back(to_double(item, "--grid"));
    }
  }
  if (grid.empty()) throw ConfigError("--grid: threshold grid is empty");
  const auto curve = accuracy_flop_curve(net, data, grid, worker_count());
  write_csv(o.common, "curve.csv", curve_csv(curve, net.exits()));

  // Highest accuracy; ties go to the cheaper (earlier) point.
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].top1 > curve[best].top1) best = i;
  }
  nlohmann::ordered_json j;
  j["best_s"] = curve[best].s;
  j["best_top1"] = curve[best].top1;
  j["best_mean_flops"] = curve[best].mean_flops;
  write_text(output_path(o.common, "sweep.json"), j.dump(2) + '\n');
  out << "best s " << format_float(curve[best].s) << " top1 " << format_float(curve[best].top1)
      << " mean flops " << format_float(curve[best].mean_flops) << '\n';
  return kOk;
}

int cmd_report(ReportOpts& o, std::ostream& out) {
  const MultiExitNetwork net = load_checkpoint(o.checkpoint);
  const FlopTable t = flops_of(net);
  std::string csv = "block,layer,flops\n";
  for (const auto& l : t.layers) csv += l.block + ',' + l.layer + ',' + std::to_string(l.flops) + '\n';
  std::string exits = "exit,cumulative_flops\n";
  for (std::size_t k = 0; k < t.per_exit_cumulative.size(); ++k) {
    exits += std::to_string(k + 1) + ',' + std::to_string(t.per_exit_cumulative[k]) + '\n';
  }
  write_csv(o.common, "flops.csv", csv);
  write_csv(o.common, "flops_exits.csv", exits);

  const auto& spec = net.spec();
  out << "classes " << spec.classes << ", input " << shape_str(spec.input.shape()) << ", exits " << spec.exits()
      << ", widths";
  for (auto w : spec.widths) out << ' ' << w;
  out << '\n';
  for (std::size_t k = 0; k < t.per_exit_cumulative.size(); ++k) {
    out << "exit " << k + 1 << ": " << t.per_exit_cumulative[k] << " FLOPs\n";
  }
  out << "baseline (no early exit): " << t.baseline << " FLOPs\n";
  return kOk;
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
    return a == flag || a.rfind(flag + "=", 0) == 0;
  });
}

std::optional<std::string> flag_value(const std::vector<std::string>& args, const std::string& flag) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == flag && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind(flag + "=", 0) == 0) return args[i].substr(flag.size() + 1);
  }
  return std::nullopt;
}

}  // namespace

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Early-exit training and evaluation on long-tailed data", "elf_cli"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  GenOpts gen;
  auto* g = app.add_subcommand("gen-data", "Write long-tailed train and balanced val/eval ELFD files");
  add_common(g, gen.common);
  g->add_option("--seed", gen.p.seed, "Run seed");
  g->add_option("--classes", gen.p.classes, "Number of classes");
  g->add_option("--channels", gen.channels, "Input channels");
  g->add_option("--height", gen.height, "Input height");
  g->add_option("--width", gen.width, "Input width");
  g->add_option("--n", gen.p.n, "Examples in the largest class (and per class in the balanced source)");
  g->add_option("--ratio", gen.p.ratio, "Imbalance ratio n_max / n_min (>= 1)");
  g->add_option("--sigma", gen.p.sigma, "Per-element noise standard deviation");
  g->add_option("--mean-scale", gen.p.mean_scale, "Standard deviation of class-mean elements");
  g->add_option("--val-per-class", gen.p.val_per_class, "Balanced validation examples per class (0 skips)");
  g->add_option("--eval-per-class", gen.p.eval_per_class, "Balanced evaluation examples per class");

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "Train a multi-exit network; writes a checkpoint and train_log.csv");
  add_common(t, tr.common);
  t->add_option("--seed", tr.p.seed, "Run seed (initialization and shuffling)");
  t->add_option("--data", tr.data, "Training set (ELFD)");
  t->add_option("--checkpoint", tr.checkpoint, "Output checkpoint path");
  t->add_option("--exits", tr.p.exits, "Number of exits K (one backbone segment per exit)");
  t->add_option("--widths", tr.p.widths, "Comma-separated segment widths, or auto (16, 32, 64, ...)");
  t->add_option("--epochs", tr.p.epochs, "Training epochs");
  t->add_option("--batch", tr.p.batch, "Mini-batch size");
  t->add_option("--lr", tr.p.lr, "Initial learning rate");
  t->add_option("--momentum", tr.p.momentum, "SGD momentum");
  t->add_option("--wd", tr.p.wd, "Weight decay");
  t->add_option("--warmup", tr.p.warmup, "Linear warmup epochs");
  t->add_option("--lr-decay", tr.p.lr_decay,
                "epoch:factor list, none, or auto (x0.1 at 80% and 90% of epochs)");
  t->add_option("--loss", tr.p.loss, "Exit loss: ce, focal or ldam")->check(CLI::IsMember({"ce", "focal", "ldam"}));
  t->add_option("--gamma", tr.p.gamma, "Focal loss gamma");
  t->add_option("--max-margin", tr.p.max_margin, "LDAM margin of the rarest class");
  t->add_option("--beta", tr.p.beta, "Effective-number beta for reweighting");
  t->add_option("--drw-epoch", tr.p.drw_epoch, "Delayed reweighting switch epoch, none, or auto (80% of epochs)");
  t->add_option("--train-threshold", tr.p.train_threshold, "Training exit threshold t, or auto (0.9; 2/c for ldam)");
  t->add_flag("--quiet", tr.quiet, "Do not print per-epoch progress");

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint; writes split, property, histogram and exit CSVs");
  add_common(e, ev.common);
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint to evaluate");
  e->add_option("--data", ev.data, "Balanced evaluation set (ELFD)");
  e->add_option("--train-data", ev.train_data, "Training set for the exit-loss statistics (empty: use --data)")
      ->default_str("\"\"");
  e->add_option("--infer-threshold", ev.infer_threshold, "Inference exit threshold s for every exit");
  e->add_option("--train-threshold", ev.train_threshold, "Training exit threshold t for the loss statistics, or auto");
  e->add_option("--loss", ev.loss, "Exit loss for the loss statistics: ce, focal or ldam")
      ->check(CLI::IsMember({"ce", "focal", "ldam"}));
  e->add_option("--gamma", ev.gamma, "Focal loss gamma");
  e->add_option("--max-margin", ev.max_margin, "LDAM margin of the rarest class");
  e->add_option("--many-min", ev.many_min, "Classes with more training examples than this are Many");
  e->add_option("--few-max", ev.few_max, "Classes with fewer training examples than this are Few");
  e->add_option("--bins", ev.bins, "Confidence histogram bins");

  SweepOpts sw;
  auto* s = app.add_subcommand("sweep", "Accuracy-FLOP curve over inference thresholds; writes curve.csv");
  add_common(s, sw.common);
  s->add_option("--checkpoint", sw.checkpoint, "Checkpoint to evaluate");
  s->add_option("--data", sw.data, "Balanced validation set (ELFD)");
  s->add_option("--grid", sw.grid, "Comma-separated thresholds, or auto (depends on --loss)");
  s->add_option("--loss", sw.loss, "Loss the model was trained with; selects the auto grid")
      ->check(CLI::IsMember({"ce", "focal", "ldam"}));

  ReportOpts rp;
  auto* r = app.add_subcommand("report", "FLOP table of a checkpoint; writes flops.csv and flops_exits.csv");
  add_common(r, rp.common);
  r->add_option("--checkpoint", rp.checkpoint, "Checkpoint to describe");

  std::vector<std::string> args = args_in;
  try {
    // Config values go in only where the command line did not set the key.
    if (const auto cfg = flag_value(args, "--config"); cfg && !args.empty()) {
      const auto bytes = io::read_file(*cfg);
      CLI::App* sub = app.get_subcommand(args[0]);
      std::vector<std::string> extra;
      for (const auto& kv : config_to_args(std::string(bytes.begin(), bytes.end()))) {
        const std::string key = kv.substr(0, kv.find('='));
        if (key == "--config" || sub->get_option_no_throw(key) == nullptr) {
          throw ConfigError("config file " + *cfg + ": unknown key '" + key.substr(2) + "' for " + args[0]);
        }
        if (!has_flag(args, key)) extra.push_back(kv);
      }
      args.insert(args.begin() + 1, extra.begin(), extra.end());
    }
  } catch (const CLI::OptionNotFound&) {
    err << "unknown command '" << args[0] << "'\n";
    return kUsage;
  } catch (const IoError& ex) {
    err << "error: " << ex.what() << '\n';
    return kIo;
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (g->parsed()) {
      apply_simd(gen.common);
      return cmd_gen_data(gen, out);
    }
    if (t->parsed()) {
      apply_simd(tr.common);
      return cmd_train(tr, out);
    }
    if (e->parsed()) {
      apply_simd(ev.common);
      return cmd_eval(ev, out);
    }
    if (s->parsed()) {
      apply_simd(sw.common);
      return cmd_sweep(sw, out);
    }
    apply_simd(rp.common);
    return cmd_report(rp, out);
  } catch (const NumericalError& ex) {
    err << "numerical error: " << ex.what() << '\n';
    return kNumerical;
  } catch (const FormatError& ex) {
    err << "format error: " << ex.what() << '\n';
    return kIo;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const std::logic_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  }
}

}  // namespace elf::app
