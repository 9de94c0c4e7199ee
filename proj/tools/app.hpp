// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Kept in a library so tests can drive it in-process.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "elf/data.hpp"
#include "elf/network.hpp"

namespace elf::app {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kNumerical = 2,
  kIo = 3,
};

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses flat `key=value` config text ('#' starts a comment) into
/// `--key=value` arguments. Throws ConfigError on a malformed line.
std::vector<std::string> config_to_args(const std::string& text);

/// Independent stream seed derived from a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// ---- shared by the commands and the acceptance suite ----

struct GenParams {
  std::size_t classes = 10;
  InputDims dims{1, 5, 5};
  std::size_t n = 5000;  // head-class size
  double ratio = 100.0;
  double sigma = 2.0;
  double mean_scale = 1.3;
  std::size_t val_per_class = 100;
  std::size_t eval_per_class = 500;
  std::uint64_t seed = 0;
};

struct GeneratedData {
  LongTailedDataset train;
  LongTailedDataset val;
  LongTailedDataset eval;
};

/// Long-tailed training set subsampled from a balanced draw, plus balanced
/// validation and evaluation sets from the same class means.
GeneratedData generate_data(const GenParams& p);

struct TrainParams {
  std::size_t exits = 3;
  std::string widths = "auto";  // "auto": 16, 32, 64, ... doubling per segment
  std::size_t epochs = 40;
  std::size_t batch = 64;
  double lr = 0.1;
  double momentum = 0.9;
  double wd = 2e-4;
  std::size_t warmup = 5;
  std::string lr_decay = "auto";  // "auto": x0.1 at 80% and 90% of epochs; "none"; or "e:f,e:f"
  std::string loss = "ce";
  double gamma = 0.5;
  double max_margin = 0.5;
  double beta = 0.9999;
  std::string drw_epoch = "auto";         // "auto": 80% of epochs; "none" disables reweighting
  std::string train_threshold = "auto";  // "auto": 0.9 for ce and focal, 2/c for ldam
  std::uint64_t seed = 0;
};

std::vector<std::size_t> resolve_widths(const std::string& spec, std::size_t exits);
double resolve_train_threshold(const std::string& spec, LossKind loss, std::size_t classes);
TrainConfig make_train_config(const TrainParams& p, std::size_t classes);
NetworkSpec make_network_spec(const TrainParams& p, std::size_t classes, InputDims dims);

/// Default inference-threshold grid: 0.5..0.95 for ce and focal,
/// {1.5..1.75}/c for ldam, step 0.05.
std::vector<double> default_grid(LossKind loss, std::size_t classes);

}  // namespace elf::app
