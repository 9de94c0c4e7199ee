// SPDX-License-Identifier: Apache-2.0
#include "elf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "elf/error.hpp"

namespace elf {

namespace {

constexpr std::size_t kBatch = 256;

void table_rows(FlopTable& t, const std::string& block, const Sequential& seq, Shape shape) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Layer& l = seq.layer(i);
    const LayerParams* p = l.params();
    t.layers.push_back({block, p ? p->name : std::string(l.kind()), l.flops(shape)});
    shape = l.output_shape(shape);
  }
}

// Logits of every exit for a batch, without early termination.
std::vector<Tensor> all_exit_logits(const MultiExitNetwork& net, const Tensor& x) {
  std::vector<Tensor> logits;
  Tensor h = x;
  for (std::size_t k = 0; k < net.exits(); ++k) {
    h = net.infer_segment(k, h);
    logits.push_back(net.infer_head(k, h));
  }
  return logits;
}

template <class Fn>
void for_each_batch(const LongTailedDataset& data, Fn&& fn) {
  for (std::size_t lo = 0; lo < data.size(); lo += kBatch) {
    std::vector<std::size_t> ids(std::min(data.size(), lo + kBatch) - lo);
    std::iota(ids.begin(), ids.end(), lo);
    fn(ids, data.batch(ids));
  }
}

void check_data(const MultiExitNetwork& net, const LongTailedDataset& data) {
  if (data.classes() != net.classes()) {
    throw ConfigError("dataset has " + std::to_string(data.classes()) + " classes, network " +
                      std::to_string(net.classes()));
  }
}

}  // namespace

FlopTable flops_of(const MultiExitNetwork& net) {
  FlopTable t;
  Shape shape = net.spec().input.shape();
  std::uint64_t backbone = 0;
  for (std::size_t k = 0; k < net.exits(); ++k) {
    const std::string idx = std::to_string(k + 1);
    table_rows(t, "segment" + idx, net.segment(k), shape);
    shape = net.segment(k).output_shape(shape);
    table_rows(t, "head" + idx, net.head(k), shape);
    t.segment.push_back(net.segment_flops(k));
    t.head.push_back(net.head_flops(k));
    backbone += net.segment_flops(k);
    t.per_exit_cumulative.push_back(backbone + net.head_flops(k));
  }
  t.baseline = t.per_exit_cumulative.back();
  return t;
}

double relative_flops(double mean, double baseline) {
  if (!(baseline > 0.0)) throw ConfigError("relative flops: baseline must be positive");
  return 100.0 * (mean / baseline - 1.0);
}

FlopsReport flops_report(const MultiExitNetwork& net, const std::vector<Prediction>& predictions) {
  FlopsReport r;
  r.per_exit_cumulative_flops = cumulative_exit_flops(net);
  r.baseline = static_cast<double>(r.per_exit_cumulative_flops.back());
  double sum = 0.0;
  for (const auto& p : predictions) sum += static_cast<double>(p.trace.flops);
  r.mean_flops_per_example = predictions.empty() ? 0.0 : sum / static_cast<double>(predictions.size());
  r.relative_to_baseline = relative_flops(r.mean_flops_per_example, r.baseline);
  return r;
}

CurvePoint curve_point(double s, const std::vector<Prediction>& predictions,
                       const std::vector<std::uint32_t>& labels, std::size_t exits) {
  if (predictions.size() != labels.size()) throw DimensionError("curve point: predictions and labels differ in length");
  CurvePoint pt;
  pt.s = s;
  pt.exit_histogram.assign(exits, 0);
  std::size_t correct = 0;
  double flops = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (p.label == labels[i]) ++correct;
    flops += static_cast<double>(p.trace.flops);
    ++pt.exit_histogram.at(p.trace.exit_index - 1);
  }
  if (!predictions.empty()) {
    const double n = static_cast<double>(predictions.size());
    pt.top1 = 100.0 * static_cast<double>(correct) / n;
    pt.mean_flops = flops / n;
  }
  return pt;
}

std::vector<CurvePoint> accuracy_flop_curve(const MultiExitNetwork& net, const LongTailedDataset& eval,
                                            const std::vector<double>& s_grid, std::size_t threads) {
  if (s_grid.empty()) throw ConfigError("accuracy-flop curve: threshold grid is empty");
  std::vector<CurvePoint> out;
  for (double s : s_grid) {
    ExitPolicy policy = ExitPolicy::uniform(net.exits(), 1.0, s);
    policy.validate(net.exits());
    out.push_back(curve_point(s, predict_dataset(net, eval, policy, threads), eval.labels(), net.exits()));
  }
  return out;
}

SplitAccuracy split_accuracy(const std::vector<std::size_t>& predictions,
                             const std::vector<std::uint32_t>& labels, const SplitAssignment& splits) {
  if (predictions.size() != labels.size()) throw DimensionError("split accuracy: predictions and labels differ in length");
  std::array<std::size_t, 3> seen{};
  std::array<std::size_t, 3> hit{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto b = static_cast<std::size_t>(splits.tags.at(labels[i]));
    ++seen[b];
    if (predictions[i] == labels[i]) {
      ++hit[b];
      ++correct;
    }
  }
  SplitAccuracy acc;
  for (std::size_t b = 0; b < 3; ++b) {
    acc.classes[b] = splits.classes_in(static_cast<Split>(b)).size();
    if (acc.classes[b] > 0 && seen[b] > 0) {
      acc.split[b] = 100.0 * static_cast<double>(hit[b]) / static_cast<double>(seen[b]);
    }
  }
  if (!labels.empty()) acc.all = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
  return acc;
}

LossStats per_exit_loss_stats(const MultiExitNetwork& net, const LongTailedDataset& data, const ExitLoss& loss,
                              const ClassWeights& weights, const ExitPolicy& policy) {
  check_data(net, data);
  policy.validate(net.exits());
  const std::size_t k_total = net.exits();
  std::vector<double> sum(k_total, 0.0);
  LossStats st;
  st.groups.resize(k_total);
  for (std::size_t k = 0; k < k_total; ++k) st.groups[k].exit = k + 1;

  for_each_batch(data, [&](const std::vector<std::size_t>& ids, const Tensor& x) {
    const auto logits = all_exit_logits(net, x);
    std::vector<std::span<const double>> rows(k_total);
    for (std::size_t b = 0; b < ids.size(); ++b) {
      for (std::size_t k = 0; k < k_total; ++k) rows[k] = logits[k].row(b);
      const auto r = elf_loss(rows, data.label(ids[b]), loss, weights, policy);
      const std::size_t g = r.trace.exit_index - 1;
      ++st.groups[g].count;
      sum[g] += r.total_loss;
    }
  });

  std::optional<double> prev;
  for (std::size_t k = 0; k < k_total; ++k) {
    auto& g = st.groups[k];
    if (g.count == 0) continue;
    g.mean_loss = sum[k] / static_cast<double>(g.count);
    if (prev && !(g.mean_loss > *prev)) st.strictly_increasing = false;
    prev = g.mean_loss;
  }
  return st;
}

std::vector<HistogramRow> confidence_histogram(const MultiExitNetwork& net, const LongTailedDataset& data,
                                               const std::vector<ClassSubset>& subsets, std::size_t bins) {
  check_data(net, data);
  if (bins < 2) throw ConfigError("confidence histogram: need at least 2 bins");
  std::vector<double> confidence(data.size());
  for_each_batch(data, [&](const std::vector<std::size_t>& ids, const Tensor& x) {
    const Tensor probs = softmax(all_exit_logits(net, x).back());
    for (std::size_t b = 0; b < ids.size(); ++b) confidence[ids[b]] = probs.row(b)[data.label(ids[b])];
  });

  std::vector<HistogramRow> out;
  for (const auto& subset : subsets) {
    std::vector<bool> member(data.classes(), false);
    for (auto c : subset.classes) member.at(c) = true;
    std::vector<std::size_t> counts(bins, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!member[data.label(i)]) continue;
      const auto bin = std::min(bins - 1, static_cast<std::size_t>(confidence[i] * static_cast<double>(bins)));
      ++counts[bin];
      ++total;
    }
    if (total == 0) continue;
    for (std::size_t b = 0; b < bins; ++b) {
      out.push_back({subset.name, static_cast<double>(b) / static_cast<double>(bins),
                     static_cast<double>(b + 1) / static_cast<double>(bins),
                     static_cast<double>(counts[b]) / static_cast<double>(total)});
    }
  }
  return out;
}

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string curve_csv(const std::vector<CurvePoint>& points, std::size_t exits) {
  std::string out = "s,top1,mean_flops";
  for (std::size_t k = 1; k <= exits; ++k) out += ",exit_" + std::to_string(k);
  out += '\n';
  for (const auto& p : points) {
    out += format_float(p.s) + ',' + format_float(p.top1) + ',' + format_float(p.mean_flops);
    for (auto c : p.exit_histogram) out += ',' + std::to_string(c);
    out += '\n';
  }
  return out;
}

std::string splits_csv(const SplitAccuracy& acc) {
  std::string out = "split,classes,top1\n";
  for (auto s : {Split::many, Split::medium, Split::few}) {
    const auto b = static_cast<std::size_t>(s);
    out += std::string(split_name(s)) + ',' + std::to_string(acc.classes[b]) + ',';
    out += acc.split[b] ? format_float(*acc.split[b]) : std::string("absent");
    out += '\n';
  }
  const std::size_t total = acc.classes[0] + acc.classes[1] + acc.classes[2];
  out += "all," + std::to_string(total) + ',' + format_float(acc.all) + '\n';
  return out;
}

std::string property1_csv(const LossStats& stats) {
  std::string out = "exit,count,mean_loss\n";
  for (const auto& g : stats.groups) {
    out += std::to_string(g.exit) + ',' + std::to_string(g.count) + ',';
    out += g.count ? format_float(g.mean_loss) : std::string("absent");
    out += '\n';
  }
  return out;
}

std::string histogram_csv(const std::vector<HistogramRow>& rows) {
  std::string out = "subset,bin_lo,bin_hi,proportion\n";
  for (const auto& r : rows) {
    out += r.subset + ',' + format_float(r.bin_lo) + ',' + format_float(r.bin_hi) + ',' +
           format_float(r.proportion) + '\n';
  }
  return out;
}

}  // namespace elf
