// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference helpers shared by the unit tests and the acceptance suite.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "elf/exits.hpp"
#include "elf/layers.hpp"
#include "elf/network.hpp"

namespace elf::testing {

inline constexpr double kStep = 1e-5;
inline constexpr double kRelTol = 1e-4;
// Below this magnitude both gradients are treated as zero; central differences
// of O(1) objectives carry roundoff of roughly 1e-11.
inline constexpr double kNoiseFloor = 1e-7;

struct GradReport {
  double worst = 0.0;  // largest relative error seen
  std::size_t checked = 0;
  std::string where;

  bool ok() const { return worst < kRelTol; }
  void merge(const GradReport& o) {
    if (o.worst > worst) {
      worst = o.worst;
      where = o.where;
    }
    checked += o.checked;
  }
};

inline double rel_error(double analytic, double numeric) {
  if (std::abs(analytic) < kNoiseFloor && std::abs(numeric) < kNoiseFloor) return 0.0;
  return std::abs(analytic - numeric) / (std::abs(analytic) + 1e-12);
}

/// Compares `analytic` with central differences of `f` over `x` in place.
inline GradReport check_gradient(std::span<double> x, std::span<const double> analytic,
                                 const std::function<double()>& f, const std::string& label) {
  GradReport r;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + kStep;
    const double up = f();
    x[i] = saved - kStep;
    const double down = f();
    x[i] = saved;
    const double e = rel_error(analytic[i], (up - down) / (2 * kStep));
    if (e > r.worst) {
      r.worst = e;
      r.where = label + "[" + std::to_string(i) + "]";
    }
    ++r.checked;
  }
  return r;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

/// Keeps values away from the relu kink so central differences do not straddle it.
inline void push_off_zero(Tensor& t, double gap = 1e-2) {
  for (auto& v : t.data()) {
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
}

/// Checks input and parameter gradients of a layer for the objective sum(r * layer(x)).
inline GradReport check_layer(Layer& layer, Tensor x, std::uint64_t seed, const std::string& label) {
  std::mt19937_64 rng(seed);
  const Tensor probe = layer.infer(x);
  const Tensor r = random_tensor(probe.shape(), rng);
  auto objective = [&] {
    const Tensor y = layer.infer(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    return s;
  };
  if (auto* p = layer.params()) p->zero_grad();
  layer.forward(x);
  const Tensor dx = layer.backward(r);

  GradReport rep = check_gradient(x.data(), dx.data(), objective, label + ".input");
  if (auto* p = layer.params()) {
    rep.merge(check_gradient(p->weights.data(), p->grad_weights.data(), objective, label + ".weights"));
    rep.merge(check_gradient(p->bias.data(), p->grad_bias.data(), objective, label + ".bias"));
  }
  return rep;
}

using LossFn = std::function<double(std::span<const double>, std::span<double>)>;

/// Checks d loss / d logits for a single-example loss.
inline GradReport check_loss(const LossFn& loss, std::vector<double> logits, const std::string& label) {
  std::vector<double> grad(logits.size());
  loss(logits, grad);
  return check_gradient(logits, grad, [&] { return loss(logits, {}); }, label);
}

/// Sum of ELF losses over a batch, evaluated through the const inference path.
inline double elf_objective(const MultiExitNetwork& net, const Tensor& x, const std::vector<std::uint32_t>& labels,
                            const ExitLoss& loss, const ClassWeights& w, const ExitPolicy& policy) {
  std::vector<Tensor> logits;
  Tensor h = x;
  for (std::size_t k = 0; k < net.exits(); ++k) {
    h = net.infer_segment(k, h);
    logits.push_back(net.infer_head(k, h));
  }
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    std::vector<std::span<const double>> rows;
    for (const auto& l : logits) rows.push_back(l.row(b));
    total += elf_loss(rows, labels[b], loss, w, policy).total_loss;
  }
  return total;
}

/// Analytic parameter gradients of elf_objective via forward_all/backward_all.
inline void elf_backprop(MultiExitNetwork& net, const Tensor& x, const std::vector<std::uint32_t>& labels,
                         const ExitLoss& loss, const ClassWeights& w, const ExitPolicy& policy) {
  net.zero_grad();
  const auto logits = net.forward_all(x);
  std::vector<Tensor> grads;
  for (const auto& l : logits) grads.emplace_back(l.shape());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    std::vector<std::span<const double>> rows;
    for (const auto& l : logits) rows.push_back(l.row(b));
    const auto res = elf_loss(rows, labels[b], loss, w, policy);
    for (std::size_t k = 0; k < logits.size(); ++k) {
      std::copy(res.grads[k].begin(), res.grads[k].end(), grads[k].row(b).begin());
    }
  }
  net.backward_all(grads);
}

inline GradReport check_network(MultiExitNetwork& net, const Tensor& x, const std::vector<std::uint32_t>& labels,
                                const ExitLoss& loss, const ClassWeights& w, const ExitPolicy& policy) {
  elf_backprop(net, x, labels, loss, w, policy);
  auto f = [&] { return elf_objective(net, x, labels, loss, w, policy); };
  GradReport rep;
  for (auto* p : net.parameters()) {
    rep.merge(check_gradient(p->weights.data(), p->grad_weights.data(), f, p->name + ".weights"));
    rep.merge(check_gradient(p->bias.data(), p->grad_bias.data(), f, p->name + ".bias"));
  }
  return rep;
}

/// Makes head k emit `logits` for every input: the classifier's weights are
/// zeroed and its bias carries the logits.
inline void pin_head_logits(MultiExitNetwork& net, std::size_t k, std::span<const double> logits) {
  auto& head = net.head(k);
  LayerParams* dense = head.layer(head.size() - 1).params();
  dense->weights.fill(0.0);
  std::copy(logits.begin(), logits.end(), dense->bias.data().begin());
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("elf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace elf::testing
