// SPDX-License-Identifier: Apache-2.0
#include "elf/inference.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <thread>

#include "elf/error.hpp"

namespace elf {

namespace {

constexpr std::size_t kChunk = 256;

void check_policy(const MultiExitNetwork& net, const ExitPolicy& policy) {
  if (policy.infer_thresholds.size() != net.exits()) {
    throw ConfigError("predict: policy has " + std::to_string(policy.infer_thresholds.size()) +
                      " inference thresholds for " + std::to_string(net.exits()) + " exits");
  }
}

// Rows `keep` of a batch-major tensor.
Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& keep) {
  Shape shape = t.shape();
  const std::size_t stride = t.size() / shape[0];
  shape[0] = keep.size();
  std::vector<double> out(keep.size() * stride);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(t.ptr() + keep[i] * stride, stride, out.data() + i * stride);
  }
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace

std::vector<std::uint64_t> cumulative_exit_flops(const MultiExitNetwork& net) {
  std::vector<std::uint64_t> out;
  std::uint64_t backbone = 0;
  for (std::size_t k = 0; k < net.exits(); ++k) {
    backbone += net.segment_flops(k);
    out.push_back(backbone + net.head_flops(k));
  }
  return out;
}

std::vector<Prediction> predict_batch(const Tensor& x, const MultiExitNetwork& net, const ExitPolicy& policy) {
  check_policy(net, policy);
  const auto& in = net.spec().input;
  const Shape per_example = in.shape();
  if (x.rank() != 4 || Shape(x.shape().begin() + 1, x.shape().end()) != per_example) {
    throw DimensionError("predict: expected [batch x " + shape_str(per_example).substr(1) + ", got " +
                         shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t k_total = net.exits();
  const auto cumulative = cumulative_exit_flops(net);

  std::vector<Prediction> out(n);
  std::vector<std::size_t> alive(n);  // original indices of rows in `h`
  std::iota(alive.begin(), alive.end(), std::size_t{0});
  Tensor h = x;
  std::uint64_t evaluated = 0;

  for (std::size_t k = 0; k < k_total && !alive.empty(); ++k) {
    h = net.infer_segment(k, h);
    evaluated += net.segment_flops(k);
    const bool last = k + 1 == k_total;
    const double s = policy.infer_thresholds[k];
    if (!last && s >= 1.0) continue;

    const Tensor logits = net.infer_head(k, h);
    evaluated += net.head_flops(k);
    std::vector<std::size_t> keep;
    std::vector<std::size_t> still_alive;
    for (std::size_t r = 0; r < alive.size(); ++r) {
      Prediction& p = out[alive[r]];
      auto probs = softmax_probs(logits.row(r));
      p.trace.per_exit_confidence.push_back(*std::max_element(probs.begin(), probs.end()));
      if (last || infer_exit_criterion(probs, s)) {
        p.label = argmax(probs);
        p.probs = std::move(probs);
        p.trace.exit_index = k + 1;
        p.trace.flops = cumulative[k];
        p.trace.evaluated_flops = evaluated;
      } else {
        keep.push_back(r);
        still_alive.push_back(alive[r]);
      }
    }
    if (keep.size() != alive.size()) {
      alive = std::move(still_alive);
      if (!alive.empty()) h = select_rows(h, keep);
    }
  }
  return out;
}

Prediction predict(const Tensor& x, const MultiExitNetwork& net, const ExitPolicy& policy) {
  const Shape per_example = net.spec().input.shape();
  if (x.shape() == per_example) {
    Shape batched{1};
    batched.insert(batched.end(), per_example.begin(), per_example.end());
    Tensor one = x;
    one.reshape(std::move(batched));
    return std::move(predict_batch(one, net, policy).front());
  }
  if (x.rank() == 4 && x.dim(0) != 1) throw DimensionError("predict: expected a single example");
  return std::move(predict_batch(x, net, policy).front());
}

std::vector<Prediction> predict_dataset(const MultiExitNetwork& net, const LongTailedDataset& data,
                                        const ExitPolicy& policy, std::size_t threads) {
  check_policy(net, policy);
  if (data.classes() != net.classes()) {
    throw ConfigError("evaluation set has " + std::to_string(data.classes()) + " classes, network " +
                      std::to_string(net.classes()));
  }
  if (data.dims() != net.spec().input) {
    throw ConfigError("evaluation set input " + shape_str(data.dims().shape()) + " does not match network " +
                      shape_str(net.spec().input.shape()));
  }
  const std::size_t n = data.size();
  std::vector<Prediction> out(n);
  if (n == 0) return out;

  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  auto run = [&](std::size_t first_chunk, std::size_t last_chunk) {
    for (std::size_t c = first_chunk; c < last_chunk; ++c) {
      const std::size_t lo = c * kChunk;
      const std::size_t hi = std::min(n, lo + kChunk);
      std::vector<std::size_t> ids(hi - lo);
      std::iota(ids.begin(), ids.end(), lo);
      auto preds = predict_batch(data.batch(ids), net, policy);
      std::move(preds.begin(), preds.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, chunks);
  if (workers == 1) {
    run(0, chunks);
    return out;
  }
  // Every chunk writes a disjoint slice of `out`, so the merge is the identity
  // and the result does not depend on the worker count.
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        run(w * chunks / workers, (w + 1) * chunks / workers);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace elf
