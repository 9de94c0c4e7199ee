// SPDX-License-Identifier: Apache-2.0
#include <optional>

#include "elf/binary_io.hpp"
#include "elf/error.hpp"
#include "elf/network.hpp"

namespace elf {

namespace {

constexpr std::uint32_t kVersion = 1;

NetworkSpec read_spec(io::ByteReader& in) {
  in.expect_magic("ELFC");
  const auto at = in.offset();
  const auto version = in.u32("version");
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), at);

  NetworkSpec spec;
  spec.classes = in.u32("class count");
  spec.input.channels = in.u32("input channels");
  spec.input.height = in.u32("input height");
  spec.input.width = in.u32("input width");
  const auto k_at = in.offset();
  const auto k = in.u32("exit count");
  if (k == 0 || k > 64) throw FormatError("implausible exit count " + std::to_string(k), k_at);
  spec.widths.clear();
  for (std::uint32_t i = 0; i < k; ++i) spec.widths.push_back(in.u32("segment width"));
  const std::uint64_t lo = in.u32("seed");
  const std::uint64_t hi = in.u32("seed");
  spec.seed = lo | (hi << 32);
  return spec;
}

std::vector<std::size_t> read_counts(io::ByteReader& in, std::size_t classes) {
  const auto at = in.offset();
  const auto n = in.u32("class count table size");
  if (n != 0 && n != classes) {
    throw FormatError("class count table has " + std::to_string(n) + " entries for " +
                          std::to_string(classes) + " classes",
                      at);
  }
  std::vector<std::size_t> counts;
  for (std::uint32_t i = 0; i < n; ++i) counts.push_back(in.u32("class count"));
  return counts;
}

void read_params(io::ByteReader& in, MultiExitNetwork& net) {
  for (auto* p : net.parameters()) {
    for (Tensor* dst : {&p->weights, &p->bias}) {
      const char* part = dst == &p->weights ? ".weights" : ".bias";
      const auto at = in.offset();
      Tensor t = read_tensor(in);
      if (t.shape() != dst->shape()) {
        throw FormatError("tensor " + p->name + part + ": checkpoint shape " + shape_str(t.shape()) +
                              " does not match network shape " + shape_str(dst->shape()),
                          at);
      }
      *dst = std::move(t);
    }
  }
  in.expect_end();
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MultiExitNetwork& net) {
  const auto& spec = net.spec();
  io::ByteWriter out;
  out.magic("ELFC");
  out.u32(kVersion);
  out.u32(static_cast<std::uint32_t>(spec.classes));
  out.u32(static_cast<std::uint32_t>(spec.input.channels));
  out.u32(static_cast<std::uint32_t>(spec.input.height));
  out.u32(static_cast<std::uint32_t>(spec.input.width));
  out.u32(static_cast<std::uint32_t>(spec.exits()));
  for (auto w : spec.widths) out.u32(static_cast<std::uint32_t>(w));
  out.u32(static_cast<std::uint32_t>(spec.seed & 0xffffffffu));
  out.u32(static_cast<std::uint32_t>(spec.seed >> 32));
  out.u32(static_cast<std::uint32_t>(net.class_counts().size()));
  for (auto n : net.class_counts()) out.u32(static_cast<std::uint32_t>(n));
  for (const auto* p : net.parameters()) {
    write_tensor(out, p->weights);
    write_tensor(out, p->bias);
  }
  return out.bytes();
}

MultiExitNetwork decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader in(bytes);
  const auto spec_at = in.offset();
  NetworkSpec spec = read_spec(in);
  auto counts = read_counts(in, spec.classes);
  std::optional<MultiExitNetwork> net;
  try {
    net.emplace(spec);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint architecture is invalid: ") + e.what(), spec_at);
  }
  net->set_class_counts(std::move(counts));
  read_params(in, *net);
  return std::move(*net);
}

void save_checkpoint(const MultiExitNetwork& net, const std::string& path) {
  io::write_file(path, encode_checkpoint(net));
}

MultiExitNetwork load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

void load_checkpoint_into(MultiExitNetwork& net, const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader in(bytes);
  const NetworkSpec spec = read_spec(in);
  auto counts = read_counts(in, spec.classes);
  if (!counts.empty() && counts.size() != net.classes()) {
    throw FormatError("checkpoint is for " + std::to_string(spec.classes) + " classes, network has " +
                          std::to_string(net.classes()),
                      0);
  }
  // Parse into a copy of the current parameters so a failure leaves `net` intact.
  std::vector<Tensor> saved;
  for (const auto* p : net.parameters()) {
    saved.push_back(p->weights);
    saved.push_back(p->bias);
  }
  try {
    read_params(in, net);
  } catch (...) {
    std::size_t i = 0;
    for (auto* p : net.parameters()) {
      p->weights = std::move(saved[i++]);
      p->bias = std::move(saved[i++]);
    }
    throw;
  }
  net.set_class_counts(std::move(counts));
}

}  // namespace elf
