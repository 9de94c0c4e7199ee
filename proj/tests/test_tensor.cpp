// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>

#include "elf/error.hpp"
#include "elf/layers.hpp"
#include "elf/tensor.hpp"
#include "support.hpp"

using namespace elf;
using elf::testing::check_layer;
using elf::testing::push_off_zero;
using elf::testing::random_tensor;

namespace {

Dense make_dense(std::vector<double> w, std::size_t m, std::size_t n, std::vector<double> b) {
  Dense d("d", m, n);
  d.params()->weights = Tensor({m, n}, std::move(w));
  d.params()->bias = Tensor({n}, std::move(b));
  return d;
}

Conv2d make_conv(std::size_t cin, std::size_t cout, ConvGeometry g, double w_fill) {
  Conv2d c("c", cin, cout, g);
  c.params()->weights.fill(w_fill);
  c.params()->bias.fill(0.0);
  return c;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(shape_str(t.shape()) == "[2x3]");
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  t.reshape({3, 2});
  CHECK(t.dim(0) == 3);
  CHECK_THROWS_AS(t.reshape({4, 2}), DimensionError);
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("tensor serialization round trip") {
  std::mt19937_64 rng(3);
  const Tensor t = random_tensor({2, 3, 4}, rng);
  io::ByteWriter w;
  write_tensor(w, t);
  CHECK(w.bytes().size() == 4 + 4 + 4 + 3 * 4 + 24 * 8);
  io::ByteReader r(w.bytes());
  CHECK(read_tensor(r) == t);
  r.expect_end();

  auto cut = w.bytes();
  cut.resize(cut.size() - 3);
  io::ByteReader rc(cut);
  CHECK_THROWS_AS(read_tensor(rc), FormatError);
}

TEST_CASE("dense forward") {
  SUBCASE("identity weights") {
    auto d = make_dense({1, 0, 0, 1}, 2, 2, {0, 0});
    CHECK(d.infer(Tensor({1, 2}, {1, 2})) == Tensor({1, 2}, {1, 2}));
  }
  SUBCASE("hand multiply") {
    auto d = make_dense({2, 3, 4, 5}, 2, 2, {1, 1});
    CHECK(d.infer(Tensor({1, 2}, {1, 1})) == Tensor({1, 2}, {7, 9}));
  }
  SUBCASE("zero input passes bias") {
    auto d = make_dense({2, 3, 4, 5}, 2, 2, {-1.5, 4.25});
    CHECK(d.infer(Tensor({1, 2}, {0, 0})) == Tensor({1, 2}, {-1.5, 4.25}));
  }
  SUBCASE("shape mismatch names both shapes") {
    auto d = make_dense({1, 0, 0, 1}, 2, 2, {0, 0});
    try {
      d.infer(Tensor({1, 3}, {1, 2, 3}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[1x3]") != std::string::npos);
      CHECK(msg.find("[2x2]") != std::string::npos);
    }
  }
}

TEST_CASE("conv2d forward") {
  const Tensor ones({1, 1, 3, 3}, 1.0);
  SUBCASE("valid 3x3 of ones") {
    auto c = make_conv(1, 1, {3, 1, 0}, 1.0);
    CHECK(c.infer(ones) == Tensor({1, 1, 1, 1}, {9}));
  }
  SUBCASE("padded 3x3 of ones") {
    auto c = make_conv(1, 1, {3, 1, 1}, 1.0);
    CHECK(c.infer(ones) == Tensor({1, 1, 3, 3}, {4, 6, 4, 6, 9, 6, 4, 6, 4}));
  }
  SUBCASE("delta kernel reproduces input") {
    std::mt19937_64 rng(5);
    const Tensor x = random_tensor({2, 3, 5, 5}, rng);
    Conv2d c("c", 3, 3, {3, 1, 1});
    c.params()->weights.fill(0.0);
    c.params()->bias.fill(0.0);
    for (std::size_t ch = 0; ch < 3; ++ch) c.params()->weights[((ch * 3 + ch) * 3 + 1) * 3 + 1] = 1.0;
    CHECK(c.infer(x) == x);
  }
  SUBCASE("bias per output channel") {
    Conv2d c("c", 1, 2, {3, 1, 1});
    c.params()->weights.fill(0.0);
    c.params()->bias = Tensor({2}, {0.5, -2.0});
    const Tensor y = c.infer(ones);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(y[i] == 0.5);
      CHECK(y[9 + i] == -2.0);
    }
  }
  SUBCASE("stride 2 output extent") {
    auto c = make_conv(1, 1, {3, 2, 1}, 1.0);
    CHECK(c.infer(Tensor({1, 1, 5, 5}, 1.0)).shape() == Shape{1, 1, 3, 3});
    CHECK(c.output_shape({1, 9, 9}) == Shape{1, 5, 5});
  }
  SUBCASE("non-integral output extent") {
    auto c = make_conv(1, 1, {3, 2, 1}, 1.0);
    CHECK_THROWS_AS(c.infer(Tensor({1, 1, 4, 4}, 1.0)), ConfigError);
    CHECK_THROWS_AS(ConvGeometry({3, 2, 1}).output_extent(4), ConfigError);
  }
  SUBCASE("flop count") {
    Conv2d c("c", 1, 4, {3, 1, 1});
    CHECK(c.flops({1, 8, 8}) == 4608);
    Dense d("d", 10, 5);
    CHECK(d.flops({10}) == 100);
  }
}

TEST_CASE("relu, avg_pool and softmax values") {
  CHECK(relu(Tensor({3}, {-1, 0, 2})) == Tensor({3}, {0, 0, 2}));
  CHECK(relu(Tensor({2, 2}, -3.0)) == Tensor({2, 2}, 0.0));
  CHECK(relu(Tensor({2}, {0.5, 7})) == Tensor({2}, {0.5, 7}));

  CHECK(avg_pool(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})) == Tensor({1, 1}, {2.5}));
  CHECK(avg_pool(Tensor({2, 3, 4, 4}, 1.75)) == Tensor({2, 3}, 1.75));
  CHECK(avg_pool(Tensor({1, 1, 1, 1}, {-0.3})) == Tensor({1, 1}, {-0.3}));

  const Tensor a = softmax(Tensor({1, 2}, {0, 0}));
  CHECK(a[0] == 0.5);
  CHECK(a[1] == 0.5);
  const Tensor big = softmax(Tensor({1, 2}, {1000, 1000}));
  CHECK(big[0] == 0.5);
  CHECK(big.all_finite());
  const Tensor l2 = softmax(Tensor({1, 2}, {std::log(2.0), 0}));
  CHECK(l2[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(l2[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax properties over random rows") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor z = random_tensor({4, 7}, rng, 5.0);
    const Tensor p = softmax(z);
    Tensor zs = z;
    const double c = shift(rng);
    for (auto& v : zs.data()) v += c;
    const Tensor ps = softmax(zs);
    for (std::size_t b = 0; b < 4; ++b) {
      double sum = 0.0;
      for (double v : p.row(b)) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - ps[i]) < 1e-12);
  }
}

TEST_CASE("backward gates and identities") {
  Relu r;
  CHECK_THROWS_AS(r.backward(Tensor({2}, {5, 5})), StateError);
  r.forward(Tensor({2}, {-1, 2}));
  CHECK(r.backward(Tensor({2}, {5, 5})) == Tensor({2}, {0, 5}));

  auto d = make_dense({1, 0, 0, 1}, 2, 2, {0, 0});
  CHECK_THROWS_AS(d.backward(Tensor({1, 2}, {1, 1})), StateError);
  d.forward(Tensor({1, 2}, {3, 4}));
  CHECK(d.backward(Tensor({1, 2}, {0.25, -2})) == Tensor({1, 2}, {0.25, -2}));

  Conv2d c("c", 1, 1, {3, 1, 1});
  CHECK_THROWS_AS(c.backward(Tensor({1, 1, 3, 3}, 1.0)), StateError);
}

TEST_CASE("parameter gradients accumulate until zeroed") {
  auto d = make_dense({1, 2, 3, 4}, 2, 2, {0, 0});
  const Tensor x({1, 2}, {1, -1});
  const Tensor up({1, 2}, {1, 1});
  d.forward(x);
  d.backward(up);
  const Tensor once = d.params()->grad_weights;
  d.forward(x);
  d.backward(up);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(d.params()->grad_weights[i] == 2 * once[i]);
  d.params()->zero_grad();
  CHECK(d.params()->grad_weights == Tensor({2, 2}, 0.0));
  CHECK(d.params()->momentum_weights.shape() == d.params()->weights.shape());
  CHECK(d.params()->grad_bias.shape() == d.params()->bias.shape());
}

TEST_CASE("layer gradients match central differences") {
  std::mt19937_64 rng(21);
  SUBCASE("dense") {
    Dense d("d", 6, 4);
    d.params()->weights = random_tensor({6, 4}, rng);
    d.params()->bias = random_tensor({4}, rng);
    const auto rep = check_layer(d, random_tensor({3, 6}, rng), 1, "dense");
    INFO(rep.where);
    CHECK(rep.ok());
  }
  SUBCASE("conv stride 1") {
    Conv2d c("c", 2, 3, {3, 1, 1});
    c.params()->weights = random_tensor({3, 2, 3, 3}, rng, 0.5);
    c.params()->bias = random_tensor({3}, rng);
    const auto rep = check_layer(c, random_tensor({2, 2, 5, 5}, rng), 2, "conv");
    INFO(rep.where);
    CHECK(rep.ok());
  }
  SUBCASE("conv stride 2") {
    Conv2d c("c", 2, 3, {3, 2, 1});
    c.params()->weights = random_tensor({3, 2, 3, 3}, rng, 0.5);
    c.params()->bias = random_tensor({3}, rng);
    const auto rep = check_layer(c, random_tensor({2, 2, 7, 7}, rng), 3, "conv_s2");
    INFO(rep.where);
    CHECK(rep.ok());
  }
  SUBCASE("relu") {
    Relu r;
    Tensor x = random_tensor({3, 8}, rng);
    push_off_zero(x);
    const auto rep = check_layer(r, x, 4, "relu");
    CHECK(rep.ok());
  }
  SUBCASE("avg_pool") {
    AvgPool p;
    const auto rep = check_layer(p, random_tensor({2, 3, 4, 5}, rng), 5, "avg_pool");
    CHECK(rep.ok());
  }
}

TEST_CASE("forward and backward are bit-deterministic") {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({4, 2, 5, 5}, rng);
  const Tensor up = random_tensor({4, 3, 5, 5}, rng);
  auto run = [&] {
    Conv2d c("c", 2, 3, {3, 1, 1});
    std::mt19937_64 wr(9);
    c.params()->weights = random_tensor({3, 2, 3, 3}, wr);
    c.forward(x);
    const Tensor dx = c.backward(up);
    return std::make_pair(dx, c.params()->grad_weights);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
