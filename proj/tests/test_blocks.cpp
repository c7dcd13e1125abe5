#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <limits>

#include "cevae/blocks.hpp"
#include "test_helpers.hpp"

using namespace cevae;
using namespace cevae::testing;

TEST_CASE("group norm normalizes per group") {
  nn::GroupNorm gn(8);  // default_groups(8) == 8? groups divide channels
  auto x = random_leaf({2, 8, 5, 5}, 11, 3.0, false);
  Tensor y = gn.forward(x)->value;
  // gamma=1, beta=0 at init: per (n, group) mean ~0 and var ~1
  int cg = 8 / gn.groups;
  for (int n = 0; n < 2; ++n)
    for (int g = 0; g < gn.groups; ++g) {
      double mean = 0, var = 0;
      int64_t count = cg * 25;
      for (int c = g * cg; c < (g + 1) * cg; ++c)
        for (int64_t p = 0; p < 25; ++p) mean += y[(n * 8 + c) * 25 + p];
      mean /= static_cast<double>(count);
      for (int c = g * cg; c < (g + 1) * cg; ++c)
        for (int64_t p = 0; p < 25; ++p) {
          double d = y[(n * 8 + c) * 25 + p] - mean;
          var += d * d;
        }
      var /= static_cast<double>(count);
      CHECK(std::fabs(mean) < 1e-10);
      CHECK(std::fabs(var - 1.0) < 1e-3);
    }
}

TEST_CASE("group norm on constant input returns beta") {
  nn::GroupNorm gn(4);
  auto x = make_leaf(Tensor::full({1, 4, 3, 3}, 7.5), false);
  Tensor y = gn.forward(x)->value;
  for (double v : y.data) CHECK(std::fabs(v) < 1e-3);  // beta starts at 0
}

TEST_CASE("batch norm train vs eval statistics") {
  nn::BatchNorm2d bn(3);
  auto x = random_leaf({4, 3, 6, 6}, 5, 2.0, false);
  Tensor rm_before = bn.running_mean->value;
  Tensor train_out = bn.forward(x, true)->value;
  CHECK(max_abs_diff(rm_before, bn.running_mean->value) > 1e-6);  // stats updated
  Tensor rm_after = bn.running_mean->value;
  Tensor eval_out = bn.forward(x, false)->value;
  CHECK(max_abs_diff(rm_after, bn.running_mean->value) == 0.0);  // eval is pure
  CHECK(max_abs_diff(train_out, eval_out) > 1e-6);
  // train-mode output is batch-normalized: overall per-channel mean ~ 0
  for (int c = 0; c < 3; ++c) {
    double mean = 0;
    for (int n = 0; n < 4; ++n)
      for (int64_t p = 0; p < 36; ++p) mean += train_out[(n * 3 + c) * 36 + p];
    CHECK(std::fabs(mean / (4 * 36)) < 1e-10);
  }
}

TEST_CASE("resblock shapes and projection skip") {
  std::mt19937_64 rng(1);
  ResBlock same(BlockConfig{6, 6}, rng);
  auto x = random_leaf({2, 6, 8, 8}, 2, 1.0, false);
  CHECK(same.forward(x)->value.shape == Shape{2, 6, 8, 8});
  CHECK_FALSE(same.has_skip);

  ResBlock proj(BlockConfig{6, 10}, rng);
  CHECK(proj.has_skip);
  CHECK(proj.forward(x)->value.shape == Shape{2, 10, 8, 8});
}

TEST_CASE("resblock residual branch vanishes with zeroed second conv") {
  std::mt19937_64 rng(3);
  ResBlock rb(BlockConfig{4, 4}, rng);
  for (auto& v : rb.conv2.weight->value.data) v = 0;
  for (auto& v : rb.conv2.bias->value.data) v = 0;
  auto x = random_leaf({1, 4, 5, 5}, 4, 1.0, false);
  CHECK(max_abs_diff(rb.forward(x)->value, x->value) == 0.0);
}

TEST_CASE("resblock gradient check") {
  std::mt19937_64 rng(7);
  ResBlock rb(BlockConfig{3, 5}, rng);
  auto x = random_leaf({1, 3, 6, 6}, 8, 1.0, true);
  double err = grad_check([&] { return ops::sum_all(ops::square(rb.forward(x))); }, x, 12);
  CHECK(err < 1e-3);
  err = grad_check([&] { return ops::sum_all(ops::square(rb.forward(x))); }, rb.conv1.weight, 12);
  CHECK(err < 1e-3);
}

TEST_CASE("self-attention rows sum to one and shape is preserved") {
  std::mt19937_64 rng(9);
  SelfAttention sa(8, rng);
  auto x = random_leaf({2, 8, 4, 4}, 10, 1.0, false);
  Var attn;
  Var y = sa.forward(x, &attn);
  CHECK(y->value.shape == x->value.shape);
  // attn: (N, HW, HW), each query row softmax-normalized
  const Tensor& a = attn->value;
  REQUIRE(a.rank() == 3);
  int hw = a.dim(1);
  for (int n = 0; n < a.dim(0); ++n)
    for (int q = 0; q < hw; ++q) {
      double s = 0;
      for (int kk = 0; kk < hw; ++kk) s += a[(n * hw + q) * hw + kk];
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("self-attention residual: zero output projection is identity") {
  std::mt19937_64 rng(12);
  SelfAttention sa(6, rng);
  for (auto& v : sa.out.weight->value.data) v = 0;
  for (auto& v : sa.out.bias->value.data) v = 0;
  auto x = random_leaf({1, 6, 3, 3}, 13, 1.0, false);
  CHECK(max_abs_diff(sa.forward(x)->value, x->value) == 0.0);
}

TEST_CASE("self-attention rejects non-finite input") {
  std::mt19937_64 rng(14);
  SelfAttention sa(4, rng);
  Tensor bad = Tensor::zeros({1, 4, 2, 2});
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sa.forward(make_leaf(bad, false)), Error);
}

TEST_CASE("self-attention gradient check") {
  std::mt19937_64 rng(15);
  SelfAttention sa(4, rng);
  auto x = random_leaf({1, 4, 3, 3}, 16, 1.0, true);
  double err = grad_check([&] { return ops::sum_all(ops::square(sa.forward(x))); }, x, 12);
  CHECK(err < 1e-3);
}

TEST_CASE("downsample halves with ceiling semantics") {
  std::mt19937_64 rng(20);
  Downsample d(3, rng);
  CHECK(d.forward(random_leaf({1, 3, 16, 16}, 21, 1.0, false))->value.shape ==
        Shape{1, 3, 8, 8});
  CHECK(d.forward(random_leaf({1, 3, 9, 9}, 22, 1.0, false))->value.shape == Shape{1, 3, 5, 5});
  CHECK_THROWS_AS(d.forward(random_leaf({1, 3, 1, 1}, 23, 1.0, false)), Error);
}

TEST_CASE("upsample block doubles spatial size") {
  std::mt19937_64 rng(25);
  UpsampleBlock u(BlockConfig{4, 7}, rng);
  CHECK(u.forward(random_leaf({2, 4, 5, 5}, 26, 1.0, false))->value.shape == Shape{2, 7, 10, 10});
}
