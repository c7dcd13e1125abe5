#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cevae/capsules.hpp"
#include "test_helpers.hpp"

using namespace cevae;
using namespace cevae::testing;

TEST_CASE("squash analytic norm points") {
  auto norm_of = [](const Tensor& t) {
    double s = 0;
    for (double v : t.data) s += v * v;
    return std::sqrt(s);
  };
  // |s| = 0 -> 0
  Tensor z = Tensor::zeros({1, 4});
  CHECK(norm_of(squash(make_leaf(z, false), 1)->value) < 1e-4);
  // |s| = 1 -> 0.5
  Tensor one = Tensor::zeros({1, 4});
  one[2] = 1.0;
  CHECK(norm_of(squash(make_leaf(one, false), 1)->value) == doctest::Approx(0.5).epsilon(1e-6));
  // |s| = 3 -> 0.9, direction preserved
  Tensor three = Tensor::zeros({1, 4});
  three[0] = 3.0;
  Tensor sq = squash(make_leaf(three, false), 1)->value;
  CHECK(norm_of(sq) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(sq[0] > 0);
  CHECK(sq[1] == 0.0);
  // arbitrary vector: norm < 1
  auto r = random_leaf({1, 8}, 3, 5.0, false);
  CHECK(norm_of(squash(r, 1)->value) < 1.0);
}

TEST_CASE("one routing iteration from zero logits gives uniform couplings") {
  auto uhat = random_leaf({1, 4, 3, 2, 5}, 7, 1.0, false);  // J=4
  RoutingResult r = route(uhat, 1);
  for (double c : r.couplings->value.data) CHECK(c == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("coupling rows sum to one at every iteration") {
  auto uhat = random_leaf({2, 5, 4, 3, 6}, 9, 1.5, false);
  for (int alpha = 1; alpha <= 4; ++alpha) {
    RoutingResult r = route(uhat, alpha);
    const Tensor& c = r.couplings->value;  // (N,J,I,1,P)
    int n = c.dim(0), j = c.dim(1), i = c.dim(2), p = c.dim(4);
    for (int nn = 0; nn < n; ++nn)
      for (int ii = 0; ii < i; ++ii)
        for (int pp = 0; pp < p; ++pp) {
          double s = 0;
          for (int jj = 0; jj < j; ++jj) s += c[((nn * j + jj) * i + ii) * p + pp];
          CHECK(std::fabs(s - 1.0) < 1e-6);
        }
  }
}

namespace {

// Straight-line routing-by-agreement for J=2, I=2, Ch=2, P=1, N=1.
struct TinyRbA {
  double uhat[2][2][2];  // [j][i][ch]
  double b[2][2] = {{0, 0}, {0, 0}};
  double c[2][2];        // [j][i]
  double v[2][2];        // [j][ch]

  void softmax_over_j() {
    for (int i = 0; i < 2; ++i) {
      double e0 = std::exp(b[0][i]), e1 = std::exp(b[1][i]);
      c[0][i] = e0 / (e0 + e1);
      c[1][i] = e1 / (e0 + e1);
    }
  }
  void weighted_sum_and_squash() {
    for (int j = 0; j < 2; ++j) {
      double s[2] = {0, 0};
      for (int i = 0; i < 2; ++i)
        for (int ch = 0; ch < 2; ++ch) s[ch] += c[j][i] * uhat[j][i][ch];
      double n2 = s[0] * s[0] + s[1] * s[1] + 1e-8;
      double scale = n2 / ((n2 + 1.0) * std::sqrt(n2));
      v[j][0] = s[0] * scale;
      v[j][1] = s[1] * scale;
    }
  }
  void update_logits() {
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 2; ++i)
        b[j][i] += v[j][0] * uhat[j][i][0] + v[j][1] * uhat[j][i][1];
  }
  void run(int alpha) {
    for (int t = 0; t < alpha; ++t) {
      softmax_over_j();
      weighted_sum_and_squash();
      if (t + 1 < alpha) update_logits();
    }
  }
};

}  // namespace

TEST_CASE("routing matches the scripted step-by-step oracle within 1e-10") {
  TinyRbA oracle{{{{0.3, -0.7}, {1.2, 0.4}}, {{-0.5, 0.9}, {0.8, -1.1}}}};
  oracle.run(3);

  Tensor uhat({1, 2, 2, 2, 1});
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i)
      for (int ch = 0; ch < 2; ++ch) uhat[(((j * 2) + i) * 2 + ch)] = oracle.uhat[j][i][ch];
  RoutingResult r = route(make_leaf(uhat, false), 3);
  CHECK(r.iterations_run == 3);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i)
      CHECK(std::fabs(r.couplings->value[(j * 2 + i)] - oracle.c[j][i]) < 1e-10);
  for (int j = 0; j < 2; ++j)
    for (int ch = 0; ch < 2; ++ch)
      CHECK(std::fabs(r.activities->value[(j * 2 + ch)] - oracle.v[j][ch]) < 1e-10);
}

TEST_CASE("agreement grows toward the capsule every input predicts") {
  // All inputs predict strongly along capsule j=0's direction, noise for j=1.
  Tensor uhat = Tensor::zeros({1, 2, 3, 2, 1});
  for (int i = 0; i < 3; ++i) {
    uhat[(0 * 3 + i) * 2 + 0] = 2.0;   // j=0: aligned
    uhat[(1 * 3 + i) * 2 + 0] = 0.1 * (i - 1);  // j=1: scattered
    uhat[(1 * 3 + i) * 2 + 1] = -0.1 * i;
  }
  RoutingResult r = route(make_leaf(uhat, false), 3, /*keep_trace=*/true);
  REQUIRE(r.logit_trace.size() == 3);
  for (int i = 0; i < 3; ++i) {
    double b0_first = r.logit_trace[0][(0 * 3 + i)];
    double b0_last = r.logit_trace[2][(0 * 3 + i)];
    CHECK(b0_last > b0_first);  // agreement accumulates
    // and j=0 wins the final couplings
    CHECK(r.couplings->value[(0 * 3 + i)] > r.couplings->value[(1 * 3 + i)]);
  }
}

TEST_CASE("routing is equivariant to permuting the input capsules") {
  auto uhat = random_leaf({1, 3, 4, 2, 2}, 21, 1.0, false);  // J=3, I=4
  RoutingResult r1 = route(uhat, 3);
  // swap input capsules 0 and 2 along axis 2
  Var permuted;
  {
    Tensor t = uhat->value;
    const int J = 3, I = 4, CH = 2, P = 2;
    for (int j = 0; j < J; ++j)
      for (int ch = 0; ch < CH; ++ch)
        for (int p = 0; p < P; ++p)
          std::swap(t[((j * I + 0) * CH + ch) * P + p], t[((j * I + 2) * CH + ch) * P + p]);
    permuted = make_leaf(t, false);
  }
  RoutingResult r2 = route(permuted, 3);
  const int J = 3, I = 4, P = 2;
  for (int j = 0; j < J; ++j)
    for (int i = 0; i < I; ++i) {
      int i2 = (i == 0) ? 2 : (i == 2) ? 0 : i;
      for (int p = 0; p < P; ++p)
        CHECK(std::fabs(r1.couplings->value[((j * I + i) * 1) * P + p] -
                        r2.couplings->value[((j * I + i2) * 1) * P + p]) < 1e-12);
    }
  CHECK(max_abs_diff(r1.activities->value, r2.activities->value) < 1e-12);
}

TEST_CASE("non-finite predictions rejected") {
  Tensor bad = Tensor::zeros({1, 2, 2, 2, 1});
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(route(make_leaf(bad, false), 2), Error);
}

TEST_CASE("collapse equals the loop oracle and validates couplings") {
  auto uhat = random_leaf({2, 3, 4, 2, 5}, 30, 1.0, false);
  RoutingResult r = route(uhat, 2);
  Tensor got = collapse(uhat, r.couplings)->value;  // (N,J,Ch,P)
  const int N = 2, J = 3, I = 4, CH = 2, P = 5;
  REQUIRE(got.shape == Shape{N, J, CH, P});
  for (int n = 0; n < N; ++n)
    for (int j = 0; j < J; ++j)
      for (int ch = 0; ch < CH; ++ch)
        for (int p = 0; p < P; ++p) {
          double s = 0;
          for (int i = 0; i < I; ++i)
            s += r.couplings->value[(((n * J + j) * I + i) * 1) * P + p] *
                 uhat->value[(((n * J + j) * I + i) * CH + ch) * P + p];
          CHECK(std::fabs(got[((n * J + j) * CH + ch) * P + p] - s) < 1e-10);
        }
  // stale/mismatched couplings are a contract violation
  auto wrong = random_leaf({2, 3, 5, 1, 5}, 31, 1.0, false);
  CHECK_THROWS_AS(collapse(uhat, wrong), Error);
}

TEST_CASE("collapse of identical predictions under manually uniform couplings") {
  const int I = 4;
  Tensor uhat({1, 1, I, 2, 1});
  for (int i = 0; i < I; ++i) {
    uhat[i * 2 + 0] = 0.7;
    uhat[i * 2 + 1] = -0.2;
  }
  Tensor c = Tensor::full({1, 1, I, 1, 1}, 1.0 / I);
  Tensor got = collapse(make_leaf(uhat, false), make_leaf(c, false))->value;
  CHECK(got[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(got[1] == doctest::Approx(-0.2).epsilon(1e-12));
}

TEST_CASE("entity presence is the l2 norm over output capsules") {
  auto routed = random_leaf({1, 3, 2, 2, 2}, 40, 1.0, false);  // (N,J,Ch,H,W)
  Tensor got = entity_presence(routed)->value;                  // (N,Ch,H,W)
  REQUIRE(got.shape == Shape{1, 2, 2, 2});
  for (int ch = 0; ch < 2; ++ch)
    for (int64_t p = 0; p < 4; ++p) {
      double s = 0;
      for (int j = 0; j < 3; ++j) {
        double v = routed->value[(j * 2 + ch) * 4 + p];
        s += v * v;
      }
      CHECK(std::fabs(got[ch * 4 + p] - std::sqrt(s)) < 1e-10);
    }
}

TEST_CASE("capsule clustering pipeline shapes at the tiny config") {
  CapsuleConfig cfg{16, 4, 4, 8, 8, 8, 3, 16, 8};
  std::mt19937_64 rng(50);
  CapsuleClustering q(cfg, rng);
  auto latent = random_leaf({1, 16, 16, 16}, 51, 0.5, false);
  NoGradGuard ng;
  Var u = q.primary_capsules(latent);
  CHECK(u->value.shape == Shape{1, 4, 4, 9, 9});
  Var uhat = q.predict(u);
  CHECK(uhat->value.shape == Shape{1, 8, 4, 8, 81});
  CHECK(q.routed_collapsed(latent)->value.shape == Shape{1, 8, 8, 9, 9});
  CHECK(q.capsule_vectors(latent)->value.shape == Shape{1, 16, 16, 16});
}

TEST_CASE("zero latent with zero bias gives zero primary capsules") {
  CapsuleConfig cfg{6, 2, 3, 4, 4, 4, 2, 6, 4};
  std::mt19937_64 rng(55);
  CapsuleClustering q(cfg, rng);
  for (auto& v : q.primary.bias->value.data) v = 0;
  auto latent = make_leaf(Tensor::zeros({1, 6, 8, 8}), false);
  Tensor u = q.primary_capsules(latent)->value;
  for (double v : u.data) CHECK(v == 0.0);
}

TEST_CASE("primary capsules reject undersized input") {
  CapsuleConfig cfg{6, 2, 3, 8, 4, 4, 2, 6, 4};
  std::mt19937_64 rng(56);
  CapsuleClustering q(cfg, rng);
  CHECK_THROWS_AS((void)q.primary_capsules(random_leaf({1, 6, 4, 4}, 57, 1.0, false)), Error);
}

TEST_CASE("capsule pipeline gradient check (tiny)") {
  CapsuleConfig cfg{4, 2, 2, 3, 3, 3, 2, 4, 3};
  std::mt19937_64 rng(60);
  CapsuleClustering q(cfg, rng);
  auto latent = random_leaf({1, 4, 5, 5}, 61, 0.5, true);
  double err =
      grad_check([&] { return ops::sum_all(ops::square(q.capsule_vectors(latent))); }, latent, 10);
  CHECK(err < 1e-3);
  err = grad_check([&] { return ops::sum_all(ops::square(q.capsule_vectors(latent))); },
                   q.transform, 10);
  CHECK(err < 1e-3);
}
