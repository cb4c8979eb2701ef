#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ccl/errors.hpp"
#include "ccl/numcore.hpp"
#include "gradcheck.hpp"

using namespace ccl;
using ccl::testing::check_gradients;
using ccl::testing::random_away_from_zero;
using ccl::testing::random_tensor;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({1, 1, 1}, {1}), DimensionError);
  EXPECT_EQ(Tensor::zeros({2, 3}).numel(), 6u);
  EXPECT_EQ(Tensor::scalar(4).item(), 4.0);
}

TEST(Matmul, IdentityAndDot) {
  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor b = Tensor::matrix(2, 2, {5, 6, 7, 8});
  const Tensor p = matmul(eye, b);
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), (std::vector<double>{5, 6, 7, 8}));
  const Tensor d = matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
  EXPECT_EQ(d.shape(), (Shape{1, 1}));
  EXPECT_EQ(d.at(0), 11.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL();
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  const auto r = check_gradients([&] { return sum(matmul(a, b)); }, {a, b});
  EXPECT_LE(r.rel_error, 1e-6);
}

TEST(Softmax, Examples) {
  const Tensor u = softmax(Tensor::vector({0, 0, 0}));
  for (double v : u.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Tensor big = softmax(Tensor::vector({1000, 0}));
  EXPECT_NEAR(big.at(0), 1.0, 1e-15);
  EXPECT_NEAR(big.at(1), 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(big.at(0)) && std::isfinite(big.at(1)));
  const Tensor s = softmax(Tensor::vector({0, -2}));
  EXPECT_NEAR(s.at(0), 0.880797, 5e-7);
  EXPECT_NEAR(s.at(1), 0.119203, 5e-7);
}

TEST(Softmax, RowsAreProbabilityVectors) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = random_tensor({3, 6}, rng, -30, 30);
    const Tensor q = softmax(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        EXPECT_GE(q.at(r, c), 0.0);
        s += q.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(L2Normalize, ExamplesAndNorm) {
  const Tensor n = l2_normalize(Tensor::vector({3, 4}));
  EXPECT_NEAR(n.at(0), 0.6, 1e-15);
  EXPECT_NEAR(n.at(1), 0.8, 1e-15);
  const Tensor unit = Tensor::vector({0, 1, 0});
  const Tensor same = l2_normalize(unit);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(same.at(i), unit.at(i));
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor v = l2_normalize(random_tensor({5}, rng, -100, 100));
    double s = 0;
    for (double x : v.data()) s += x * x;
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-10);
  }
}

TEST(L2Normalize, DegenerateVectorThrows) {
  EXPECT_THROW(l2_normalize(Tensor::vector({0, 0})), DegenerateVectorError);
  EXPECT_THROW(l2_normalize(Tensor::vector({1e-13, 0})), DegenerateVectorError);
}

TEST(L2Normalize, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  Tensor v = random_tensor({8}, rng);
  Tensor w = random_tensor({8}, rng);
  const auto r = check_gradients([&] { return sum(mul(l2_normalize(v), w)); }, {v});
  EXPECT_LE(r.rel_error, 1e-6);
}

TEST(Backward, SumAndSquare) {
  Tensor w = Tensor::vector({1, 2}, true);
  {
    Graph g;
    g.backward(sum(w));
  }
  EXPECT_EQ(w.grad(), (std::vector<double>{1, 1}));
  w.zero_grad();
  {
    Graph g;
    g.backward(sum(square(w)));
  }
  EXPECT_EQ(w.grad(), (std::vector<double>{2, 4}));
}

TEST(Backward, AccumulatesAcrossCalls) {
  Tensor w = Tensor::vector({1, 2}, true);
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(sum(square(w)));
  }
  EXPECT_EQ(w.grad(), (std::vector<double>{4, 8}));
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor w = Tensor::vector({1, 2}, true);
  Graph g;
  const Tensor y = square(w);
  EXPECT_THROW(g.backward(y), ContractError);
}

TEST(Backward, LossFromAnotherGraphIsContractError) {
  Tensor w = Tensor::vector({1, 2}, true);
  Tensor loss;
  {
    Graph g1;
    loss = sum(w);
  }
  Graph g2;
  EXPECT_THROW(g2.backward(loss), ContractError);
}

TEST(Backward, SharedInputAccumulatesAndVisitsOnce) {
  Tensor x = Tensor::vector({3}, true);
  Graph g;
  const Tensor y = x * x;     // x used twice by one op
  const Tensor z = sum(y + x);  // and once more here
  g.backward(z);
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
  for (int v : g.visit_counts()) EXPECT_EQ(v, 1);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::vector({1, 2}, true);
  Graph g;
  {
    NoGradGuard ng;
    (void)sum(square(x));
  }
  EXPECT_EQ(g.size(), 0u);
  (void)sum(x);
  EXPECT_EQ(g.size(), 1u);
}

TEST(Relu, SubgradientAtZeroIsZero) {
  Tensor x = Tensor::vector({-1, 0, 2}, true);
  Graph g;
  g.backward(sum(relu(x)));
  EXPECT_EQ(x.grad(), (std::vector<double>{0, 0, 1}));
}

TEST(Log, DomainAndClamp) {
  EXPECT_THROW(ccl::log(Tensor::vector({0.0})), ContractError);
  const Tensor c = clamped_log(Tensor::vector({0.0, 1.0}), 1e-12);
  EXPECT_NEAR(c.at(0), std::log(1e-12), 1e-12);
  EXPECT_EQ(c.at(1), 0.0);
}

TEST(PairwiseSqDist, IdenticalRowsGiveExactZero) {
  const Tensor a = Tensor::matrix(2, 3, {0.1, 0.7, -0.3, 0.5, 0.5, 0.5});
  const Tensor d = pairwise_sq_dist(a, a);
  EXPECT_EQ(d.at(0, 0), 0.0);
  EXPECT_EQ(d.at(1, 1), 0.0);
  EXPECT_NEAR(d.at(0, 1), 0.16 + 0.04 + 0.64, 1e-15);
}

// Every differentiable op against finite differences on 100+ random
// instances each; relu inputs are kept away from the kink.
TEST(GradientOracle, EveryDifferentiableOp) {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_away_from_zero({3, 4}, rng);
    Tensor b = random_away_from_zero({3, 4}, rng);
    Tensor m = random_tensor({4, 2}, rng);
    Tensor bias = random_tensor({4}, rng);
    Tensor pos = random_tensor({3, 4}, rng, 0.2, 2.0);
    Tensor w = random_tensor({3, 4}, rng);
    Tensor w2 = random_tensor({3, 2}, rng);
    Tensor wk = random_tensor({3, 5}, rng);
    Tensor c = random_tensor({5, 4}, rng);
    const std::vector<std::function<Tensor()>> cases = {
        [&] { return sum(mul(add(a, b), w)); },
        [&] { return sum(mul(sub(a, b), w)); },
        [&] { return sum(mul(mul(a, b), w)); },
        [&] { return sum(mul(matmul(a, m), w2)); },
        [&] { return sum(mul(add_bias(a, bias), w)); },
        [&] { return sum(mul(reshape(a, {4, 3}), reshape(w, {4, 3}))); },
        [&] { return sum(mul(add_scalar(scale(a, -1.7), 0.3), w)); },
        [&] { return sum(mul(relu(a), w)); },
        [&] { return sum(mul(ccl::exp(a), w)); },
        [&] { return sum(mul(ccl::log(pos), w)); },
        [&] { return sum(mul(clamped_log(pos, 1e-12), w)); },
        [&] { return sum(mul(square(a), w)); },
        [&] { return mean(mul(a, w)); },
        [&] { return sum(mul(softmax(a), w)); },
        [&] { return sum(mul(l2_normalize(a), w)); },
        [&] { return sum(mul(pairwise_sq_dist(a, c), wk)); },
    };
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto r = check_gradients(cases[i], {a, b, m, bias, pos, c});
      ASSERT_LE(r.rel_error, 1e-5) << "case " << i << " trial " << trial;
      worst = std::max(worst, r.rel_error);
    }
  }
  RecordProperty("worst_rel_error", std::to_string(worst));
}

TEST(Determinism, IdenticalInputsGiveBitIdenticalOutputs) {
  std::mt19937_64 r1(9), r2(9);
  const Tensor a1 = random_tensor({4, 4}, r1), a2 = random_tensor({4, 4}, r2);
  const Tensor o1 = softmax(matmul(a1, a1)), o2 = softmax(matmul(a2, a2));
  for (std::size_t i = 0; i < o1.numel(); ++i) EXPECT_EQ(o1.at(i), o2.at(i));
}
