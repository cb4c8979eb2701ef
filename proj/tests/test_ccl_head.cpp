#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ccl/ccl_head.hpp"
#include "ccl/errors.hpp"
#include "gradcheck.hpp"

using namespace ccl;
using ccl::testing::check_gradients;
using ccl::testing::random_tensor;

namespace {

// K unit vectors along the coordinate axes: every off-diagonal distance is 2.
ClassDictionary orthogonal_dictionary(std::size_t k) {
  std::vector<double> v(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) v[i * k + i] = 1.0;
  return ClassDictionary(Tensor::matrix(k, k, v));
}

double dist(std::vector<double> a, std::vector<double> b) {
  return distance(Tensor::vector(std::move(a)), Tensor::vector(std::move(b))).item();
}

}  // namespace

TEST(Config, Validation) {
  CclConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.margin = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.alpha_cc = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr_ccl = -1e-3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(CclConfig::full_scale().embed_widths, (std::vector<std::size_t>{1024, 1024, 512}));
  EXPECT_EQ(CclConfig{}.embedding_dim(), 16u);
}

TEST(Embed, ZeroNetGivesZeroVectorThenDistanceErrors) {
  const Mlp net = Mlp::zeros(4, {3});
  const Tensor e = embed(net, Tensor::vector({1, 2, 3, 4}));
  for (double v : e.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(distance(reshape(e, {3}), Tensor::vector({1, 0, 0})), DegenerateVectorError);
}

TEST(Embed, IdentityLayerPassesInputThrough) {
  const Mlp net({Linear{Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor::zeros({3})}});
  const Tensor e = embed(net, Tensor::vector({0.5, 0.0, 2.0}));
  EXPECT_EQ(std::vector<double>(e.data().begin(), e.data().end()),
            (std::vector<double>{0.5, 0.0, 2.0}));
}

TEST(Embed, DimensionMismatch) {
  const Mlp net(4, {3}, 1);
  EXPECT_THROW(embed(net, Tensor::vector({1, 2})), DimensionError);
}

TEST(Embed, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  Mlp net(5, {6, 6, 4}, 3);
  const Tensor f = random_tensor({5}, rng).detach();
  const auto r = check_gradients([&] { return sum(embed(net, f)); }, net.parameters());
  EXPECT_LE(r.rel_error, 1e-5);
}

TEST(Distance, Anchors) {
  EXPECT_EQ(dist({0.3, -0.7, 0.2}, {0.3, -0.7, 0.2}), 0.0);
  EXPECT_NEAR(dist({1, 0}, {0, 1}), 2.0, 1e-15);
  EXPECT_NEAR(dist({2, 0}, {0, 3}), 2.0, 1e-15);
  EXPECT_NEAR(dist({1, 0}, {-1, 0}), 4.0, 1e-15);
  EXPECT_THROW(dist({0, 0}, {1, 0}), DegenerateVectorError);
}

TEST(Distance, AntipodalNeverExceedsFour) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 2000; ++trial) {
    const Tensor a = random_tensor({static_cast<std::size_t>(1 + trial % 16)}, rng);
    const double d = distance(a, scale(a, -2.5)).item();
    EXPECT_LE(d, 4.0);
    EXPECT_NEAR(d, 4.0, 1e-14);
  }
}

TEST(Distance, EqualsTwoMinusTwoCosineAndIsSymmetric) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor a = random_tensor({6}, rng), b = random_tensor({6}, rng);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      dot += a.at(i) * b.at(i);
      na += a.at(i) * a.at(i);
      nb += b.at(i) * b.at(i);
    }
    const double d = distance(a, b).item();
    EXPECT_NEAR(d, 2.0 - 2.0 * dot / std::sqrt(na * nb), 1e-12);
    EXPECT_NEAR(d, distance(b, a).item(), 1e-15);
  }
}

TEST(HeadLogits, EquidistantEmbeddingGivesUniform) {
  const ClassDictionary dict = orthogonal_dictionary(4);
  const Tensor q = softmax(head_logits(Tensor::vector({1, 1, 1, 1}), dict));
  for (double v : q.data()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(HeadLogits, EmbeddingOnClassCentre) {
  const ClassDictionary dict = orthogonal_dictionary(7);
  const Tensor e = Tensor::vector({0, 0, 1, 0, 0, 0, 0});
  const Tensor logits = head_logits(e, dict);
  EXPECT_EQ(logits.shape(), (Shape{7}));
  const Tensor q = softmax(logits);
  EXPECT_NEAR(q.at(2), 1.0 / (1.0 + 6.0 * std::exp(-2.0)), 1e-14);
  EXPECT_NEAR(q.at(2), 0.55191, 1e-4);
}

TEST(HeadLogits, CrossEntropyGradientWrtEmbeddingAndDictionary) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor e = random_tensor({3, 5}, rng);
    ClassDictionary dict(random_tensor({4, 5}, rng));
    Tensor c = dict.mutable_embeddings();
    const Labels y{0, 3, 1};
    CclConfig cfg;
    cfg.alpha_cc = 0.0;
    const auto r = check_gradients([&] { return head_loss(e, y, dict, cfg); }, {e, c});
    EXPECT_LE(r.rel_error, 1e-5) << trial;
  }
}

TEST(ClassCorrelationLoss, Anchors) {
  EXPECT_NEAR(class_correlation_loss(orthogonal_dictionary(2), 2.0).item(), 0.0, 1e-15);
  const ClassDictionary antipodal(Tensor::matrix(2, 2, {1, 0, -1, 0}));
  EXPECT_NEAR(class_correlation_loss(antipodal, 2.0).item(), 1.0, 1e-15);
  // cos = -1/2 gives f_d = 3.
  const ClassDictionary three(Tensor::matrix(2, 2, {1, 0, -0.5, std::sqrt(3.0) / 2}));
  EXPECT_NEAR(class_correlation_loss(three, 2.0).item(), 0.5, 1e-14);
}

TEST(ClassCorrelationLoss, NonnegativeAndZeroIffWithinMargin) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const ClassDictionary dict(random_tensor({5, 4}, rng));
    const double loss = class_correlation_loss(dict, 2.0).item();
    EXPECT_GE(loss, 0.0);
    double max_d = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        std::vector<double> a(4), b(4);
        for (std::size_t c = 0; c < 4; ++c) {
          a[c] = dict.embeddings().at(i, c);
          b[c] = dict.embeddings().at(j, c);
        }
        max_d = std::max(max_d, dist(a, b));
      }
    EXPECT_EQ(loss == 0.0, max_d <= 2.0);
  }
}

TEST(HeadLoss, Anchors) {
  const ClassDictionary dict = orthogonal_dictionary(7);
  CclConfig cfg;
  cfg.alpha_cc = 0.0;
  const Tensor e = Tensor::vector({0, 0, 0, 0, 0, 1, 0});
  const Labels y{5};
  EXPECT_NEAR(head_loss(e, y, dict, cfg).item(), std::log(1.0 + 6.0 * std::exp(-2.0)), 1e-12);
  EXPECT_NEAR(head_loss(e, y, dict, cfg).item(), 0.59437, 1e-4);

  const ClassDictionary same(Tensor::matrix(3, 2, {1, 1, 2, 2, 0.5, 0.5}));
  const Labels y0{1};
  EXPECT_NEAR(head_loss(Tensor::vector({0.3, -1}), y0, same, cfg).item(), std::log(3.0), 1e-12);
}

TEST(HeadLoss, AlphaAddsCorrelationPenalty) {
  const ClassDictionary antipodal(Tensor::matrix(2, 2, {1, 0, -1, 0}));
  CclConfig with, without;
  without.alpha_cc = 0.0;
  const Tensor e = Tensor::vector({0.2, 0.9});
  const Labels y{0};
  EXPECT_NEAR(head_loss(e, y, antipodal, with).item() - head_loss(e, y, antipodal, without).item(),
              10.0, 1e-12);
}

TEST(HeadLoss, LabelOutOfRange) {
  const Labels y{7};
  EXPECT_THROW(head_loss(Tensor::vector({1, 0, 0, 0, 0, 0, 0}), y, orthogonal_dictionary(7), {}),
               ContractError);
}

TEST(HeadLoss, FullGradientCheck) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    CclConfig cfg;
    cfg.embed_widths = {6, 4};
    CclHead head(5, 4, cfg, 300 + trial);
    // Spread the dictionary so several pairs sit beyond the margin.
    head.dictionary = ClassDictionary(random_tensor({4, 4}, rng));
    for (auto& layer : head.embed_net.layers()) layer.bias = random_tensor(layer.bias.shape(), rng);
    const Tensor f = random_tensor({3, 5}, rng).detach();
    const Labels y{2, 0, 3};
    const auto r = check_gradients(
        [&] { return head_loss(embed(head.embed_net, f), y, head.dictionary, cfg); },
        head.trainable_parameters());
    EXPECT_LE(r.rel_error, 1e-5) << trial;
  }
}

TEST(ClassDictionary, FreezeAndDegenerate) {
  ClassDictionary dict(3, 4, 7);
  for (std::size_t k = 0; k < 3; ++k) {
    double s = 0;
    for (std::size_t c = 0; c < 4; ++c) s += dict.embeddings().at(k, c) * dict.embeddings().at(k, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_TRUE(dict.embeddings().requires_grad());
  dict.freeze();
  EXPECT_TRUE(dict.frozen());
  EXPECT_FALSE(dict.embeddings().requires_grad());
  EXPECT_THROW(dict.mutable_embeddings(), ContractError);

  const ClassDictionary bad(Tensor::matrix(2, 2, {1, 0, 0, 0}));
  try {
    bad.check_nondegenerate();
    FAIL();
  } catch (const DegenerateVectorError& e) {
    EXPECT_NE(std::string(e.what()).find("class 2"), std::string::npos) << e.what();
  }
}

TEST(CclHead, FrozenDictionaryLeavesTrainableParameters) {
  CclConfig cfg;
  cfg.embed_widths = {4, 3};
  CclHead head(5, 3, cfg, 1);
  EXPECT_EQ(head.trainable_parameters().size(), 5u);
  head.dictionary.freeze();
  EXPECT_EQ(head.trainable_parameters().size(), 4u);
}

TEST(SoftLabels, TwoClassAnchor) {
  const SoftLabelMatrix m = soft_labels(orthogonal_dictionary(2));
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(m(k, k), 0.880797, 5e-7);
    EXPECT_NEAR(m(k, 1 - k), 0.119203, 5e-7);
  }
  EXPECT_NEAR(mean_correct_softness(m), 0.880797, 5e-7);
}

TEST(SoftLabels, AllDistancesEqualToMarginK7) {
  const SoftLabelMatrix m = soft_labels(orthogonal_dictionary(7));
  const double a = std::exp(-2.0), s = 1.0 + 6.0 * a;
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_NEAR(m(i, j), i == j ? 1.0 / s : a / s, 1e-14);
      EXPECT_NEAR(m(i, j), i == j ? 0.55191 : 0.074682, 1e-4);
    }
  }
  EXPECT_NEAR(mean_correct_softness(m), 1.0 / s, 1e-14);
  EXPECT_NEAR(collapsed_epsilon(7, 2.0), 0.52281, 1e-5);
  EXPECT_NEAR(nearest_uniform_epsilon(m), 0.5228, 1e-3);
}

TEST(SoftLabels, EqualDistancesGiveUniformSmoothingShape) {
  // Regular simplex: all pairwise cosines -1/(K-1).
  const std::size_t k = 4;
  std::vector<double> v(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) v[i * k + j] = (i == j ? 1.0 : 0.0) - 1.0 / k;
  const SoftLabelMatrix m = soft_labels(ClassDictionary(Tensor::matrix(k, k, v)));
  const double d = 2.0 + 2.0 / (k - 1.0);
  const double a = std::exp(-d), s = 1.0 + (k - 1.0) * a;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(m(i, j), i == j ? 1 / s : a / s, 1e-12);
}

TEST(SoftLabels, RowsStochasticAndDiagonalArgmax) {
  std::mt19937_64 rng(26);
  for (int trial = 0; trial < 200; ++trial) {
    const SoftLabelMatrix m = soft_labels(ClassDictionary(random_tensor({6, 5}, rng)));
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        s += m(i, j);
        if (j != i) {
          EXPECT_LT(m(i, j), m(i, i));
        }
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
    const double p = mean_correct_softness(m);
    EXPECT_GT(p, 1.0 / 6.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(SoftLabels, AntipodalPairAndIdentityLimit) {
  const SoftLabelMatrix m = soft_labels(ClassDictionary(Tensor::matrix(2, 1, {1, -1})));
  EXPECT_NEAR(m(0, 0), 1.0 / (1.0 + std::exp(-4.0)), 1e-14);
  const SoftLabelMatrix id = SoftLabelMatrix::identity(5);
  EXPECT_EQ(mean_correct_softness(id), 1.0);
  EXPECT_EQ(nearest_uniform_epsilon(id), 0.0);
}

TEST(SoftLabels, TextRoundTrip) {
  const SoftLabelMatrix m = soft_labels(orthogonal_dictionary(3), 2.0, 12);
  const std::string text = m.to_text();
  EXPECT_EQ(text.substr(0, text.find('\n')), "# classes=3 b=2 epoch=12");
  const SoftLabelMatrix back = SoftLabelMatrix::parse(text);
  EXPECT_EQ(back.num_classes(), 3u);
  EXPECT_EQ(back.epoch(), 12);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_THROW(SoftLabelMatrix::parse("# classes=2 b=2 epoch=0\n0.5,0.5\n"), ParseError);
}

TEST(SoftLabels, FrozenDictionaryIsBitStable) {
  ClassDictionary dict(5, 4, 3);
  dict.freeze();
  const std::string a = soft_labels(dict).to_text();
  const double la = class_correlation_loss(dict, 2.0).item();
  Tensor e = Tensor::vector({0.1, 0.2, 0.3, 0.4}, true);
  {
    Graph g;
    const Labels y{1};
    g.backward(head_loss(e, y, dict, {}));
  }
  EXPECT_FALSE(dict.embeddings().has_grad());
  EXPECT_EQ(soft_labels(dict).to_text(), a);
  EXPECT_EQ(class_correlation_loss(dict, 2.0).item(), la);
}
