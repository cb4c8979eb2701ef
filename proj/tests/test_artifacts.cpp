#include <gtest/gtest.h>

#include "ccl/artifacts.hpp"
#include "ccl/errors.hpp"

using namespace ccl;

namespace {

ModelArtifact trained_artifact(TargetMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.epochs = 2;
  cfg.backbone_widths = {6, 4};
  cfg.head.embed_widths = {5, 3};
  cfg.seed = 3;
  const LabeledDataset data = generate_synthetic(synthetic_preset("pairs2", 1));
  TrainResult r = fit(cfg, data, nullptr);
  return {mode, r.state.model, r.state.head, r.state.epoch};
}

}  // namespace

TEST(Artifact, RoundTripIsExact) {
  for (TargetMode mode : {TargetMode::ccl, TargetMode::hard}) {
    const ModelArtifact a = trained_artifact(mode);
    const std::string text = format_artifact(a);
    const ModelArtifact b = parse_artifact(text);
    EXPECT_EQ(format_artifact(b), text);
    EXPECT_EQ(b.mode, mode);
    EXPECT_EQ(b.epoch, 2u);
    EXPECT_EQ(b.head.has_value(), mode == TargetMode::ccl);
    const auto pa = a.model.parameters(), pb = b.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
      for (std::size_t j = 0; j < pa[i].numel(); ++j) EXPECT_EQ(pa[i].at(j), pb[i].at(j));
  }
}

TEST(Artifact, HeaderAndTensorLines) {
  const std::string text = format_artifact(trained_artifact(TargetMode::ccl));
  EXPECT_EQ(text.rfind("# cclnet parameters v1\n", 0), 0u);
  EXPECT_NE(text.find("\nmode=ccl\n"), std::string::npos);
  EXPECT_NE(text.find("\ntensor fc.weight 4 2\n"), std::string::npos);
  EXPECT_NE(text.find("\ntensor dictionary 2 3\n"), std::string::npos);
}

TEST(Artifact, MalformedInputs) {
  const std::string good = format_artifact(trained_artifact(TargetMode::hard));
  std::string missing = good;
  missing.erase(missing.find("tensor fc.bias"));
  EXPECT_THROW(parse_artifact(missing), ParseError);
  std::string wrong_count = good;
  wrong_count.replace(wrong_count.find("tensor fc.weight 4 2"), 20, "tensor fc.weight 4 3");
  EXPECT_THROW(parse_artifact(wrong_count), ParseError);
  EXPECT_THROW(parse_artifact("garbage line\n"), ParseError);
  EXPECT_THROW(load_artifact("/nonexistent/params.txt"), IoError);
}
