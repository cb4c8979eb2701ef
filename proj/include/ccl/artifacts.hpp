#pragma once

// Text serialization of trained models.
//
//   # cclnet parameters v1
//   mode=ccl
//   classes=6
//   ...
//   tensor fc.weight 8 6
//   v,v,v,...
//
// Each `tensor <name> <dims...>` line is followed by one line of
// comma-separated values printed with 17 significant digits, so a save/load
// round trip is exact.

#include <cstddef>
#include <optional>
#include <string>

#include "ccl/ccl_head.hpp"
#include "ccl/classifier.hpp"
#include "ccl/trainer.hpp"

namespace ccl {

struct ModelArtifact {
  TargetMode mode = TargetMode::hard;
  Classifier model;
  std::optional<CclHead> head;
  std::size_t epoch = 0;
};

std::string format_artifact(const ModelArtifact& artifact);
ModelArtifact parse_artifact(const std::string& text, const std::string& source = "<text>");

void save_artifact(const ModelArtifact& artifact, const std::string& path);
ModelArtifact load_artifact(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace ccl
