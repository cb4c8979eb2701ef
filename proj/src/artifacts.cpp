#include "ccl/artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "ccl/errors.hpp"

namespace ccl {

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

void append_tensor(std::string& out, const std::string& name, const Tensor& t) {
  out += "tensor " + name;
  for (std::size_t d : t.shape()) out += ' ' + std::to_string(d);
  out += '\n';
  char buf[40];
  const auto v = t.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.17g", i ? "," : "", v[i]);
    out += buf;
  }
  out += '\n';
}

void append_mlp(std::string& out, const std::string& prefix, const Mlp& mlp) {
  for (std::size_t i = 0; i < mlp.layers().size(); ++i) {
    append_tensor(out, prefix + "." + std::to_string(i) + ".weight", mlp.layers()[i].weight);
    append_tensor(out, prefix + "." + std::to_string(i) + ".bias", mlp.layers()[i].bias);
  }
}

struct Parsed {
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;
};

Parsed parse_sections(const std::string& text, const std::string& source) {
  Parsed p;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream hdr(line.substr(7));
      std::string name;
      hdr >> name;
      Shape shape;
      std::size_t d = 0;
      while (hdr >> d) shape.push_back(d);
      if (name.empty()) throw ParseError(source, lineno, "tensor without a name");
      std::string values_line;
      if (!std::getline(in, values_line)) throw ParseError(source, lineno, "missing values for " + name);
      ++lineno;
      std::vector<double> values;
      std::istringstream row(values_line);
      std::string cell;
      while (std::getline(row, cell, ',')) {
        try {
          values.push_back(std::stod(cell));
        } catch (const std::exception&) {
          throw ParseError(source, lineno, "bad value '" + cell + "' in " + name);
        }
      }
      if (values.size() != shape_numel(shape)) {
        throw ParseError(source, lineno, name + " declares " + shape_string(shape) + " but has " +
                                             std::to_string(values.size()) + " values");
      }
      p.tensors.emplace(name, Tensor(shape, std::move(values), true));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected key=value or tensor line");
    p.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return p;
}

const std::string& meta_of(const Parsed& p, const std::string& key, const std::string& source) {
  auto it = p.meta.find(key);
  if (it == p.meta.end()) throw ParseError(source, 0, "missing key '" + key + "'");
  return it->second;
}

Tensor take(Parsed& p, const std::string& name, const std::string& source) {
  auto it = p.tensors.find(name);
  if (it == p.tensors.end()) throw ParseError(source, 0, "missing tensor '" + name + "'");
  return it->second;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(std::stoul(cell));
  return out;
}

Mlp take_mlp(Parsed& p, const std::string& prefix, std::size_t layers, const std::string& source) {
  std::vector<Linear> out;
  for (std::size_t i = 0; i < layers; ++i) {
    out.push_back({take(p, prefix + "." + std::to_string(i) + ".weight", source),
                   take(p, prefix + "." + std::to_string(i) + ".bias", source)});
  }
  return Mlp(std::move(out));
}

}  // namespace

std::string format_artifact(const ModelArtifact& a) {
  std::string out = "# cclnet parameters v1\n";
  char buf[128];
  out += std::string("mode=") + to_string(a.mode) + "\n";
  out += "classes=" + std::to_string(a.model.num_classes()) + "\n";
  out += "input_dim=" + std::to_string(a.model.input_dim()) + "\n";
  out += "backbone_widths=" + join_sizes(a.model.backbone().widths()) + "\n";
  out += "epoch=" + std::to_string(a.epoch) + "\n";
  if (a.head) {
    out += "embed_widths=" + join_sizes(a.head->embed_net.widths()) + "\n";
    std::snprintf(buf, sizeof buf, "margin=%.17g\nalpha_cc=%.17g\n", a.head->config.margin,
                  a.head->config.alpha_cc);
    out += buf;
    out += std::string("dictionary_frozen=") + (a.head->dictionary.frozen() ? "1" : "0") + "\n";
  }
  append_mlp(out, "backbone", a.model.backbone());
  append_tensor(out, "fc.weight", a.model.fc().weight);
  append_tensor(out, "fc.bias", a.model.fc().bias);
  if (a.head) {
    append_mlp(out, "embed", a.head->embed_net);
    append_tensor(out, "dictionary", a.head->dictionary.embeddings());
  }
  return out;
}

ModelArtifact parse_artifact(const std::string& text, const std::string& source) {
  Parsed p = parse_sections(text, source);
  ModelArtifact a;
  try {
    a.mode = parse_target_mode(meta_of(p, "mode", source));
    a.epoch = std::stoul(meta_of(p, "epoch", source));
    const auto backbone_widths = parse_sizes(meta_of(p, "backbone_widths", source));
    Mlp backbone = take_mlp(p, "backbone", backbone_widths.size(), source);
    a.model = Classifier(std::move(backbone), {take(p, "fc.weight", source), take(p, "fc.bias", source)});
    if (a.model.num_classes() != std::stoul(meta_of(p, "classes", source)) ||
        a.model.input_dim() != std::stoul(meta_of(p, "input_dim", source))) {
      throw ParseError(source, 0, "tensor shapes disagree with classes/input_dim");
    }
    if (p.meta.count("embed_widths")) {
      CclHead head;
      head.config.embed_widths = parse_sizes(meta_of(p, "embed_widths", source));
      head.config.margin = std::stod(meta_of(p, "margin", source));
      head.config.alpha_cc = std::stod(meta_of(p, "alpha_cc", source));
      head.embed_net = take_mlp(p, "embed", head.config.embed_widths.size(), source);
      head.dictionary = ClassDictionary(take(p, "dictionary", source));
      if (meta_of(p, "dictionary_frozen", source) == "1") head.dictionary.freeze();
      if (head.dictionary.num_classes() != a.model.num_classes()) {
        throw ParseError(source, 0, "dictionary has " + std::to_string(head.dictionary.num_classes()) +
                                        " classes, classifier " + std::to_string(a.model.num_classes()));
      }
      a.head = std::move(head);
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(source, 0, std::string("malformed parameters: ") + e.what());
  }
  return a;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

void save_artifact(const ModelArtifact& artifact, const std::string& path) {
  write_text_file(path, format_artifact(artifact));
}

ModelArtifact load_artifact(const std::string& path) {
  return parse_artifact(read_text_file(path), path);
}

}  // namespace ccl
