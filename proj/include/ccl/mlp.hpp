#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ccl/numcore.hpp"

namespace ccl {

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

// Stack of affine layers with relu between consecutive layers (none after the
// last one). Accepts a single row [in] or a batch [m, in].
class Mlp {
 public:
  Mlp() = default;
  // He-normal weights, zero biases.
  Mlp(std::size_t input_dim, const std::vector<std::size_t>& widths, std::uint64_t seed);
  explicit Mlp(std::vector<Linear> layers);

  static Mlp zeros(std::size_t input_dim, const std::vector<std::size_t>& widths);

  Tensor forward(const Tensor& x) const;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<std::size_t> widths() const;

  const std::vector<Linear>& layers() const { return layers_; }
  std::vector<Linear>& layers() { return layers_; }
  // Weight then bias, layer by layer.
  std::vector<Tensor> parameters() const;

  Mlp clone() const;
  void set_requires_grad(bool on);

 private:
  std::vector<Linear> layers_;
};

}  // namespace ccl
