#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dfwi/nn/graph.hpp"

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

/// Encoder-decoder layout of the noise predictor. One residual block per
/// resolution; len(channel_mults) - 1 downsamplings.
struct Architecture {
  int image_size = 64;
  int in_channels = 2;  // noisy sample + condition
  int base_channels = 32;
  std::vector<int> channel_mults{1, 2, 2};
  int time_embed_dim = 32;  // sinusoidal width; the MLP widens to 4 * base
  int groups = 8;

  int levels() const { return static_cast<int>(channel_mults.size()); }
  int channels(int level) const { return base_channels * channel_mults.at(level); }
  int hidden_embed() const { return 4 * base_channels; }
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

std::string to_json(const Architecture& a);
Architecture architecture_from_json(const std::string& text);

/// Conditional noise-prediction network eps(x_t, t, cond).
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Records the network on tape. x_t and cond are (B, 1, H, W); steps has B entries.
  Tape::Id forward(Tape& tape, Tape::Id x_t, Tape::Id cond, std::span<const int> steps);

  /// Inference convenience.
  Tensor predict(const Tensor& x_t, const Tensor& cond, std::span<const int> steps);

 private:
  struct Res {
    int gn1_g, gn1_b, conv1_w, conv1_b, emb_w, emb_b, gn2_g, gn2_b, conv2_w, conv2_b;
    int skip_w = -1, skip_b = -1;
  };
  Res make_res(const std::string& name, int cin, int cout, std::mt19937_64& rng);
  int make_conv(const std::string& name, int cout, int cin, int k, std::mt19937_64& rng);
  int make_linear(const std::string& name, int fout, int fin, std::mt19937_64& rng);
  Tape::Id res_block(Tape& t, const Res& r, Tape::Id x, Tape::Id emb);
  Tape::Id param(Tape& t, int seg) { return t.parameter(params_, seg); }

  Architecture arch_;
  ParamStore params_;
  int temb1_w_ = -1, temb1_b_ = -1, temb2_w_ = -1, temb2_b_ = -1;
  int in_w_ = -1, in_b_ = -1;
  std::vector<Res> down_res_;
  std::vector<int> down_w_, down_b_;
  Res mid_{};
  std::vector<int> up_w_, up_b_;
  std::vector<Res> up_res_;
  int out_gn_g_ = -1, out_gn_b_ = -1, out_w_ = -1, out_b_ = -1;
};

/// One recorded forward pass with its tape, so backward can be requested later.
class DenoiserPass {
 public:
  explicit DenoiserPass(Denoiser& net) : net_(&net) {}

  const Tensor& forward(const Tensor& x_t, const Tensor& cond, std::span<const int> steps);
  /// Accumulates parameter gradients for d(output) = upstream into net.params().
  void backward(const Tensor& upstream);
  bool recorded() const { return out_ >= 0; }
  Tape& tape() { return tape_; }

 private:
  Denoiser* net_;
  Tape tape_;
  Tape::Id out_ = -1;
};

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
