#include "dfwi/nn/denoiser.hpp"

#include <cmath>
#include <json.hpp>

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

void Architecture::validate() const {
  if (image_size < 4) throw NnError("architecture: image_size too small");
  if (in_channels < 1 || base_channels < 1 || channel_mults.empty()) throw NnError("architecture: empty layout");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) throw NnError("architecture: time_embed_dim must be even");
  const int factor = 1 << (levels() - 1);
  if (image_size % factor != 0) {
    throw NnError("architecture: image_size " + std::to_string(image_size) + " not divisible by " +
                  std::to_string(factor) + " for " + std::to_string(levels()) + " levels");
  }
  for (int l = 0; l < levels(); ++l) {
    if (channels(l) % groups != 0) throw NnError("architecture: channels not divisible by groups");
  }
}

std::string to_json(const Architecture& a) {
  nlohmann::json j;
  j["image_size"] = a.image_size;
  j["in_channels"] = a.in_channels;
  j["base_channels"] = a.base_channels;
  j["channel_mults"] = a.channel_mults;
  j["time_embed_dim"] = a.time_embed_dim;
  j["groups"] = a.groups;
  return j.dump();
}

Architecture architecture_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Architecture a;
  a.image_size = j.at("image_size").get<int>();
  a.in_channels = j.at("in_channels").get<int>();
  a.base_channels = j.at("base_channels").get<int>();
  a.channel_mults = j.at("channel_mults").get<std::vector<int>>();
  a.time_embed_dim = j.at("time_embed_dim").get<int>();
  a.groups = j.at("groups").get<int>();
  a.validate();
  return a;
}

int Denoiser::make_conv(const std::string& name, int cout, int cin, int k, std::mt19937_64& rng) {
  const int w = params_.add(name + ".weight", Shape{cout, cin, k, k});
  params_.add(name + ".bias", Shape{cout, 1, 1, 1});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : params_.values(w)) v = static_cast<Real>(u(rng));
  for (auto& v : params_.values(w + 1)) v = static_cast<Real>(u(rng));
  return w;
}

int Denoiser::make_linear(const std::string& name, int fout, int fin, std::mt19937_64& rng) {
  return make_conv(name, fout, fin, 1, rng);
}

Denoiser::Res Denoiser::make_res(const std::string& name, int cin, int cout, std::mt19937_64& rng) {
  Res r{};
  r.gn1_g = params_.add(name + ".norm1.gamma", Shape{cin, 1, 1, 1}, Real(1));
  r.gn1_b = params_.add(name + ".norm1.beta", Shape{cin, 1, 1, 1});
  r.conv1_w = make_conv(name + ".conv1", cout, cin, 3, rng);
  r.conv1_b = r.conv1_w + 1;
  r.emb_w = make_linear(name + ".temb", cout, arch_.hidden_embed(), rng);
  r.emb_b = r.emb_w + 1;
  r.gn2_g = params_.add(name + ".norm2.gamma", Shape{cout, 1, 1, 1}, Real(1));
  r.gn2_b = params_.add(name + ".norm2.beta", Shape{cout, 1, 1, 1});
  r.conv2_w = make_conv(name + ".conv2", cout, cout, 3, rng);
  r.conv2_b = r.conv2_w + 1;
  if (cin != cout) {
    r.skip_w = make_conv(name + ".skip", cout, cin, 1, rng);
    r.skip_b = r.skip_w + 1;
  }
  return r;
}

Denoiser::Denoiser(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  std::mt19937_64 rng(seed);
  const int hidden = arch_.hidden_embed();
  temb1_w_ = make_linear("temb.fc1", hidden, arch_.time_embed_dim, rng);
  temb1_b_ = temb1_w_ + 1;
  temb2_w_ = make_linear("temb.fc2", hidden, hidden, rng);
  temb2_b_ = temb2_w_ + 1;
  in_w_ = make_conv("input", arch_.channels(0), arch_.in_channels, 3, rng);
  in_b_ = in_w_ + 1;

  const int levels = arch_.levels();
  int ch = arch_.channels(0);
  for (int l = 0; l < levels; ++l) {
    down_res_.push_back(make_res("down" + std::to_string(l), ch, arch_.channels(l), rng));
    ch = arch_.channels(l);
    if (l + 1 < levels) {
      down_w_.push_back(make_conv("downsample" + std::to_string(l), ch, ch, 3, rng));
      down_b_.push_back(down_w_.back() + 1);
    }
  }
  mid_ = make_res("mid", ch, ch, rng);
  for (int l = levels - 2; l >= 0; --l) {
    const int target = arch_.channels(l);
    up_w_.push_back(make_conv("upsample" + std::to_string(l), target, ch, 3, rng));
    up_b_.push_back(up_w_.back() + 1);
    up_res_.push_back(make_res("up" + std::to_string(l), 2 * target, target, rng));
    ch = target;
  }
  out_gn_g_ = params_.add("out.norm.gamma", Shape{ch, 1, 1, 1}, Real(1));
  out_gn_b_ = params_.add("out.norm.beta", Shape{ch, 1, 1, 1});
  out_w_ = params_.add("out.conv.weight", Shape{1, ch, 3, 3});  // zero: untrained net predicts 0
  out_b_ = params_.add("out.conv.bias", Shape{1, 1, 1, 1});
}

Tape::Id Denoiser::res_block(Tape& t, const Res& r, Tape::Id x, Tape::Id emb) {
  Tape::Id h = silu(t, group_norm(t, x, param(t, r.gn1_g), param(t, r.gn1_b), arch_.groups));
  h = conv2d(t, h, param(t, r.conv1_w), param(t, r.conv1_b), 1, 1);
  h = add_channel_bias(t, h, linear(t, emb, param(t, r.emb_w), param(t, r.emb_b)));
  h = silu(t, group_norm(t, h, param(t, r.gn2_g), param(t, r.gn2_b), arch_.groups));
  h = conv2d(t, h, param(t, r.conv2_w), param(t, r.conv2_b), 1, 1);
  Tape::Id skip = x;
  if (r.skip_w >= 0) skip = conv2d(t, x, param(t, r.skip_w), param(t, r.skip_b), 1, 0);
  return add(t, h, skip);
}

Tape::Id Denoiser::forward(Tape& t, Tape::Id x_t, Tape::Id cond, std::span<const int> steps) {
  const Shape xs = t.value(x_t).shape;
  const Shape cs = t.value(cond).shape;
  if (xs.c + cs.c != arch_.in_channels || xs.h != arch_.image_size || xs.w != arch_.image_size || !(cs.n == xs.n) ||
      cs.h != xs.h || cs.w != xs.w) {
    throw NnError("denoiser: inputs " + xs.str() + " + " + cs.str() + " do not match architecture (" +
                  std::to_string(arch_.in_channels) + " channels, " + std::to_string(arch_.image_size) + "^2)");
  }
  if (static_cast<int>(steps.size()) != xs.n) throw NnError("denoiser: one step index per batch element required");

  Tape::Id e = t.constant(timestep_embedding(steps, arch_.time_embed_dim));
  e = silu(t, linear(t, e, param(t, temb1_w_), param(t, temb1_b_)));
  e = silu(t, linear(t, e, param(t, temb2_w_), param(t, temb2_b_)));

  Tape::Id h = conv2d(t, concat_channels(t, x_t, cond), param(t, in_w_), param(t, in_b_), 1, 1);
  std::vector<Tape::Id> skips;
  const int levels = arch_.levels();
  for (int l = 0; l < levels; ++l) {
    h = res_block(t, down_res_[l], h, e);
    if (l + 1 < levels) {
      skips.push_back(h);
      h = conv2d(t, h, param(t, down_w_[l]), param(t, down_b_[l]), 2, 1);
    }
  }
  h = res_block(t, mid_, h, e);
  for (std::size_t i = 0; i < up_w_.size(); ++i) {
    h = upsample_nearest2x(t, h);
    h = conv2d(t, h, param(t, up_w_[i]), param(t, up_b_[i]), 1, 1);
    h = concat_channels(t, h, skips[skips.size() - 1 - i]);
    h = res_block(t, up_res_[i], h, e);
  }
  h = silu(t, group_norm(t, h, param(t, out_gn_g_), param(t, out_gn_b_), arch_.groups));
  return conv2d(t, h, param(t, out_w_), param(t, out_b_), 1, 1);
}

Tensor Denoiser::predict(const Tensor& x_t, const Tensor& cond, std::span<const int> steps) {
  Tape t;
  const Tape::Id out = forward(t, t.constant(x_t), t.constant(cond), steps);
  return t.value(out);
}

const Tensor& DenoiserPass::forward(const Tensor& x_t, const Tensor& cond, std::span<const int> steps) {
  tape_.clear();
  out_ = net_->forward(tape_, tape_.constant(x_t), tape_.constant(cond), steps);
  return tape_.value(out_);
}

void DenoiserPass::backward(const Tensor& upstream) {
  if (out_ < 0) throw NnError("denoiser backward requested before a forward pass");
  tape_.backward(out_, upstream);
}

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
