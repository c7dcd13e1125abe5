#include "cevae/blocks.hpp"

#include <cmath>

namespace cevae {

ResBlock::ResBlock(const BlockConfig& cfg_, std::mt19937_64& rng) : cfg(cfg_) {
  cfg.validate();
  if (cfg.normalization == Normalization::kGroup) {
    gn1 = nn::GroupNorm(cfg.in_channels);
    gn2 = nn::GroupNorm(cfg.out_channels);
  } else {
    bn1 = nn::BatchNorm2d(cfg.in_channels);
    bn2 = nn::BatchNorm2d(cfg.out_channels);
  }
  conv1 = nn::Conv2d(cfg.in_channels, cfg.out_channels, 3, 1, 1, rng);
  conv2 = nn::Conv2d(cfg.out_channels, cfg.out_channels, 3, 1, 1, rng);
  has_skip = cfg.in_channels != cfg.out_channels;
  if (has_skip) skip = nn::Conv2d(cfg.in_channels, cfg.out_channels, 1, 1, 0, rng);
}

Var ResBlock::forward(const Var& x, bool training) const {
  if (x->value.rank() != 4 || x->value.dim(1) != cfg.in_channels)
    throw Error(ErrorKind::Config, "ResBlock: input channels " +
                                       std::to_string(x->value.dim(1)) + " != configured " +
                                       std::to_string(cfg.in_channels));
  auto norm1 = [&](const Var& t) {
    return cfg.normalization == Normalization::kGroup ? gn1.forward(t) : bn1.forward(t, training);
  };
  auto norm2 = [&](const Var& t) {
    return cfg.normalization == Normalization::kGroup ? gn2.forward(t) : bn2.forward(t, training);
  };
  Var h = conv1.forward(ops::swish(norm1(x)));
  h = conv2.forward(ops::swish(norm2(h)));
  Var s = has_skip ? skip.forward(x) : x;
  return ops::add(s, h);
}

void ResBlock::collect(const std::string& prefix, nn::ParamMap& pm) const {
  if (cfg.normalization == Normalization::kGroup) {
    gn1.collect(prefix + ".gn1", pm);
    gn2.collect(prefix + ".gn2", pm);
  } else {
    bn1.collect(prefix + ".bn1", pm);
    bn2.collect(prefix + ".bn2", pm);
  }
  conv1.collect(prefix + ".conv1", pm);
  conv2.collect(prefix + ".conv2", pm);
  if (has_skip) skip.collect(prefix + ".skip", pm);
}

SelfAttention::SelfAttention(int channels, std::mt19937_64& rng) : norm(channels) {
  q = nn::Conv2d(channels, channels, 1, 1, 0, rng);
  k = nn::Conv2d(channels, channels, 1, 1, 0, rng);
  v = nn::Conv2d(channels, channels, 1, 1, 0, rng);
  out = nn::Conv2d(channels, channels, 1, 1, 0, rng);
}

Var SelfAttention::forward(const Var& x, Var* attn_out) const {
  if (!x->value.all_finite()) throw Error(ErrorKind::Numeric, "SelfAttention: non-finite input");
  const Shape& s = x->value.shape;
  int n = s[0], c = s[1], h = s[2], w = s[3];
  int hw = h * w;
  Var xn = norm.forward(x);
  Var qv = ops::reshape(q.forward(xn), {n, c, hw});
  Var kv = ops::reshape(k.forward(xn), {n, c, hw});
  Var vv = ops::reshape(v.forward(xn), {n, c, hw});
  Var qt = ops::permute(qv, {0, 2, 1});                          // (n,hw,c)
  Var logits = ops::mul_scalar(ops::bmm(qt, kv), 1.0 / std::sqrt(static_cast<double>(c)));
  Var attn = ops::softmax(logits, 2);                            // rows sum to 1
  if (attn_out) *attn_out = attn;
  Var vt = ops::permute(vv, {0, 2, 1});                          // (n,hw,c)
  Var mixed = ops::bmm(attn, vt);                                // (n,hw,c)
  Var back = ops::reshape(ops::permute(mixed, {0, 2, 1}), {n, c, h, w});
  return ops::add(x, out.forward(back));
}

void SelfAttention::collect(const std::string& prefix, nn::ParamMap& pm) const {
  norm.collect(prefix + ".norm", pm);
  q.collect(prefix + ".q", pm);
  k.collect(prefix + ".k", pm);
  v.collect(prefix + ".v", pm);
  out.collect(prefix + ".out", pm);
}

Downsample::Downsample(int channels, std::mt19937_64& rng) {
  conv = nn::Conv2d(channels, channels, 3, 2, 1, rng);
}

Var Downsample::forward(const Var& x) const {
  if (x->value.dim(2) < 2 || x->value.dim(3) < 2)
    throw Error(ErrorKind::Input, "Downsample: degenerate 1x1 input");
  return conv.forward(x);  // k3 s2 p1 realizes ceil(H/2)
}

UpsampleBlock::UpsampleBlock(const BlockConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  conv = nn::Conv2d(cfg.in_channels, cfg.out_channels, 3, 1, 1, rng);
}

}  // namespace cevae
