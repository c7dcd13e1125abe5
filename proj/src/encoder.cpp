#include "cevae/encoder.hpp"

#include <chrono>

namespace cevae {

Encoder::Encoder(const EncoderConfig& cfg_, std::mt19937_64& rng) : cfg(cfg_) {
  cfg.validate();
  stem_conv = nn::Conv2d(3, cfg.channel_schedule[0], 3, 1, 1, rng);
  int prev = cfg.channel_schedule[0];
  for (int i = 0; i < cfg.num_blocks; ++i) {
    int out = cfg.channel_schedule[static_cast<size_t>(i)];
    res.emplace_back(BlockConfig{prev, out, Normalization::kGroup, Activation::kSwish}, rng);
    attn.emplace_back(out, rng);
    if (i + 1 < cfg.num_blocks) down.emplace_back(out, rng);
    prev = out;
  }
  final_bn = nn::BatchNorm2d(prev);
  final_conv = nn::Conv2d(prev, cfg.latent_channels, 3, 1, 1, rng);
}

Var Encoder::stem(const Var& img) const {
  if (img->value.rank() != 4 || img->value.dim(1) != 3)
    throw Error(ErrorKind::Input, "Encoder: expected (N,3,H,W) input, got " +
                                      shape_str(img->value.shape));
  return stem_conv.forward(img);
}

Var Encoder::encode(const Var& img, bool training) const {
  Var h = stem(img);
  int height = img->value.dim(2), width = img->value.dim(3);
  int f = downsample_factor();
  if (height % f != 0 || width % f != 0 || height / f < 1 || width / f < 1)
    throw Error(ErrorKind::Input,
                "Encoder: spatial size " + std::to_string(height) + "x" + std::to_string(width) +
                    " not divisible by " + std::to_string(f));
  int res_px = height;
  for (int i = 0; i < cfg.num_blocks; ++i) {
    h = res[static_cast<size_t>(i)].forward(h, training);
    if (cfg.attention_everywhere || res_px <= cfg.attention_resolution_threshold)
      h = attn[static_cast<size_t>(i)].forward(h);
    if (i + 1 < cfg.num_blocks) {
      h = down[static_cast<size_t>(i)].forward(h);
      res_px = (res_px + 1) / 2;
    }
  }
  Var x = final_conv.forward(ops::swish(final_bn.forward(h, training)));
  if (!x->value.all_finite()) throw Error(ErrorKind::Numeric, "Encoder: non-finite activations");
  return x;
}

std::pair<Var, double> Encoder::encode_timed(const Var& img) const {
  auto t0 = std::chrono::steady_clock::now();
  Var x = encode(img, false);
  auto t1 = std::chrono::steady_clock::now();
  return {x, std::chrono::duration<double>(t1 - t0).count()};
}

void Encoder::collect(const std::string& prefix, nn::ParamMap& pm) const {
  stem_conv.collect(prefix + ".stem", pm);
  for (size_t i = 0; i < res.size(); ++i) {
    res[i].collect(prefix + ".res" + std::to_string(i), pm);
    attn[i].collect(prefix + ".attn" + std::to_string(i), pm);
  }
  for (size_t i = 0; i < down.size(); ++i) down[i].collect(prefix + ".down" + std::to_string(i), pm);
  final_bn.collect(prefix + ".final_bn", pm);
  final_conv.collect(prefix + ".final_conv", pm);
}

}  // namespace cevae
