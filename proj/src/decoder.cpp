#include "cevae/decoder.hpp"

namespace cevae {

CapsuleDecoder::CapsuleDecoder(const DecoderConfig& cfg_, std::mt19937_64& rng) : cfg(cfg_) {
  cfg.validate();
  for (int i = 0; i < cfg.num_blocks; ++i) {
    int cin = cfg.channel_schedule[static_cast<size_t>(i)];
    int cout = cfg.channel_schedule[static_cast<size_t>(i) + 1];
    res.emplace_back(BlockConfig{cin, cout, Normalization::kGroup, Activation::kSwish}, rng);
    up.emplace_back(BlockConfig{cout, cout, Normalization::kGroup, Activation::kSwish}, rng);
  }
  proj = nn::Conv2d(cfg.channel_schedule.back(), 3, 3, 1, 1, rng);
}

Var CapsuleDecoder::forward(const Var& capsule_vectors, bool training) const {
  const Shape& s = capsule_vectors->value.shape;
  if (s.size() != 4 || s[1] != cfg.channel_schedule[0])
    throw Error(ErrorKind::Input, "CapsuleDecoder: expected (N," +
                                      std::to_string(cfg.channel_schedule[0]) + ",h,w), got " +
                                      shape_str(s));
  Var h = capsule_vectors;
  for (int i = 0; i < cfg.num_blocks; ++i) {
    h = res[static_cast<size_t>(i)].forward(h, training);
    h = up[static_cast<size_t>(i)].forward(h);
  }
  return proj.forward(h);
}

void CapsuleDecoder::collect(const std::string& prefix, nn::ParamMap& pm) const {
  for (size_t i = 0; i < res.size(); ++i) {
    res[i].collect(prefix + ".res" + std::to_string(i), pm);
    up[i].collect(prefix + ".up" + std::to_string(i), pm);
  }
  proj.collect(prefix + ".proj", pm);
}

SpatialDecoder::SpatialDecoder(const DecoderConfig& cfg_, std::mt19937_64& rng) : cfg(cfg_) {
  cfg.validate();
  for (int i = 0; i < cfg.num_blocks; ++i) {
    int cin = cfg.channel_schedule[static_cast<size_t>(i)];
    int cout = cfg.channel_schedule[static_cast<size_t>(i) + 1];
    up.emplace_back(cin, cout, 4, 2, 1, rng);  // exact 2x upsample
    res.emplace_back(BlockConfig{cout, cout, Normalization::kGroup, Activation::kSwish}, rng);
  }
  proj = nn::Conv2d(cfg.channel_schedule.back(), 3, 3, 1, 1, rng);
}

Var SpatialDecoder::forward(const Var& latent, bool training) const {
  const Shape& s = latent->value.shape;
  if (s.size() != 4 || s[1] != cfg.channel_schedule[0])
    throw Error(ErrorKind::Input, "SpatialDecoder: expected (N," +
                                      std::to_string(cfg.channel_schedule[0]) + ",h,w), got " +
                                      shape_str(s));
  Var h = latent;
  for (int i = 0; i < cfg.num_blocks; ++i) {
    h = up[static_cast<size_t>(i)].forward(h);
    h = res[static_cast<size_t>(i)].forward(h, training);
  }
  return proj.forward(h);
}

void SpatialDecoder::collect(const std::string& prefix, nn::ParamMap& pm) const {
  for (size_t i = 0; i < res.size(); ++i) {
    up[i].collect(prefix + ".up" + std::to_string(i), pm);
    res[i].collect(prefix + ".res" + std::to_string(i), pm);
  }
  proj.collect(prefix + ".proj", pm);
}

}  // namespace cevae
