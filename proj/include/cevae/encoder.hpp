#ifndef CEVAE_ENCODER_HPP_
#define CEVAE_ENCODER_HPP_

#include "cevae/blocks.hpp"

namespace cevae {

struct EncoderConfig {
  int num_blocks = 5;
  std::vector<int> channel_schedule = {16, 32, 64, 128, 256};
  int attention_resolution_threshold = 32;  // px; attention skipped above this
  bool attention_everywhere = false;
  int latent_channels = 256;

  void validate() const {
    if (num_blocks < 1) throw Error(ErrorKind::Config, "EncoderConfig: num_blocks must be >= 1");
    if (static_cast<int>(channel_schedule.size()) != num_blocks)
      throw Error(ErrorKind::Config, "EncoderConfig: schedule length must equal num_blocks");
    for (int c : channel_schedule)
      if (c < 1) throw Error(ErrorKind::Config, "EncoderConfig: bad channel count");
    if (latent_channels < 1) throw Error(ErrorKind::Config, "EncoderConfig: bad latent channels");
  }
};

// Online compression phase: image (N,3,H,W) in [-1,1] -> latent (N,Cx,H/2^(N-1),W/2^(N-1)).
struct Encoder {
  EncoderConfig cfg;
  nn::Conv2d stem_conv;
  std::vector<ResBlock> res;
  std::vector<SelfAttention> attn;
  std::vector<Downsample> down;
  nn::BatchNorm2d final_bn;
  nn::Conv2d final_conv;

  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::mt19937_64& rng);

  Var stem(const Var& img) const;
  Var encode(const Var& img, bool training = false) const;
  // Wall-clock measurement hook around encode (seconds).
  std::pair<Var, double> encode_timed(const Var& img) const;

  int downsample_factor() const { return 1 << (cfg.num_blocks - 1); }
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

}  // namespace cevae

#endif  // CEVAE_ENCODER_HPP_
