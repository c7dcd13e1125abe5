#ifndef CEVAE_DECODER_HPP_
#define CEVAE_DECODER_HPP_

#include "cevae/blocks.hpp"

namespace cevae {

struct DecoderConfig {
  int num_blocks = 4;
  // schedule has num_blocks+1 entries; [0] must equal the latent/capsule channels
  std::vector<int> channel_schedule = {256, 128, 64, 32, 16};

  void validate() const {
    if (num_blocks < 1) throw Error(ErrorKind::Config, "DecoderConfig: num_blocks must be >= 1");
    if (static_cast<int>(channel_schedule.size()) != num_blocks + 1)
      throw Error(ErrorKind::Config, "DecoderConfig: schedule length must be num_blocks+1");
  }
};

// D_C: capsule vectors -> image, blocks of ResBlock + UpSampleBlock.
struct CapsuleDecoder {
  DecoderConfig cfg;
  std::vector<ResBlock> res;
  std::vector<UpsampleBlock> up;
  nn::Conv2d proj;  // 3-channel output projection, no activation

  CapsuleDecoder() = default;
  CapsuleDecoder(const DecoderConfig& cfg, std::mt19937_64& rng);
  Var forward(const Var& capsule_vectors, bool training = false) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

// D_S: latent -> image, blocks of TransposedConv (2x) + ResBlock.
struct SpatialDecoder {
  DecoderConfig cfg;
  std::vector<nn::ConvTranspose2d> up;
  std::vector<ResBlock> res;
  nn::Conv2d proj;

  SpatialDecoder() = default;
  SpatialDecoder(const DecoderConfig& cfg, std::mt19937_64& rng);
  Var forward(const Var& latent, bool training = false) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

}  // namespace cevae

#endif  // CEVAE_DECODER_HPP_
