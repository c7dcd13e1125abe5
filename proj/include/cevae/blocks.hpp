#ifndef CEVAE_BLOCKS_HPP_
#define CEVAE_BLOCKS_HPP_

#include "cevae/nn.hpp"

namespace cevae {

enum class Normalization { kBatch, kGroup };
enum class Activation { kSwish };

struct BlockConfig {
  int in_channels = 1;
  int out_channels = 1;
  Normalization normalization = Normalization::kGroup;
  Activation activation = Activation::kSwish;

  void validate() const {
    if (in_channels < 1 || out_channels < 1)
      throw Error(ErrorKind::Config, "BlockConfig: channel counts must be >= 1");
  }
};

// norm -> swish -> conv, twice, plus an identity (or 1x1-projected) skip.
// Zeroing the second conv makes the residual branch vanish.
struct ResBlock {
  BlockConfig cfg;
  nn::GroupNorm gn1, gn2;
  nn::BatchNorm2d bn1, bn2;
  nn::Conv2d conv1, conv2;
  nn::Conv2d skip;  // used when in != out
  bool has_skip = false;

  ResBlock() = default;
  ResBlock(const BlockConfig& cfg, std::mt19937_64& rng);
  Var forward(const Var& x, bool training = false) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

// Single-head spatial self-attention with residual add: x + proj(attend(x)).
// Attention rows (one per query position) are softmax-normalized.
struct SelfAttention {
  nn::GroupNorm norm;
  nn::Conv2d q, k, v, out;

  SelfAttention() = default;
  SelfAttention(int channels, std::mt19937_64& rng);
  Var forward(const Var& x, Var* attn_out = nullptr) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

// Strided 3x3 conv halving spatial size with ceiling semantics.
struct Downsample {
  nn::Conv2d conv;

  Downsample() = default;
  Downsample(int channels, std::mt19937_64& rng);
  Var forward(const Var& x) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const {
    conv.collect(prefix + ".conv", pm);
  }
};

// Nearest-neighbor 2x resize followed by a 3x3 conv.
struct UpsampleBlock {
  nn::Conv2d conv;

  UpsampleBlock() = default;
  UpsampleBlock(const BlockConfig& cfg, std::mt19937_64& rng);
  Var forward(const Var& x) const { return conv.forward(ops::upsample_nearest2x(x)); }
  void collect(const std::string& prefix, nn::ParamMap& pm) const {
    conv.collect(prefix + ".conv", pm);
  }
};

}  // namespace cevae

#endif  // CEVAE_BLOCKS_HPP_
