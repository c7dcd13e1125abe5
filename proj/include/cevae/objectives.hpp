#ifndef CEVAE_OBJECTIVES_HPP_
#define CEVAE_OBJECTIVES_HPP_

#include "cevae/nn.hpp"

namespace cevae {

struct LossToggles {
  bool rec_on = true;
  bool lpips_on = true;
  bool gan_on = true;
  bool ssim_on = true;

  void validate() const {
    if (!rec_on && !lpips_on && !gan_on && !ssim_on)
      throw Error(ErrorKind::Config, "LossToggles: at least one term must be active");
  }
  std::string str() const;
};

LossToggles parse_toggles(const std::string& spec);  // e.g. "rec+ssim"

struct LossBreakdown {
  double rec = 0, lpips = 0, gan = 0, ssim = 0;
  double lambda = 0;
  double total = 0;
  Var total_var;  // differentiable total
};

// Frozen feature pyramid standing in for a pretrained perceptual model.
// Weights come from a fixed seed; a loader hook can overwrite them with
// externally supplied pretrained tensors.
struct FeatureExtractor {
  std::vector<nn::Conv2d> stages;

  FeatureExtractor() = default;
  explicit FeatureExtractor(uint64_t seed, int in_channels = 3);
  std::vector<Var> features(const Var& img) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
  void load_weights(const std::vector<Tensor>& tensors);
};

// Strided conv stack emitting a grid of real/fake patch logits.
struct PatchDiscriminator {
  std::vector<nn::Conv2d> convs;
  std::vector<nn::GroupNorm> norms;
  nn::Conv2d head;

  PatchDiscriminator() = default;
  PatchDiscriminator(uint64_t seed, int base_channels = 64);
  Var logits(const Var& img) const;
  void collect(const std::string& prefix, nn::ParamMap& pm) const;
  nn::ParamMap params() const;
};

// Mean absolute error.
Var rec_loss(const Var& gt, const Var& pred);

// L2 distance between stacked extractor features.
Var lpips_loss(const Var& gt, const Var& pred, const FeatureExtractor& phi);

// Discriminator objective: -mean[log s(real)] - mean[log(1 - s(fake))].
Var discriminator_loss(const Var& real_logits, const Var& fake_logits);

// Non-saturating generator term: -mean[log s(fake)].
Var generator_gan_loss(const Var& fake_logits);

// lambda = |grad rec| / (|grad gan| + delta), clamped to [0, 1e4]; treated
// as a constant afterwards (no gradient through it).
double adaptive_lambda(double grad_rec, double grad_gan, double delta,
                       double clamp_max = 1e4);

// 1 - mean SSIM over non-overlapping 11x11 patches (leftover border dropped).
Var ssim_loss(const Var& gt, const Var& pred, double value_range = 2.0);

// Differentiable mean SSIM component of the loss (before the 1-x flip).
Var ssim_patch_similarity(const Var& gt, const Var& pred, double value_range = 2.0);

LossBreakdown combined_loss(const Var& gt, const Var& pred, const LossToggles& toggles,
                            const FeatureExtractor& phi, const PatchDiscriminator& psi,
                            double lambda, double value_range = 2.0);

}  // namespace cevae

#endif  // CEVAE_OBJECTIVES_HPP_
