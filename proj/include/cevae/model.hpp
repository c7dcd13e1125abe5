#ifndef CEVAE_MODEL_HPP_
#define CEVAE_MODEL_HPP_

#include "cevae/capsules.hpp"
#include "cevae/decoder.hpp"
#include "cevae/encoder.hpp"

namespace cevae {

enum class AblationMode { kFull, kNoSpatial, kNoCapsule };

AblationMode parse_ablation_mode(const std::string& name);

struct CevaeConfig {
  EncoderConfig encoder;
  CapsuleConfig capsules;
  DecoderConfig decoder;

  // Paper-scale geometry: 256x256 images, 256x16x16 latent.
  static CevaeConfig reference();
  // Desk-scale geometry for tests and the training sanity run: 32x32 images.
  static CevaeConfig tiny();
  // 64x64 variant used by the overfit fixture.
  static CevaeConfig small();

  std::string serialize() const;
  static CevaeConfig parse(const std::string& text);
  uint64_t hash() const;
  void validate() const;
};

// Full CE-VAE: encoder E, capsule clustering Q, capsule decoder D_C,
// spatial decoder D_S, output = D_C(Q(X)) + D_S(X).
struct CevaeModel {
  CevaeConfig cfg;
  uint64_t seed = 0;
  AblationMode mode = AblationMode::kFull;
  bool training = false;

  Encoder encoder;
  CapsuleClustering capsules;
  CapsuleDecoder dec_capsule;
  SpatialDecoder dec_spatial;

  CevaeModel(const CevaeConfig& cfg, uint64_t seed, AblationMode mode = AblationMode::kFull);

  Var encode(const Var& images) const { return encoder.encode(images, training); }
  Var capsule_vectors(const Var& latent) const { return capsules.capsule_vectors(latent); }
  Var decode_capsule(const Var& latent) const {
    return dec_capsule.forward(capsules.capsule_vectors(latent), training);
  }
  Var decode_spatial(const Var& latent) const { return dec_spatial.forward(latent, training); }

  // Pre-clamp enhanced image from the latent; the only decode entry point,
  // so no image-space data can cross the online/offline boundary.
  Var enhance(const Var& latent) const;
  // Convenience composition for full-pipeline runs.
  Var enhance_images(const Var& images) const { return enhance(encode(images)); }

  // Same weights, one branch structurally removed.
  CevaeModel ablation_variant(AblationMode m) const;

  nn::ParamMap params() const;
};

// Inference-side clamp to the [-1,1] image range.
Tensor clamp_image(const Tensor& img);

// [-1,1] <-> [0,1] conversions used at the metric boundary.
Tensor to_unit_range(const Tensor& img);
Tensor from_unit_range(const Tensor& img);

}  // namespace cevae

#endif  // CEVAE_MODEL_HPP_
