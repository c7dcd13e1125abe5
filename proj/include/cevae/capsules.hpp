#ifndef CEVAE_CAPSULES_HPP_
#define CEVAE_CAPSULES_HPP_

#include "cevae/nn.hpp"

namespace cevae {

struct CapsuleConfig {
  int in_channels = 256;        // latent channels
  int num_primary_types = 32;   // beta_L
  int primary_dim = 16;         // C_U
  int primary_kernel = 8;       // 16 -> 9 at stride 1, no padding
  int num_output_caps = 64;     // beta_{L+1}
  int output_dim = 32;          // C_Uhat
  int routing_iters = 3;        // alpha
  int out_channels = 256;       // C_C, matches the latent so decoders line up
  int out_kernel = 8;           // transposed conv, 9 -> 16

  void validate() const {
    if (routing_iters < 1) throw Error(ErrorKind::Config, "CapsuleConfig: alpha must be >= 1");
    if (num_primary_types < 1 || primary_dim < 1 || num_output_caps < 1 || output_dim < 1)
      throw Error(ErrorKind::Config, "CapsuleConfig: capsule counts must be >= 1");
  }
};

// Eq.-style squash along `axis`; the norm uses sqrt(sum s^2 + eps) so the
// zero vector stays differentiable.
Var squash(const Var& s, int axis, double eps = 1e-8);

struct RoutingResult {
  Var couplings;   // (N,J,I,1,P), last-iteration c
  Var activities;  // (N,J,1,Ch,P), last-iteration v
  int iterations_run = 0;
  std::vector<Tensor> logit_trace;  // b after each update (diagnostics/tests)
};

// alpha iterations of softmax -> weighted sum -> squash -> agreement update.
// Routing runs independently per spatial position, batched over P.
RoutingResult route(const Var& predictions, int alpha, bool keep_trace = false);

// Coupling-weighted collapse over input capsules i: (N,J,I,Ch,P)x(N,J,I,1,P) -> (N,J,Ch,P).
Var collapse(const Var& predictions, const Var& couplings);

// l2 norm over the output-capsule axis J: (N,J,Ch,H,W) -> (N,Ch,H,W).
Var entity_presence(const Var& routed, double eps = 1e-30);

struct CapsuleClustering {
  CapsuleConfig cfg;
  nn::Conv2d primary;            // in_channels -> num_primary_types*primary_dim
  Var transform;                 // (I,J,Ch,Cu)
  nn::ConvTranspose2d output_up; // output_dim -> out_channels

  CapsuleClustering() = default;
  CapsuleClustering(const CapsuleConfig& cfg, std::mt19937_64& rng);

  // (N,Cx,H,W) -> (N,I,Cu,Hu,Wu)
  Var primary_capsules(const Var& latent) const;
  // (N,I,Cu,Hu,Wu) -> predictions (N,J,I,Ch,Hu*Wu)
  Var predict(const Var& primary_out) const;
  // full pipeline: latent -> capsule vectors (N,C_C,H,W)
  Var capsule_vectors(const Var& latent) const;
  // routed collapse tensor Uhat (N,J,Ch,Hu,Wu), exposed for shape checks
  Var routed_collapsed(const Var& latent) const;

  void collect(const std::string& prefix, nn::ParamMap& pm) const;
};

}  // namespace cevae

#endif  // CEVAE_CAPSULES_HPP_
