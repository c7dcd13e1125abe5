#include "cevae/capsules.hpp"

#include <cmath>

namespace cevae {

Var squash(const Var& s, int axis, double eps) {
  Var n2 = ops::add_scalar(ops::reduce_sum(ops::square(s), {axis}, true), eps);
  Var scale = ops::div(n2, ops::mul(ops::add_scalar(n2, 1.0), ops::sqrt(n2)));
  return ops::mul(s, scale);
}

RoutingResult route(const Var& predictions, int alpha, bool keep_trace) {
  if (alpha < 1) throw Error(ErrorKind::Config, "route: alpha must be >= 1");
  const Shape& s = predictions->value.shape;  // (N,J,I,Ch,P)
  if (s.size() != 5) throw Error(ErrorKind::Input, "route: expected (N,J,I,Ch,P) predictions");
  if (!predictions->value.all_finite())
    throw Error(ErrorKind::Numeric, "route: non-finite predictions");
  int n = s[0], j = s[1], i = s[2], p = s[4];
  RoutingResult out;
  Var b = make_leaf(Tensor::zeros({n, j, i, 1, p}), false);  // stateless: fresh logits per pass
  for (int t = 0; t < alpha; ++t) {
    Var c = ops::softmax(b, 1);
    Var sj = ops::reduce_sum(ops::mul(c, predictions), {2}, true);  // (N,J,1,Ch,P)
    Var v = squash(sj, 3);
    out.couplings = c;
    out.activities = v;
    if (t + 1 < alpha || keep_trace) {
      b = ops::add(b, ops::reduce_sum(ops::mul(v, predictions), {3}, true));
      if (keep_trace) out.logit_trace.push_back(b->value);
    }
  }
  out.iterations_run = alpha;
  return out;
}

Var collapse(const Var& predictions, const Var& couplings) {
  const Shape& sp = predictions->value.shape;
  const Shape& sc = couplings->value.shape;
  if (sp.size() != 5 || sc.size() != 5 || sc[3] != 1 || sp[0] != sc[0] || sp[1] != sc[1] ||
      sp[2] != sc[2] || sp[4] != sc[4])
    throw Error(ErrorKind::Contract, "collapse: couplings do not match predictions (stale state?)");
  return ops::reduce_sum(ops::mul(couplings, predictions), {2}, false);  // (N,J,Ch,P)
}

Var entity_presence(const Var& routed, double eps) {
  if (routed->value.rank() != 5)
    throw Error(ErrorKind::Input, "entity_presence: expected (N,J,Ch,H,W)");
  return ops::sqrt(ops::add_scalar(ops::reduce_sum(ops::square(routed), {1}, false), eps));
}

CapsuleClustering::CapsuleClustering(const CapsuleConfig& cfg_, std::mt19937_64& rng) : cfg(cfg_) {
  cfg.validate();
  primary = nn::Conv2d(cfg.in_channels, cfg.num_primary_types * cfg.primary_dim,
                       cfg.primary_kernel, 1, 0, rng);
  double std = std::sqrt(2.0 / (cfg.primary_dim * cfg.num_primary_types));
  transform = nn::make_param(Tensor::randn(
      {cfg.num_primary_types, cfg.num_output_caps, cfg.output_dim, cfg.primary_dim}, rng, std));
  output_up = nn::ConvTranspose2d(cfg.output_dim, cfg.out_channels, cfg.out_kernel, 1, 0, rng);
}

Var CapsuleClustering::primary_capsules(const Var& latent) const {
  const Shape& s = latent->value.shape;
  if (s.size() != 4 || s[1] != cfg.in_channels)
    throw Error(ErrorKind::Input, "primary_capsules: expected (N," +
                                      std::to_string(cfg.in_channels) + ",H,W), got " +
                                      shape_str(s));
  if (s[2] < cfg.primary_kernel || s[3] < cfg.primary_kernel)
    throw Error(ErrorKind::Input, "primary_capsules: input smaller than capsule kernel");
  Var u = primary.forward(latent);
  const Shape& us = u->value.shape;
  return ops::reshape(u, {us[0], cfg.num_primary_types, cfg.primary_dim, us[2], us[3]});
}

Var CapsuleClustering::predict(const Var& primary_out) const {
  const Shape& s = primary_out->value.shape;  // (N,I,Cu,Hu,Wu)
  if (s.size() != 5) throw Error(ErrorKind::Input, "predict: expected (N,I,Cu,H,W)");
  Var flat = ops::reshape(primary_out, {s[0], s[1], s[2], s[3] * s[4]});
  return ops::capsule_predict(flat, transform);  // (N,J,I,Ch,P)
}

Var CapsuleClustering::routed_collapsed(const Var& latent) const {
  Var u = primary_capsules(latent);
  int hu = u->value.dim(3), wu = u->value.dim(4);
  Var uhat = predict(u);
  RoutingResult r = route(uhat, cfg.routing_iters);
  Var collapsed = collapse(uhat, r.couplings);  // (N,J,Ch,P)
  const Shape& cs = collapsed->value.shape;
  return ops::reshape(collapsed, {cs[0], cs[1], cs[2], hu, wu});
}

Var CapsuleClustering::capsule_vectors(const Var& latent) const {
  Var uhat_maps = routed_collapsed(latent);        // (N,J,Ch,Hu,Wu)
  Var presence = entity_presence(uhat_maps);       // (N,Ch,Hu,Wu)
  return output_up.forward(presence);              // (N,C_C,H,W)
}

void CapsuleClustering::collect(const std::string& prefix, nn::ParamMap& pm) const {
  primary.collect(prefix + ".primary", pm);
  pm.add(prefix + ".transform", transform);
  output_up.collect(prefix + ".output_up", pm);
}

}  // namespace cevae
