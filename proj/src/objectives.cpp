#include "cevae/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace cevae {

std::string LossToggles::str() const {
  std::string s;
  auto app = [&](const char* n) {
    if (!s.empty()) s += "+";
    s += n;
  };
  if (rec_on) app("rec");
  if (lpips_on) app("lpips");
  if (gan_on) app("gan");
  if (ssim_on) app("ssim");
  return s;
}

LossToggles parse_toggles(const std::string& spec) {
  LossToggles t{false, false, false, false};
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (cur == "rec")
      t.rec_on = true;
    else if (cur == "lpips")
      t.lpips_on = true;
    else if (cur == "gan")
      t.gan_on = true;
    else if (cur == "ssim")
      t.ssim_on = true;
    else
      throw Error(ErrorKind::Config,
                  "unknown loss toggle '" + cur + "' (valid: rec, lpips, gan, ssim)");
    cur.clear();
  };
  for (char c : spec) {
    if (c == '+' || c == ',')
      flush();
    else
      cur += c;
  }
  flush();
  t.validate();
  return t;
}

FeatureExtractor::FeatureExtractor(uint64_t seed, int in_channels) {
  std::mt19937_64 rng(seed);
  std::vector<int> chans = {in_channels, 8, 16, 32, 64, 64};
  for (size_t i = 0; i + 1 < chans.size(); ++i) {
    nn::Conv2d c(chans[i], chans[i + 1], 3, 2, 1, rng);
    c.weight->requires_grad = false;  // frozen
    c.bias->requires_grad = false;
    stages.push_back(std::move(c));
  }
}

std::vector<Var> FeatureExtractor::features(const Var& img) const {
  std::vector<Var> out;
  Var h = img;
  for (size_t i = 0; i < stages.size(); ++i) {
    if (h->value.dim(2) < 2 || h->value.dim(3) < 2) break;
    h = ops::swish(stages[i].forward(h));
    out.push_back(h);
  }
  if (out.empty()) throw Error(ErrorKind::Dependency, "FeatureExtractor: input too small");
  return out;
}

void FeatureExtractor::collect(const std::string& prefix, nn::ParamMap& pm) const {
  for (size_t i = 0; i < stages.size(); ++i)
    stages[i].collect(prefix + ".stage" + std::to_string(i), pm);
}

void FeatureExtractor::load_weights(const std::vector<Tensor>& tensors) {
  if (tensors.size() != stages.size() * 2)
    throw Error(ErrorKind::Dependency, "FeatureExtractor: expected weight,bias per stage");
  for (size_t i = 0; i < stages.size(); ++i) {
    if (tensors[2 * i].shape != stages[i].weight->value.shape ||
        tensors[2 * i + 1].shape != stages[i].bias->value.shape)
      throw Error(ErrorKind::Dependency, "FeatureExtractor: weight shape mismatch");
    stages[i].weight->value = tensors[2 * i];
    stages[i].bias->value = tensors[2 * i + 1];
  }
}

PatchDiscriminator::PatchDiscriminator(uint64_t seed, int base_channels) {
  std::mt19937_64 rng(seed);
  int c = base_channels;
  convs.emplace_back(3, c, 4, 2, 1, rng);
  convs.emplace_back(c, 2 * c, 4, 2, 1, rng);
  convs.emplace_back(2 * c, 4 * c, 4, 2, 1, rng);
  convs.emplace_back(4 * c, 4 * c, 4, 1, 1, rng);
  norms.emplace_back(2 * c);
  norms.emplace_back(4 * c);
  norms.emplace_back(4 * c);
  head = nn::Conv2d(4 * c, 1, 4, 1, 1, rng);
}

Var PatchDiscriminator::logits(const Var& img) const {
  Var h = ops::leaky_relu(convs[0].forward(img), 0.2);
  for (size_t i = 1; i < convs.size(); ++i)
    h = ops::leaky_relu(norms[i - 1].forward(convs[i].forward(h)), 0.2);
  return head.forward(h);
}

void PatchDiscriminator::collect(const std::string& prefix, nn::ParamMap& pm) const {
  for (size_t i = 0; i < convs.size(); ++i) convs[i].collect(prefix + ".conv" + std::to_string(i), pm);
  for (size_t i = 0; i < norms.size(); ++i) norms[i].collect(prefix + ".norm" + std::to_string(i), pm);
  head.collect(prefix + ".head", pm);
}

nn::ParamMap PatchDiscriminator::params() const {
  nn::ParamMap pm;
  collect("disc", pm);
  return pm;
}

Var rec_loss(const Var& gt, const Var& pred) {
  if (gt->value.shape != pred->value.shape)
    throw Error(ErrorKind::Input, "rec_loss: shape mismatch");
  return ops::mean_all(ops::abs(ops::sub(gt, pred)));
}

Var lpips_loss(const Var& gt, const Var& pred, const FeatureExtractor& phi) {
  if (gt->value.shape != pred->value.shape)
    throw Error(ErrorKind::Input, "lpips_loss: shape mismatch");
  auto fa = phi.features(gt);
  auto fb = phi.features(pred);
  Var acc;
  for (size_t i = 0; i < fa.size(); ++i) {
    Var d = ops::sum_all(ops::square(ops::sub(fa[i], fb[i])));
    acc = acc ? ops::add(acc, d) : d;
  }
  return ops::sqrt(ops::add_scalar(acc, 1e-24));
}

Var discriminator_loss(const Var& real_logits, const Var& fake_logits) {
  Var real_term = ops::mean_all(ops::softplus(ops::neg(real_logits)));
  Var fake_term = ops::mean_all(ops::softplus(fake_logits));
  return ops::add(real_term, fake_term);
}

Var generator_gan_loss(const Var& fake_logits) {
  return ops::mean_all(ops::softplus(ops::neg(fake_logits)));
}

double adaptive_lambda(double grad_rec, double grad_gan, double delta, double clamp_max) {
  if (grad_rec < 0 || grad_gan < 0)
    throw Error(ErrorKind::Contract, "adaptive_lambda: gradient norms must be non-negative");
  if (delta <= 0) throw Error(ErrorKind::Contract, "adaptive_lambda: delta must be positive");
  return std::clamp(grad_rec / (grad_gan + delta), 0.0, clamp_max);
}

Var ssim_patch_similarity(const Var& gt, const Var& pred, double value_range) {
  if (gt->value.shape != pred->value.shape)
    throw Error(ErrorKind::Input, "ssim_loss: shape mismatch");
  const Shape& s = gt->value.shape;
  if (s.size() != 4) throw Error(ErrorKind::Input, "ssim_loss: expected (N,C,H,W)");
  constexpr int kPatch = 11;
  int n = s[0], c = s[1], h = s[2], w = s[3];
  int hp = h / kPatch, wp = w / kPatch;
  if (hp < 1 || wp < 1)
    throw Error(ErrorKind::Input, "ssim_loss: image smaller than one 11x11 patch");
  auto patches = [&](const Var& img) {
    Var crop = ops::slice(img, {0, 0, 0, 0}, {n, c, hp * kPatch, wp * kPatch});
    return ops::reshape(crop, {n, c, hp, kPatch, wp, kPatch});
  };
  Var x = patches(gt), y = patches(pred);
  const std::vector<int> pax = {3, 5};
  Var mx = ops::reduce_mean(x, pax, true);
  Var my = ops::reduce_mean(y, pax, true);
  Var vx = ops::sub(ops::reduce_mean(ops::square(x), pax, true), ops::square(mx));
  Var vy = ops::sub(ops::reduce_mean(ops::square(y), pax, true), ops::square(my));
  Var cov = ops::sub(ops::reduce_mean(ops::mul(x, y), pax, true), ops::mul(mx, my));
  double k1 = 0.01 * value_range, k2 = 0.03 * value_range;
  double c1 = k1 * k1, c2 = k2 * k2;
  Var lum = ops::div(ops::add_scalar(ops::mul_scalar(ops::mul(mx, my), 2.0), c1),
                     ops::add_scalar(ops::add(ops::square(mx), ops::square(my)), c1));
  Var str = ops::div(ops::add_scalar(ops::mul_scalar(cov, 2.0), c2),
                     ops::add_scalar(ops::add(vx, vy), c2));
  return ops::mean_all(ops::mul(lum, str));
}

Var ssim_loss(const Var& gt, const Var& pred, double value_range) {
  // Eq. form is a similarity; flipped so the optimizer minimizes it.
  return ops::add_scalar(ops::neg(ssim_patch_similarity(gt, pred, value_range)), 1.0);
}

LossBreakdown combined_loss(const Var& gt, const Var& pred, const LossToggles& toggles,
                            const FeatureExtractor& phi, const PatchDiscriminator& psi,
                            double lambda, double value_range) {
  toggles.validate();
  LossBreakdown out;
  out.lambda = toggles.gan_on ? lambda : 0.0;
  Var total;
  auto accumulate = [&](const Var& term) { total = total ? ops::add(total, term) : term; };
  if (toggles.rec_on) {
    Var r = rec_loss(gt, pred);
    out.rec = r->value[0];
    accumulate(r);
  }
  if (toggles.lpips_on) {
    Var l = lpips_loss(gt, pred, phi);
    out.lpips = l->value[0];
    accumulate(l);
  }
  if (toggles.gan_on) {
    Var g = ops::mul_scalar(generator_gan_loss(psi.logits(pred)), out.lambda);
    out.gan = g->value[0];
    accumulate(g);
  }
  if (toggles.ssim_on) {
    Var s = ssim_loss(gt, pred, value_range);
    out.ssim = s->value[0];
    accumulate(s);
  }
  out.total_var = total;
  out.total = total->value[0];
  return out;
}

}  // namespace cevae
