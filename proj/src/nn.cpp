#include "cevae/nn.hpp"

#include <cmath>

namespace cevae::nn {

Var make_param(Tensor t) { return make_leaf(std::move(t), true); }

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride_, int pad_, std::mt19937_64& rng,
               double weight_scale)
    : stride(stride_), pad(pad_) {
  double std = weight_scale * std::sqrt(2.0 / (static_cast<double>(in_ch) * kernel * kernel));
  weight = make_param(Tensor::randn({out_ch, in_ch, kernel, kernel}, rng, std));
  bias = make_param(Tensor::zeros({out_ch}));
}

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride_, int pad_,
                                 std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
  double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * kernel * kernel));
  weight = make_param(Tensor::randn({in_ch, out_ch, kernel, kernel}, rng, std));
  bias = make_param(Tensor::zeros({out_ch}));
}

int default_groups(int channels) {
  for (int g = 8; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

GroupNorm::GroupNorm(int channels) : groups(default_groups(channels)) {
  gamma = make_param(Tensor::full({1, channels, 1, 1}, 1.0));
  beta = make_param(Tensor::zeros({1, channels, 1, 1}));
}

Var GroupNorm::forward(const Var& x) const {
  const Shape& s = x->value.shape;
  if (s.size() != 4) throw Error(ErrorKind::Input, "GroupNorm: expected 4-d input");
  int n = s[0], c = s[1], h = s[2], w = s[3];
  if (c % groups != 0) throw Error(ErrorKind::Config, "GroupNorm: channels not divisible by groups");
  Var g = ops::reshape(x, {n, groups, (c / groups) * h * w});
  Var mu = ops::reduce_mean(g, {2}, true);
  Var xc = ops::sub(g, mu);
  Var var = ops::reduce_mean(ops::square(xc), {2}, true);
  Var xn = ops::div(xc, ops::sqrt(ops::add_scalar(var, eps)));
  Var back = ops::reshape(xn, s);
  return ops::add(ops::mul(back, gamma), beta);
}

BatchNorm2d::BatchNorm2d(int channels) {
  gamma = make_param(Tensor::full({1, channels, 1, 1}, 1.0));
  beta = make_param(Tensor::zeros({1, channels, 1, 1}));
  running_mean = make_leaf(Tensor::zeros({1, channels, 1, 1}), false);
  running_var = make_leaf(Tensor::full({1, channels, 1, 1}, 1.0), false);
}

Var BatchNorm2d::forward(const Var& x, bool training) const {
  if (x->value.rank() != 4) throw Error(ErrorKind::Input, "BatchNorm: expected 4-d input");
  if (training) {
    Var mu = ops::reduce_mean(x, {0, 2, 3}, true);
    Var xc = ops::sub(x, mu);
    Var var = ops::reduce_mean(ops::square(xc), {0, 2, 3}, true);
    // running stats track the batch statistics; no gradient flows through them
    for (int64_t i = 0; i < running_mean->value.numel(); ++i) {
      running_mean->value[i] = (1.0 - momentum) * running_mean->value[i] + momentum * mu->value[i];
      running_var->value[i] = (1.0 - momentum) * running_var->value[i] + momentum * var->value[i];
    }
    Var xn = ops::div(xc, ops::sqrt(ops::add_scalar(var, eps)));
    return ops::add(ops::mul(xn, gamma), beta);
  }
  Var xc = ops::sub(x, running_mean);
  Var xn = ops::div(xc, ops::sqrt(ops::add_scalar(running_var, eps)));
  return ops::add(ops::mul(xn, gamma), beta);
}

}  // namespace cevae::nn
