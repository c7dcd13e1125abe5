#ifndef CEVAE_NN_HPP_
#define CEVAE_NN_HPP_

#include <string>
#include <utility>
#include <vector>

#include "cevae/ops.hpp"

namespace cevae::nn {

// Named parameter/buffer registry used by the optimizer and checkpoints.
// Buffers (trainable == false) are persisted but never stepped.
struct ParamMap {
  struct Entry {
    std::string name;
    Var var;
    bool trainable;
  };
  std::vector<Entry> items;
  void add(std::string name, Var v, bool trainable = true) {
    items.push_back({std::move(name), std::move(v), trainable});
  }
};

Var make_param(Tensor t);

struct Conv2d {
  Var weight, bias;  // (F,C,k,k), (F)
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, std::mt19937_64& rng,
         double weight_scale = 1.0);
  Var forward(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }
  void collect(const std::string& prefix, ParamMap& pm) const {
    pm.add(prefix + ".weight", weight);
    pm.add(prefix + ".bias", bias);
  }
};

struct ConvTranspose2d {
  Var weight, bias;  // (C,F,k,k), (F)
  int stride = 1, pad = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, std::mt19937_64& rng);
  Var forward(const Var& x) const { return ops::conv_transpose2d(x, weight, bias, stride, pad); }
  void collect(const std::string& prefix, ParamMap& pm) const {
    pm.add(prefix + ".weight", weight);
    pm.add(prefix + ".bias", bias);
  }
};

struct GroupNorm {
  Var gamma, beta;
  int groups = 1;
  double eps = 1e-6;

  GroupNorm() = default;
  explicit GroupNorm(int channels);
  Var forward(const Var& x) const;
  void collect(const std::string& prefix, ParamMap& pm) const {
    pm.add(prefix + ".gamma", gamma);
    pm.add(prefix + ".beta", beta);
  }
};

struct BatchNorm2d {
  Var gamma, beta;
  Var running_mean, running_var;  // buffers
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);
  Var forward(const Var& x, bool training) const;
  void collect(const std::string& prefix, ParamMap& pm) const {
    pm.add(prefix + ".gamma", gamma);
    pm.add(prefix + ".beta", beta);
    pm.add(prefix + ".running_mean", running_mean, false);
    pm.add(prefix + ".running_var", running_var, false);
  }
};

int default_groups(int channels);

}  // namespace cevae::nn

#endif  // CEVAE_NN_HPP_
