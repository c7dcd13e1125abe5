#include "cevae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

namespace cevae {

void TrainConfig::validate() const {
  if (lr <= 0) throw Error(ErrorKind::Config, "TrainConfig: lr must be positive");
  if (delta <= 0) throw Error(ErrorKind::Config, "TrainConfig: delta must be positive");
  if (batch_size < 1) throw Error(ErrorKind::Config, "TrainConfig: batch_size must be >= 1");
  if (steps < 0) throw Error(ErrorKind::Config, "TrainConfig: steps must be >= 0");
  if (disc_start_step < 0) throw Error(ErrorKind::Config, "TrainConfig: disc_start_step >= 0");
  if (image_size < 1) throw Error(ErrorKind::Config, "TrainConfig: image_size must be >= 1");
  toggles.validate();
}

void Adam::init_like(const nn::ParamMap& params) {
  t = 0;
  m.clear();
  v.clear();
  for (const auto& e : params.items) {
    if (!e.trainable) continue;
    m.push_back(Tensor::zeros(e.var->value.shape));
    v.push_back(Tensor::zeros(e.var->value.shape));
  }
}

void Adam::step(const nn::ParamMap& params) {
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  size_t k = 0;
  for (const auto& e : params.items) {
    if (!e.trainable) continue;
    if (k >= m.size()) throw Error(ErrorKind::Contract, "Adam: state/param count mismatch");
    Tensor& mk = m[k];
    Tensor& vk = v[k];
    ++k;
    if (e.var->grad.data.empty()) continue;  // param unused this step
    Tensor& val = e.var->value;
    const Tensor& g = e.var->grad;
    for (int64_t i = 0; i < val.numel(); ++i) {
      mk[i] = beta1 * mk[i] + (1.0 - beta1) * g[i];
      vk[i] = beta2 * vk[i] + (1.0 - beta2) * g[i] * g[i];
      val[i] -= lr * (mk[i] / bc1) / (std::sqrt(vk[i] / bc2) + eps);
    }
  }
}

uint64_t param_hash(const nn::ParamMap& pm) {
  uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& e : pm.items) {
    mix(e.name.data(), e.name.size());
    mix(e.var->value.data.data(), e.var->value.data.size() * sizeof(double));
  }
  return h;
}

namespace {

void zero_param_grads(const nn::ParamMap& pm) {
  for (const auto& e : pm.items) e.var->zero_grad();
}

double grad_norm(const Var& param) {
  if (param->grad.data.empty()) return 0.0;
  double s = 0;
  for (double g : param->grad.data) s += g * g;
  return std::sqrt(s);
}

}  // namespace

Trainer::Trainer(const CevaeConfig& model_cfg_, const TrainConfig& cfg_)
    : cfg(cfg_),
      model_cfg(model_cfg_),
      model(model_cfg_, cfg_.seed),
      disc(cfg_.seed ^ 0xD15Cull),
      phi(0x5EEDF00Dull) {
  cfg.validate();
  opt_gen.lr = cfg.lr;
  opt_disc.lr = cfg.lr;
  opt_gen.init_like(model.params());
  opt_disc.init_like(disc.params());
}

LossBreakdown Trainer::train_step(const Tensor& degraded, const Tensor& reference) {
  model.training = true;
  auto x = make_leaf(degraded);
  auto y = make_leaf(reference);
  auto pred = model.enhance(model.encode(x));

  bool gan_active = cfg.toggles.gan_on && step >= cfg.disc_start_step;
  nn::ParamMap gp = model.params();
  nn::ParamMap dp = disc.params();

  // The discriminator weight lambda balances the adversarial term against the
  // reconstruction term via the gradient norms they induce at the enhancing
  // decoder's output layer. Probe with two separate backward passes.
  double lambda = 0;
  const Var& probe = (model.mode == AblationMode::kNoCapsule) ? model.dec_spatial.proj.weight
                                                              : model.dec_capsule.proj.weight;
  if (gan_active) {
    auto rec = rec_loss(y, pred);
    backward(rec);
    double grad_rec = grad_norm(probe);
    zero_graph(rec);
    zero_param_grads(gp);
    zero_param_grads(dp);
    auto gterm = generator_gan_loss(disc.logits(pred));
    backward(gterm);
    double grad_gan = grad_norm(probe);
    zero_graph(gterm);
    zero_param_grads(gp);
    zero_param_grads(dp);
    lambda = adaptive_lambda(grad_rec, grad_gan, cfg.delta);
  }

  LossToggles active = cfg.toggles;
  active.gan_on = gan_active;
  LossBreakdown lb;
  bool any_active = active.rec_on || active.lpips_on || active.ssim_on || active.gan_on;
  if (any_active) {
    lb = combined_loss(y, pred, active, phi, disc, lambda);
    if (!std::isfinite(lb.total))
      throw Error(ErrorKind::Numeric,
                  "non-finite loss at step " + std::to_string(step) + ": rec=" +
                      std::to_string(lb.rec) + " lpips=" + std::to_string(lb.lpips) + " gan=" +
                      std::to_string(lb.gan) + " ssim=" + std::to_string(lb.ssim) +
                      " lambda=" + std::to_string(lb.lambda));
    backward(lb.total_var);
    opt_gen.step(gp);
    zero_graph(lb.total_var);
    zero_param_grads(gp);
    zero_param_grads(dp);
  }

  if (gan_active) {
    auto real = disc.logits(y);
    auto fake = disc.logits(detach(pred));
    auto dl = discriminator_loss(real, fake);
    if (!std::isfinite(dl->value[0]))
      throw Error(ErrorKind::Numeric,
                  "non-finite discriminator loss at step " + std::to_string(step));
    backward(dl);
    opt_disc.step(dp);
    zero_graph(dl);
    zero_param_grads(dp);
  }

  if (log) {
    std::ostream& os = *log;
    os.precision(12);
    os << step << '\t' << lb.rec << '\t' << lb.lpips << '\t' << lb.gan << '\t' << lb.ssim << '\t'
       << lb.lambda << '\t' << lb.total << '\n';
  }
  ++step;
  return lb;
}

void Trainer::run(const DatasetManifest& data, const DatasetManifest* eval_data) {
  int64_t target = step + cfg.steps;
  for (int epoch = 0; step < target; ++epoch) {
    for (const auto& batch : batches(data, cfg.batch_size, cfg.seed, epoch)) {
      if (step >= target) break;
      std::vector<PairedSample> samples;
      for (size_t i = 0; i < batch.size(); ++i) {
        PairedSample s = load_pair(batch[i], cfg.image_size);
        if (cfg.augment_on)
          s = augment(s, cfg.seed ^ (0x51ED5EEDull * static_cast<uint64_t>(step + 1) + i));
        samples.push_back(std::move(s));
      }
      auto [deg, ref] = stack_batch(samples);
      train_step(deg, ref);
      if (eval_data && cfg.eval_every > 0 && step % cfg.eval_every == 0) {
        auto res = evaluate_dataset(
            *eval_data, [&](const PairEntry& e) { return load_pair(e, cfg.image_size); },
            [&](const Tensor& img) { return enhance_image(img); });
        for (auto& r : res.records) {
          r.image_id = std::to_string(step) + ":" + r.image_id;
          eval_history.push_back(std::move(r));
        }
      }
    }
  }
}

Tensor Trainer::encode_image(const Tensor& img_signed) const {
  NoGradGuard ng;
  CevaeModel m = model;
  m.training = false;
  Shape batched = img_signed.shape;
  batched.insert(batched.begin(), 1);
  Tensor in = img_signed;
  in.shape = batched;
  Tensor out = m.encode(make_leaf(in))->value;
  out.shape.erase(out.shape.begin());
  return out;
}

Tensor Trainer::enhance_latent(const Tensor& latent) const {
  NoGradGuard ng;
  CevaeModel m = model;
  m.training = false;
  Shape batched = latent.shape;
  batched.insert(batched.begin(), 1);
  Tensor in = latent;
  in.shape = batched;
  Tensor out = m.enhance(make_leaf(in))->value;
  out.shape.erase(out.shape.begin());
  return clamp_image(out);
}

Tensor Trainer::enhance_image(const Tensor& img_signed) const {
  return enhance_latent(encode_image(img_signed));
}

namespace {

constexpr char kCkptMagic[4] = {'C', 'E', 'V', 'C'};
constexpr uint8_t kCkptVersion = 1;

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_group(std::ostream& os, const nn::ParamMap& pm) {
  put_u32(os, static_cast<uint32_t>(pm.items.size()));
  for (const auto& e : pm.items) {
    put_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<uint32_t>(e.var->value.rank()));
    for (int d = 0; d < e.var->value.rank(); ++d)
      put_u32(os, static_cast<uint32_t>(e.var->value.dim(d)));
    os.write(reinterpret_cast<const char*>(e.var->value.data.data()),
             static_cast<std::streamsize>(e.var->value.data.size() * sizeof(double)));
  }
}

void read_group(std::istream& is, const nn::ParamMap& pm) {
  uint32_t count = get_u32(is);
  if (count != pm.items.size())
    throw Error(ErrorKind::Format, "checkpoint: parameter count mismatch");
  for (const auto& e : pm.items) {
    uint32_t nlen = get_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    if (name != e.name)
      throw Error(ErrorKind::Format, "checkpoint: expected parameter '" + e.name + "', found '" +
                                         name + "'");
    uint32_t rank = get_u32(is);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u32(is));
    if (shape != e.var->value.shape)
      throw Error(ErrorKind::Format, "checkpoint: shape mismatch for '" + name + "'");
    is.read(reinterpret_cast<char*>(e.var->value.data.data()),
            static_cast<std::streamsize>(e.var->value.data.size() * sizeof(double)));
    if (!is) throw Error(ErrorKind::Format, "checkpoint: truncated payload at '" + name + "'");
  }
}

void write_adam(std::ostream& os, const Adam& a) {
  put_u64(os, static_cast<uint64_t>(a.t));
  put_u32(os, static_cast<uint32_t>(a.m.size()));
  for (size_t i = 0; i < a.m.size(); ++i) {
    os.write(reinterpret_cast<const char*>(a.m[i].data.data()),
             static_cast<std::streamsize>(a.m[i].data.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(a.v[i].data.data()),
             static_cast<std::streamsize>(a.v[i].data.size() * sizeof(double)));
  }
}

void read_adam(std::istream& is, Adam& a) {
  a.t = static_cast<int64_t>(get_u64(is));
  uint32_t count = get_u32(is);
  if (count != a.m.size())
    throw Error(ErrorKind::Format, "checkpoint: optimizer state count mismatch");
  for (size_t i = 0; i < a.m.size(); ++i) {
    is.read(reinterpret_cast<char*>(a.m[i].data.data()),
            static_cast<std::streamsize>(a.m[i].data.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(a.v[i].data.data()),
            static_cast<std::streamsize>(a.v[i].data.size() * sizeof(double)));
  }
  if (!is) throw Error(ErrorKind::Format, "checkpoint: truncated optimizer state");
}

}  // namespace

void Trainer::save_checkpoint(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Input, "cannot open for write: " + path);
  os.write(kCkptMagic, 4);
  os.put(static_cast<char>(kCkptVersion));
  put_u64(os, model_cfg.hash());
  std::string cfg_text = model_cfg.serialize();
  put_u32(os, static_cast<uint32_t>(cfg_text.size()));
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  put_u64(os, static_cast<uint64_t>(step));
  nn::ParamMap phim;
  phi.collect("phi", phim);
  write_group(os, model.params());
  write_group(os, disc.params());
  write_group(os, phim);
  write_adam(os, opt_gen);
  write_adam(os, opt_disc);
  if (!os) throw Error(ErrorKind::Input, "write failed: " + path);
}

void Trainer::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Input, "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw Error(ErrorKind::Format, "checkpoint: bad magic at offset 0");
  int version = is.get();
  if (version != kCkptVersion)
    throw Error(ErrorKind::Format, "checkpoint: unsupported version " + std::to_string(version));
  uint64_t h = get_u64(is);
  if (h != model_cfg.hash())
    throw Error(ErrorKind::Contract,
                "checkpoint: config hash mismatch (checkpoint was trained with a different "
                "model configuration); refusing to resume");
  uint32_t cfg_len = get_u32(is);
  is.seekg(cfg_len, std::ios::cur);  // config text is informational here
  step = static_cast<int64_t>(get_u64(is));
  nn::ParamMap phim;
  phi.collect("phi", phim);
  read_group(is, model.params());
  read_group(is, disc.params());
  read_group(is, phim);
  read_adam(is, opt_gen);
  read_adam(is, opt_disc);
}

Trainer Trainer::from_checkpoint(const std::string& path, TrainConfig cfg) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Input, "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw Error(ErrorKind::Format, "checkpoint: bad magic at offset 0");
  is.get();      // version checked by load_checkpoint
  get_u64(is);   // hash checked by load_checkpoint
  uint32_t cfg_len = get_u32(is);
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), cfg_len);
  if (!is) throw Error(ErrorKind::Format, "checkpoint: truncated config block");
  Trainer t(CevaeConfig::parse(cfg_text), cfg);
  t.load_checkpoint(path);
  return t;
}

Trainer pretrain(const CevaeConfig& model_cfg, TrainConfig cfg,
                 const DatasetManifest& identity_data) {
  cfg.mode = TrainConfig::Mode::kPretrain;
  Trainer t(model_cfg, cfg);
  t.run(identity_data);
  return t;
}

Trainer finetune(const CevaeConfig& model_cfg, TrainConfig cfg, const DatasetManifest& paired_data,
                 const std::string& init_checkpoint) {
  cfg.mode = TrainConfig::Mode::kFinetune;
  Trainer t(model_cfg, cfg);
  t.load_checkpoint(init_checkpoint);  // resumes the step counter
  t.run(paired_data);
  return t;
}

std::vector<AblationRow> ablate_losses(const CevaeConfig& model_cfg, TrainConfig base,
                                       const DatasetManifest& train_data,
                                       const DatasetManifest& eval_pairs,
                                       const std::vector<LossToggles>& sets) {
  if (sets.size() < 2)
    throw Error(ErrorKind::Config, "ablate_losses: need at least two toggle sets");
  std::vector<AblationRow> rows;
  for (const auto& toggles : sets) {
    TrainConfig cfg = base;
    cfg.toggles = toggles;
    Trainer t(model_cfg, cfg);
    t.run(train_data);
    auto res = evaluate_dataset(
        eval_pairs, [&](const PairEntry& e) { return load_pair(e, cfg.image_size); },
        [&](const Tensor& img) { return t.enhance_image(img); });
    rows.push_back({toggles.str(), std::move(res.records)});
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  for (const auto& row : rows)
    for (const auto& r : row.records)
      os << row.toggles << '\t' << r.image_id << '\t' << r.psnr << '\n';
  return os.str();
}

double quartile(std::vector<double> v, double q) {
  if (v.empty()) throw Error(ErrorKind::Input, "quartile: empty sample");
  std::sort(v.begin(), v.end());
  double pos = q * static_cast<double>(v.size() - 1);
  size_t lo = static_cast<size_t>(std::floor(pos));
  size_t hi = static_cast<size_t>(std::ceil(pos));
  return 0.5 * (v[lo] + v[hi]);  // midpoint of the straddling order statistics
}

std::string format_ablation_quartiles(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "toggles\tmin\tq1\tmedian\tq3\tmax\n";
  for (const auto& row : rows) {
    std::vector<double> ps;
    for (const auto& r : row.records) ps.push_back(r.psnr);
    os << row.toggles << '\t' << quartile(ps, 0.0) << '\t' << quartile(ps, 0.25) << '\t'
       << quartile(ps, 0.5) << '\t' << quartile(ps, 0.75) << '\t' << quartile(ps, 1.0) << '\n';
  }
  return os.str();
}

}  // namespace cevae
