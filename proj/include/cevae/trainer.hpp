#ifndef CEVAE_TRAINER_HPP_
#define CEVAE_TRAINER_HPP_

#include <iosfwd>

#include "cevae/data_pipeline.hpp"
#include "cevae/metrics.hpp"
#include "cevae/model.hpp"
#include "cevae/objectives.hpp"

namespace cevae {

struct TrainConfig {
  enum class Mode { kPretrain, kFinetune };
  Mode mode = Mode::kPretrain;
  double lr = 4.5e-6;
  int batch_size = 6;
  int steps = 100;
  double delta = 1e-6;       // adaptive-lambda denominator guard
  int disc_start_step = 1000;
  LossToggles toggles;
  uint64_t seed = 0;
  int image_size = 256;
  bool augment_on = false;
  int eval_every = 0;  // 0 disables the periodic evaluation hook

  void validate() const;
};

// Adam with beta = (0.5, 0.9), the usual adversarial-training setting.
struct Adam {
  double lr = 4.5e-6, beta1 = 0.5, beta2 = 0.9, eps = 1e-8;
  int64_t t = 0;
  std::vector<Tensor> m, v;  // parallel to the trainable entries

  void init_like(const nn::ParamMap& params);
  void step(const nn::ParamMap& params);
};

// FNV-1a over the raw parameter bytes; used to assert update isolation.
uint64_t param_hash(const nn::ParamMap& pm);

struct Trainer {
  TrainConfig cfg;
  CevaeConfig model_cfg;
  CevaeModel model;
  PatchDiscriminator disc;
  FeatureExtractor phi;
  Adam opt_gen, opt_disc;
  int64_t step = 0;
  std::ostream* log = nullptr;  // optional per-step loss log
  // Periodic evaluation results (filled when cfg.eval_every > 0 and an eval
  // manifest is passed to run()).
  std::vector<MetricRecord> eval_history;

  Trainer(const CevaeConfig& model_cfg, const TrainConfig& cfg);

  // One generator update (and one discriminator update once the GAN term is
  // active). Aborts with a per-term diagnostic on non-finite losses.
  LossBreakdown train_step(const Tensor& degraded, const Tensor& reference);

  // Runs cfg.steps optimization steps over the manifest.
  void run(const DatasetManifest& data, const DatasetManifest* eval_data = nullptr);

  // Inference helpers (no-grad, eval-mode statistics).
  Tensor encode_image(const Tensor& img_signed) const;
  Tensor enhance_image(const Tensor& img_signed) const;      // clamped to [-1,1]
  Tensor enhance_latent(const Tensor& latent) const;         // clamped to [-1,1]

  void save_checkpoint(const std::string& path) const;
  // Refuses checkpoints whose embedded config hash disagrees with model_cfg.
  void load_checkpoint(const std::string& path);
  // Rebuilds model config from the checkpoint itself.
  static Trainer from_checkpoint(const std::string& path, TrainConfig cfg = {});

  nn::ParamMap gen_params() const { return model.params(); }
  nn::ParamMap disc_params() const { return disc.params(); }
};

// Convenience wrappers matching the two training phases.
Trainer pretrain(const CevaeConfig& model_cfg, TrainConfig cfg, const DatasetManifest& identity_data);
Trainer finetune(const CevaeConfig& model_cfg, TrainConfig cfg, const DatasetManifest& paired_data,
                 const std::string& init_checkpoint);

struct AblationRow {
  std::string toggles;
  std::vector<MetricRecord> records;  // per eval image
};

// Trains one model per toggle set from the same seed and evaluates each on
// eval_pairs. Requires at least two sets.
std::vector<AblationRow> ablate_losses(const CevaeConfig& model_cfg, TrainConfig base,
                                       const DatasetManifest& train_data,
                                       const DatasetManifest& eval_pairs,
                                       const std::vector<LossToggles>& sets);

std::string format_ablation_table(const std::vector<AblationRow>& rows);
// Box-plot-ready quartile summary (min, q1, median, q3, max per set).
std::string format_ablation_quartiles(const std::vector<AblationRow>& rows);
// Midpoint-rule quantile of a sorted copy of v.
double quartile(std::vector<double> v, double q);

}  // namespace cevae

#endif  // CEVAE_TRAINER_HPP_
