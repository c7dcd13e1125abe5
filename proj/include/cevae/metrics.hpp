#ifndef CEVAE_METRICS_HPP_
#define CEVAE_METRICS_HPP_

#include <functional>
#include <optional>
#include <string>

#include "cevae/data_pipeline.hpp"
#include "cevae/objectives.hpp"

namespace cevae {

struct MetricRecord {
  std::string image_id;
  double psnr = 0;   // dB
  double ssim = 0;   // [-1,1]
  std::optional<double> lpips;
};

struct MetricStats {
  double mean = 0, stddev = 0, min = 0, max = 0;
};

struct EvalResult {
  std::vector<MetricRecord> records;  // sorted by image_id
  MetricStats psnr, ssim;
  int skipped = 0;
};

// 10*log10(peak^2/MSE), capped at 100 dB for (near-)zero MSE.
double psnr(const Tensor& gt, const Tensor& pred, double peak = 1.0);

// Mean local SSIM over a sliding 11x11 Gaussian window (sigma 1.5),
// valid positions only, averaged per channel. Inputs in [0, peak].
double ssim_metric(const Tensor& gt, const Tensor& pred, double peak = 1.0);

// Runs the enhancer over every pair; unloadable pairs are skipped with a
// warning and counted. enhance_fn maps a [-1,1] (3,H,W) image to the same.
EvalResult evaluate_dataset(
    const DatasetManifest& manifest,
    const std::function<PairedSample(const PairEntry&)>& loader,
    const std::function<Tensor(const Tensor&)>& enhance_fn,
    const FeatureExtractor* phi = nullptr);

MetricStats compute_stats(const std::vector<double>& values);

// One record per line: id<TAB>psnr<TAB>ssim<TAB>lpips (or "-"), then a
// commented summary block.
std::string format_metrics_file(const EvalResult& result);
std::vector<MetricRecord> parse_metrics_file(const std::string& text);

}  // namespace cevae

#endif  // CEVAE_METRICS_HPP_
