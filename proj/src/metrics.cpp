#include "cevae/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <sstream>

#include "cevae/autograd.hpp"

namespace cevae {

double psnr(const Tensor& gt, const Tensor& pred, double peak) {
  require_shape(gt, pred.shape, "psnr");
  if (peak <= 0) throw Error(ErrorKind::Input, "psnr: peak must be positive");
  double mse = 0;
  for (int64_t i = 0; i < gt.numel(); ++i) {
    double d = gt[i] - pred[i];
    mse += d * d;
  }
  mse /= static_cast<double>(gt.numel());
  if (mse < peak * peak * 1e-10) return 100.0;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWin = 11;

// Normalized 11x11 Gaussian, sigma 1.5.
std::array<double, kWin * kWin> gaussian_window() {
  std::array<double, kWin * kWin> w{};
  double sum = 0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      double di = i - (kWin - 1) / 2.0, dj = j - (kWin - 1) / 2.0;
      w[i * kWin + j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      sum += w[i * kWin + j];
    }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

double ssim_metric(const Tensor& gt, const Tensor& pred, double peak) {
  require_shape(gt, pred.shape, "ssim_metric");
  if (gt.rank() != 3) throw Error(ErrorKind::Input, "ssim_metric: expected (C,H,W)");
  int c = gt.dim(0), h = gt.dim(1), w = gt.dim(2);
  if (h < kWin || w < kWin)
    throw Error(ErrorKind::Input, "ssim_metric: image smaller than 11x11 window");
  static const auto win = gaussian_window();
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  int64_t plane = static_cast<int64_t>(h) * w;
  double total = 0;
  int64_t count = 0;
  for (int ch = 0; ch < c; ++ch) {
    const double* a = gt.data.data() + ch * plane;
    const double* b = pred.data.data() + ch * plane;
    for (int y = 0; y + kWin <= h; ++y)
      for (int x = 0; x + kWin <= w; ++x) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < kWin; ++i)
          for (int j = 0; j < kWin; ++j) {
            double g = win[i * kWin + j];
            double va = a[static_cast<int64_t>(y + i) * w + x + j];
            double vb = b[static_cast<int64_t>(y + i) * w + x + j];
            mu_a += g * va;
            mu_b += g * vb;
            aa += g * va * va;
            bb += g * vb * vb;
            ab += g * va * vb;
          }
        double var_a = aa - mu_a * mu_a;
        double var_b = bb - mu_b * mu_b;
        double cov = ab - mu_a * mu_b;
        total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

namespace {

Tensor signed_to_unit_clamped(const Tensor& img) {
  Tensor out = img;
  for (auto& v : out.data) v = std::clamp((v + 1.0) * 0.5, 0.0, 1.0);
  return out;
}

double lpips_value(const Tensor& gt, const Tensor& pred, const FeatureExtractor& phi) {
  NoGradGuard ng;
  Shape batched = gt.shape;
  batched.insert(batched.begin(), 1);
  Tensor g = gt, p = pred;
  g.shape = batched;
  p.shape = batched;
  return lpips_loss(make_leaf(g, false), make_leaf(p, false), phi)->value[0];
}

}  // namespace

EvalResult evaluate_dataset(const DatasetManifest& manifest,
                            const std::function<PairedSample(const PairEntry&)>& loader,
                            const std::function<Tensor(const Tensor&)>& enhance_fn,
                            const FeatureExtractor* phi) {
  EvalResult result;
  for (const auto& entry : manifest.pairs) {
    PairedSample sample;
    try {
      sample = loader(entry);
    } catch (const Error& e) {
      std::cerr << "warning: skipping pair '" << entry.id << "': " << e.what() << "\n";
      ++result.skipped;
      continue;
    }
    Tensor enhanced = enhance_fn(sample.degraded);
    Tensor ref_u = signed_to_unit_clamped(sample.reference);
    Tensor enh_u = signed_to_unit_clamped(enhanced);
    MetricRecord rec;
    rec.image_id = entry.id;
    rec.psnr = psnr(ref_u, enh_u);
    rec.ssim = ssim_metric(ref_u, enh_u);
    if (phi) rec.lpips = lpips_value(sample.reference, enhanced, *phi);
    result.records.push_back(std::move(rec));
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const MetricRecord& a, const MetricRecord& b) { return a.image_id < b.image_id; });
  std::vector<double> ps, ss;
  for (const auto& r : result.records) {
    ps.push_back(r.psnr);
    ss.push_back(r.ssim);
  }
  result.psnr = compute_stats(ps);
  result.ssim = compute_stats(ss);
  return result;
}

MetricStats compute_stats(const std::vector<double>& values) {
  MetricStats s;
  if (values.empty()) return s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(values.size()));
  return s;
}

std::string format_metrics_file(const EvalResult& result) {
  std::ostringstream os;
  os.precision(9);
  for (const auto& r : result.records) {
    os << r.image_id << '\t' << r.psnr << '\t' << r.ssim << '\t';
    if (r.lpips)
      os << *r.lpips;
    else
      os << '-';
    os << '\n';
  }
  os << "# images: " << result.records.size() << " skipped: " << result.skipped << '\n';
  os << "# psnr mean: " << result.psnr.mean << " std: " << result.psnr.stddev
     << " min: " << result.psnr.min << " max: " << result.psnr.max << '\n';
  os << "# ssim mean: " << result.ssim.mean << " std: " << result.ssim.stddev
     << " min: " << result.ssim.min << " max: " << result.ssim.max << '\n';
  return os.str();
}

std::vector<MetricRecord> parse_metrics_file(const std::string& text) {
  std::vector<MetricRecord> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    MetricRecord r;
    std::string lpips_field;
    if (!(ls >> r.image_id >> r.psnr >> r.ssim >> lpips_field))
      throw Error(ErrorKind::Format, "bad metrics line: " + line);
    if (lpips_field != "-") r.lpips = std::stod(lpips_field);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cevae
