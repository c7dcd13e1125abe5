#include "cevae/data_pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "cevae/image_io.hpp"

namespace fs = std::filesystem;

namespace cevae {

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::map<std::string, std::string> scan_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::is_directory(dir))
    throw Error(ErrorKind::Input, "dataset directory missing: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path()))
      out[e.path().stem().string()] = e.path().string();
  return out;
}

}  // namespace

DatasetManifest load_manifest(const std::string& root, DatasetLayout layout) {
  DatasetManifest m;
  m.root = root;
  if (layout == DatasetLayout::kPairedDirs) {
    m.split = "paired";
    auto degraded = scan_dir(fs::path(root) / "degraded");
    auto reference = scan_dir(fs::path(root) / "reference");
    std::string orphans;
    for (const auto& [id, path] : degraded) {
      auto it = reference.find(id);
      if (it == reference.end()) {
        orphans += " degraded/" + id;
        continue;
      }
      m.pairs.push_back({id, path, it->second});
    }
    for (const auto& [id, path] : reference)
      if (!degraded.count(id)) orphans += " reference/" + id;
    if (!orphans.empty())
      throw Error(ErrorKind::Input, "unmatched dataset files:" + orphans);
  } else {
    m.split = "identity";
    for (const auto& [id, path] : scan_dir(root)) m.pairs.push_back({id, path, path});
  }
  if (m.pairs.empty()) throw Error(ErrorKind::Input, "empty dataset at " + root);
  std::sort(m.pairs.begin(), m.pairs.end(),
            [](const PairEntry& a, const PairEntry& b) { return a.id < b.id; });
  return m;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Input, "cannot write manifest: " + path);
  for (const auto& p : m.pairs)
    os << p.id << '\t' << p.degraded_path << '\t' << p.reference_path << '\n';
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Input, "cannot read manifest: " + path);
  DatasetManifest m;
  m.root = path;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw Error(ErrorKind::Format, "bad manifest line: " + line);
    m.pairs.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
  }
  if (m.pairs.empty()) throw Error(ErrorKind::Input, "empty manifest: " + path);
  return m;
}

namespace {

Tensor unit_to_signed(Tensor img) {
  for (auto& v : img.data) v = 2.0 * v - 1.0;  // byte 0 -> -1, byte 255 -> +1
  return img;
}

}  // namespace

PairedSample preprocess(const std::string& id, const Tensor& degraded_unit,
                        const Tensor& reference_unit, int size) {
  PairedSample s;
  s.id = id;
  s.degraded = unit_to_signed(resize_bilinear(degraded_unit, size, size));
  s.reference = unit_to_signed(resize_bilinear(reference_unit, size, size));
  return s;
}

PairedSample load_pair(const PairEntry& entry, int size) {
  return preprocess(entry.id, load_image(entry.degraded_path), load_image(entry.reference_path),
                    size);
}

PairedSample augment(const PairedSample& sample, uint64_t rng_seed, AugmentRecord* record) {
  std::mt19937_64 rng(rng_seed);
  int s = sample.degraded.dim(1);
  std::uniform_real_distribution<double> frac(0.8, 1.0);
  AugmentRecord rec;
  rec.crop_size = std::clamp(static_cast<int>(std::lround(frac(rng) * s)), 1, s);
  std::uniform_int_distribution<int> off(0, s - rec.crop_size);
  rec.crop_x = off(rng);
  rec.crop_y = off(rng);
  rec.flip = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5;
  if (record) *record = rec;
  return apply_augment(sample, rec);
}

namespace {

Tensor crop_resize_flip(const Tensor& img, const AugmentRecord& rec) {
  int s = img.dim(1);
  Tensor work = img;
  if (rec.crop_size != s || rec.crop_x != 0 || rec.crop_y != 0) {
    Tensor crop({3, rec.crop_size, rec.crop_size});
    int64_t plane = static_cast<int64_t>(s) * s;
    int64_t cplane = static_cast<int64_t>(rec.crop_size) * rec.crop_size;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < rec.crop_size; ++i)
        for (int j = 0; j < rec.crop_size; ++j)
          crop[c * cplane + static_cast<int64_t>(i) * rec.crop_size + j] =
              img[c * plane + static_cast<int64_t>(rec.crop_y + i) * s + rec.crop_x + j];
    work = resize_bilinear(crop, s, s);
  }
  if (rec.flip) {
    Tensor flipped = work;
    int64_t plane = static_cast<int64_t>(s) * s;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
          flipped[c * plane + static_cast<int64_t>(i) * s + j] =
              work[c * plane + static_cast<int64_t>(i) * s + (s - 1 - j)];
    return flipped;
  }
  return work;
}

}  // namespace

PairedSample apply_augment(const PairedSample& sample, const AugmentRecord& rec) {
  PairedSample out;
  out.id = sample.id;
  out.degraded = crop_resize_flip(sample.degraded, rec);
  out.reference = crop_resize_flip(sample.reference, rec);
  return out;
}

std::vector<std::vector<PairEntry>> batches(const DatasetManifest& manifest, int batch_size,
                                            uint64_t shuffle_seed, int epoch) {
  if (batch_size < 1) throw Error(ErrorKind::Config, "batches: batch_size must be >= 1");
  std::vector<PairEntry> order = manifest.pairs;
  std::mt19937_64 rng(shuffle_seed ^ (0x9E3779B97F4A7C15ull * static_cast<uint64_t>(epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<PairEntry>> out;
  for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch_size)) {
    size_t end = std::min(order.size(), i + static_cast<size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(end));
  }
  return out;
}

std::pair<Tensor, Tensor> stack_batch(const std::vector<PairedSample>& samples) {
  if (samples.empty()) throw Error(ErrorKind::Input, "stack_batch: empty batch");
  int s = samples[0].degraded.dim(1);
  int n = static_cast<int>(samples.size());
  Tensor deg({n, 3, s, s}), ref({n, 3, s, s});
  int64_t sz = samples[0].degraded.numel();
  for (int i = 0; i < n; ++i) {
    if (samples[static_cast<size_t>(i)].degraded.numel() != sz)
      throw Error(ErrorKind::Input, "stack_batch: inconsistent sample sizes");
    std::copy(samples[static_cast<size_t>(i)].degraded.data.begin(),
              samples[static_cast<size_t>(i)].degraded.data.end(), deg.data.begin() + i * sz);
    std::copy(samples[static_cast<size_t>(i)].reference.data.begin(),
              samples[static_cast<size_t>(i)].reference.data.end(), ref.data.begin() + i * sz);
  }
  return {deg, ref};
}

}  // namespace cevae
