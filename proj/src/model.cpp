#include "cevae/model.hpp"

#include <algorithm>
#include <sstream>

namespace cevae {

AblationMode parse_ablation_mode(const std::string& name) {
  if (name == "full") return AblationMode::kFull;
  if (name == "no_spatial") return AblationMode::kNoSpatial;
  if (name == "no_capsule") return AblationMode::kNoCapsule;
  throw Error(ErrorKind::Config,
              "unknown ablation mode '" + name + "' (valid: full, no_spatial, no_capsule)");
}

CevaeConfig CevaeConfig::reference() {
  CevaeConfig c;
  c.encoder = EncoderConfig{};   // N=5, latent 256x16x16 for 256x256 input
  c.capsules = CapsuleConfig{};  // U 32x16x9x9, Uhat 64x32x9x9, C 256x16x16
  c.decoder = DecoderConfig{};   // 4 blocks, 16 -> 256
  return c;
}

CevaeConfig CevaeConfig::tiny() {
  CevaeConfig c;
  c.encoder = EncoderConfig{2, {8, 16}, 32, false, 16};
  c.capsules = CapsuleConfig{16, 4, 4, 8, 8, 8, 3, 16, 8};
  c.decoder = DecoderConfig{1, {16, 8}};
  return c;
}

CevaeConfig CevaeConfig::small() {
  CevaeConfig c;
  c.encoder = EncoderConfig{3, {8, 16, 32}, 32, false, 32};
  c.capsules = CapsuleConfig{32, 4, 4, 8, 8, 8, 3, 32, 8};
  c.decoder = DecoderConfig{2, {32, 16, 8}};
  return c;
}

void CevaeConfig::validate() const {
  encoder.validate();
  capsules.validate();
  decoder.validate();
  if (capsules.in_channels != encoder.latent_channels)
    throw Error(ErrorKind::Config, "config: capsule in_channels must equal latent channels");
  if (decoder.channel_schedule[0] != encoder.latent_channels ||
      capsules.out_channels != encoder.latent_channels)
    throw Error(ErrorKind::Config, "config: decoder/capsule channels must match the latent");
}

std::string CevaeConfig::serialize() const {
  std::ostringstream os;
  auto list = [](const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  os << "encoder.num_blocks=" << encoder.num_blocks << "\n"
     << "encoder.schedule=" << list(encoder.channel_schedule) << "\n"
     << "encoder.attn_threshold=" << encoder.attention_resolution_threshold << "\n"
     << "encoder.attn_everywhere=" << (encoder.attention_everywhere ? 1 : 0) << "\n"
     << "encoder.latent_channels=" << encoder.latent_channels << "\n"
     << "capsules.in=" << capsules.in_channels << "\n"
     << "capsules.types=" << capsules.num_primary_types << "\n"
     << "capsules.dim=" << capsules.primary_dim << "\n"
     << "capsules.kernel=" << capsules.primary_kernel << "\n"
     << "capsules.out_caps=" << capsules.num_output_caps << "\n"
     << "capsules.out_dim=" << capsules.output_dim << "\n"
     << "capsules.alpha=" << capsules.routing_iters << "\n"
     << "capsules.out_channels=" << capsules.out_channels << "\n"
     << "capsules.out_kernel=" << capsules.out_kernel << "\n"
     << "decoder.num_blocks=" << decoder.num_blocks << "\n"
     << "decoder.schedule=" << list(decoder.channel_schedule) << "\n";
  return os.str();
}

CevaeConfig CevaeConfig::parse(const std::string& text) {
  auto parse_list = [](const std::string& s) {
    std::vector<int> v;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) v.push_back(std::stoi(tok));
    return v;
  };
  CevaeConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Format, "bad config line: " + line);
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "encoder.num_blocks") c.encoder.num_blocks = std::stoi(val);
    else if (key == "encoder.schedule") c.encoder.channel_schedule = parse_list(val);
    else if (key == "encoder.attn_threshold") c.encoder.attention_resolution_threshold = std::stoi(val);
    else if (key == "encoder.attn_everywhere") c.encoder.attention_everywhere = std::stoi(val) != 0;
    else if (key == "encoder.latent_channels") c.encoder.latent_channels = std::stoi(val);
    else if (key == "capsules.in") c.capsules.in_channels = std::stoi(val);
    else if (key == "capsules.types") c.capsules.num_primary_types = std::stoi(val);
    else if (key == "capsules.dim") c.capsules.primary_dim = std::stoi(val);
    else if (key == "capsules.kernel") c.capsules.primary_kernel = std::stoi(val);
    else if (key == "capsules.out_caps") c.capsules.num_output_caps = std::stoi(val);
    else if (key == "capsules.out_dim") c.capsules.output_dim = std::stoi(val);
    else if (key == "capsules.alpha") c.capsules.routing_iters = std::stoi(val);
    else if (key == "capsules.out_channels") c.capsules.out_channels = std::stoi(val);
    else if (key == "capsules.out_kernel") c.capsules.out_kernel = std::stoi(val);
    else if (key == "decoder.num_blocks") c.decoder.num_blocks = std::stoi(val);
    else if (key == "decoder.schedule") c.decoder.channel_schedule = parse_list(val);
    else throw Error(ErrorKind::Format, "unknown config key: " + key);
  }
  return c;
}

uint64_t CevaeConfig::hash() const {
  // FNV-1a 64
  uint64_t h = 14695981039346656037ull;
  for (char ch : serialize()) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  return h;
}

CevaeModel::CevaeModel(const CevaeConfig& cfg_, uint64_t seed_, AblationMode mode_)
    : cfg(cfg_), seed(seed_), mode(mode_) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  encoder = Encoder(cfg.encoder, rng);
  capsules = CapsuleClustering(cfg.capsules, rng);
  dec_capsule = CapsuleDecoder(cfg.decoder, rng);
  dec_spatial = SpatialDecoder(cfg.decoder, rng);
}

Var CevaeModel::enhance(const Var& latent) const {
  switch (mode) {
    case AblationMode::kNoSpatial:
      return decode_capsule(latent);
    case AblationMode::kNoCapsule:
      return decode_spatial(latent);
    case AblationMode::kFull:
      return ops::add(decode_capsule(latent), decode_spatial(latent));
  }
  throw Error(ErrorKind::Config, "enhance: bad ablation mode");
}

CevaeModel CevaeModel::ablation_variant(AblationMode m) const {
  CevaeModel variant = *this;  // shares parameter Vars
  variant.mode = m;
  return variant;
}

nn::ParamMap CevaeModel::params() const {
  nn::ParamMap pm;
  encoder.collect("encoder", pm);
  capsules.collect("capsules", pm);
  if (mode != AblationMode::kNoCapsule) dec_capsule.collect("dec_capsule", pm);
  if (mode != AblationMode::kNoSpatial) dec_spatial.collect("dec_spatial", pm);
  return pm;
}

Tensor clamp_image(const Tensor& img) {
  Tensor out = img;
  for (auto& v : out.data) v = std::clamp(v, -1.0, 1.0);
  return out;
}

Tensor to_unit_range(const Tensor& img) {
  Tensor out = img;
  for (auto& v : out.data) v = std::clamp(0.5 * (v + 1.0), 0.0, 1.0);
  return out;
}

Tensor from_unit_range(const Tensor& img) {
  Tensor out = img;
  for (auto& v : out.data) v = 2.0 * v - 1.0;
  return out;
}

}  // namespace cevae
