#include "cevae/latent_codec.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace cevae {

int dtype_size(LatentDtype d) {
  switch (d) {
    case LatentDtype::kF16: return 2;
    case LatentDtype::kF32: return 4;
    case LatentDtype::kF64: return 8;
  }
  throw Error(ErrorKind::Format, "unknown latent dtype");
}

uint16_t f64_to_f16(double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  uint16_t sign = static_cast<uint16_t>((bits >> 48) & 0x8000u);
  int exp = static_cast<int>((bits >> 52) & 0x7FF) - 1023;
  uint64_t mant = bits & 0xFFFFFFFFFFFFFull;
  if (exp == 1024) {  // inf / nan
    return static_cast<uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0u));
  }
  if (exp > 15) return static_cast<uint16_t>(sign | 0x7C00u);  // overflow -> inf
  if (exp >= -14) {                                            // normal half
    uint32_t m10 = static_cast<uint32_t>(mant >> 42);
    uint64_t rest = mant & ((1ull << 42) - 1);
    // round to nearest even
    if (rest > (1ull << 41) || (rest == (1ull << 41) && (m10 & 1u))) ++m10;
    uint32_t e5 = static_cast<uint32_t>(exp + 15);
    if (m10 == 0x400u) {  // mantissa rounded up into the exponent
      m10 = 0;
      ++e5;
      if (e5 >= 31) return static_cast<uint16_t>(sign | 0x7C00u);
    }
    return static_cast<uint16_t>(sign | (e5 << 10) | m10);
  }
  if (exp < -25) return sign;  // underflow to signed zero
  // subnormal half: shift the implicit-1 mantissa right
  uint64_t full = (1ull << 52) | mant;
  int shift = 42 + (-14 - exp);
  uint64_t m10 = full >> shift;
  uint64_t rest = full & ((1ull << shift) - 1);
  uint64_t half = 1ull << (shift - 1);
  if (rest > half || (rest == half && (m10 & 1))) ++m10;
  return static_cast<uint16_t>(sign | m10);  // may carry into exponent; that is correct
}

double f16_to_f64(uint16_t h) {
  double sign = (h & 0x8000u) ? -1.0 : 1.0;
  int exp = (h >> 10) & 0x1F;
  int mant = h & 0x3FF;
  if (exp == 0x1F) {
    if (mant) return std::nan("");
    return sign * std::numeric_limits<double>::infinity();
  }
  if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
  return sign * std::ldexp(static_cast<double>(1024 + mant), exp - 15 - 10);
}

namespace {

constexpr char kMagic[4] = {'C', 'E', 'V', 'L'};
constexpr uint8_t kVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

}  // namespace

std::vector<uint8_t> serialize_latent(const Tensor& latent, LatentDtype dtype) {
  if (latent.rank() != 3) throw Error(ErrorKind::Input, "serialize_latent: expected (C,H,W)");
  for (double v : latent.data)
    if (!std::isfinite(v)) throw Error(ErrorKind::Input, "serialize_latent: non-finite value");
  std::vector<uint8_t> out;
  out.reserve(18 + latent.numel() * static_cast<size_t>(dtype_size(dtype)));
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(static_cast<uint8_t>(dtype));
  for (int d = 0; d < 3; ++d) put_u32(out, static_cast<uint32_t>(latent.dim(d)));
  for (double v : latent.data) {
    if (dtype == LatentDtype::kF16) {
      uint16_t h = f64_to_f16(v);
      out.push_back(static_cast<uint8_t>(h));
      out.push_back(static_cast<uint8_t>(h >> 8));
    } else if (dtype == LatentDtype::kF32) {
      float f = static_cast<float>(v);
      uint32_t b;
      std::memcpy(&b, &f, 4);
      put_u32(out, b);
    } else {
      uint64_t b;
      std::memcpy(&b, &v, 8);
      put_u32(out, static_cast<uint32_t>(b));
      put_u32(out, static_cast<uint32_t>(b >> 32));
    }
  }
  return out;
}

Tensor deserialize_latent(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 18)
    throw Error(ErrorKind::Format, "latent file truncated: header needs 18 bytes, got " +
                                       std::to_string(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::Format, "latent file: bad magic at offset 0");
  if (bytes[4] != kVersion)
    throw Error(ErrorKind::Format,
                "latent file: unsupported version " + std::to_string(bytes[4]) + " at offset 4");
  if (bytes[5] > 2)
    throw Error(ErrorKind::Format,
                "latent file: unknown dtype " + std::to_string(bytes[5]) + " at offset 5");
  LatentDtype dtype = static_cast<LatentDtype>(bytes[5]);
  Shape shape(3);
  for (int d = 0; d < 3; ++d) {
    uint32_t v = get_u32(bytes.data() + 6 + 4 * d);
    if (v == 0 || v > (1u << 24))
      throw Error(ErrorKind::Format, "latent file: bad dim " + std::to_string(v) + " at offset " +
                                         std::to_string(6 + 4 * d));
    shape[d] = static_cast<int>(v);
  }
  Tensor out(shape);
  size_t need = 18 + static_cast<size_t>(out.numel()) * static_cast<size_t>(dtype_size(dtype));
  if (bytes.size() != need)
    throw Error(ErrorKind::Format, "latent file: payload size mismatch, expected " +
                                       std::to_string(need) + " bytes, got " +
                                       std::to_string(bytes.size()));
  const uint8_t* p = bytes.data() + 18;
  for (int64_t i = 0; i < out.numel(); ++i) {
    if (dtype == LatentDtype::kF16) {
      out[i] = f16_to_f64(static_cast<uint16_t>(p[0] | p[1] << 8));
      p += 2;
    } else if (dtype == LatentDtype::kF32) {
      uint32_t b = get_u32(p);
      float f;
      std::memcpy(&f, &b, 4);
      out[i] = f;
      p += 4;
    } else {
      uint64_t b = static_cast<uint64_t>(get_u32(p)) |
                   static_cast<uint64_t>(get_u32(p + 4)) << 32;
      std::memcpy(&out[i], &b, 8);
      p += 8;
    }
  }
  return out;
}

void write_latent_file(const std::string& path, const Tensor& latent, LatentDtype dtype) {
  auto bytes = serialize_latent(latent, dtype);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Input, "cannot open for write: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error(ErrorKind::Input, "write failed: " + path);
}

Tensor read_latent_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw Error(ErrorKind::Input, "cannot open: " + path);
  auto size = is.tellg();
  is.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  is.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!is) throw Error(ErrorKind::Input, "read failed: " + path);
  return deserialize_latent(bytes);
}

int64_t storage_bytes(const Shape& shape, int bytes_per_value) {
  if (shape.empty() || bytes_per_value <= 0)
    throw Error(ErrorKind::Input, "storage_bytes: positive dims and value size required");
  int64_t n = bytes_per_value;
  for (int d : shape) {
    if (d <= 0) throw Error(ErrorKind::Input, "storage_bytes: positive dims required");
    n *= d;
  }
  return n;
}

double storage_megabytes(int64_t bytes) {
  return std::round(static_cast<double>(bytes) / 1e6 * 100.0) / 100.0;
}

double transmission_time(double bytes, double bandwidth_bits_per_s) {
  if (bandwidth_bits_per_s <= 0)
    throw Error(ErrorKind::Input, "transmission_time: bandwidth must be positive");
  return bytes * 8.0 / bandwidth_bits_per_s;
}

double recording_duration(double capacity_bytes, double images_per_s, double per_image_bytes) {
  if (capacity_bytes <= 0 || images_per_s <= 0 || per_image_bytes <= 0)
    throw Error(ErrorKind::Input, "recording_duration: all arguments must be positive");
  return capacity_bytes / (images_per_s * per_image_bytes) / 3600.0;
}

namespace {

StorageRow make_row(const Shape& shape, int bytes_per_value, double bandwidth, double capacity,
                    double rate) {
  StorageRow row;
  row.per_image_bytes = storage_bytes(shape, bytes_per_value);
  row.megabytes = storage_megabytes(row.per_image_bytes);
  double rounded_bytes = row.megabytes * 1e6;
  row.transmission_seconds = transmission_time(rounded_bytes, bandwidth);
  row.recording_hours = recording_duration(capacity, rate, rounded_bytes);
  return row;
}

}  // namespace

CompressionReport compression_report(const Shape& raw_shape, const Shape& latent_shape,
                                     int bytes_per_value, double bandwidth_bits_per_s,
                                     double capacity_bytes, double images_per_s) {
  CompressionReport r;
  r.raw = make_row(raw_shape, bytes_per_value, bandwidth_bits_per_s, capacity_bytes, images_per_s);
  r.latent =
      make_row(latent_shape, bytes_per_value, bandwidth_bits_per_s, capacity_bytes, images_per_s);
  r.ratio_vs_raw =
      static_cast<double>(r.raw.per_image_bytes) / static_cast<double>(r.latent.per_image_bytes);
  return r;
}

std::string format_report(const CompressionReport& report) {
  std::ostringstream os;
  os.precision(10);
  auto row = [&](const char* name, const StorageRow& r) {
    os << name << "\tstorage_mb\t" << r.megabytes << '\n';
    os << name << "\ttransmission_s\t" << r.transmission_seconds << '\n';
    os << name << "\trecording_h\t" << r.recording_hours << '\n';
  };
  row("raw", report.raw);
  row("latent", report.latent);
  os << "ratio_vs_raw\t" << report.ratio_vs_raw << '\n';
  return os.str();
}

}  // namespace cevae
