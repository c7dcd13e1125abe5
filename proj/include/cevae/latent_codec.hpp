#ifndef CEVAE_LATENT_CODEC_HPP_
#define CEVAE_LATENT_CODEC_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cevae/tensor.hpp"

namespace cevae {

enum class LatentDtype : uint8_t { kF16 = 0, kF32 = 1, kF64 = 2 };

int dtype_size(LatentDtype d);

// Binary container for a (C,H,W) latent:
//   magic "CEVL" | version u8 (=1) | dtype u8 | C,H,W as u32 LE | payload LE.
// f64 round-trips bit-exactly; f16/f32 within dtype precision.
std::vector<uint8_t> serialize_latent(const Tensor& latent, LatentDtype dtype = LatentDtype::kF16);
Tensor deserialize_latent(const std::vector<uint8_t>& bytes);

void write_latent_file(const std::string& path, const Tensor& latent,
                       LatentDtype dtype = LatentDtype::kF16);
Tensor read_latent_file(const std::string& path);

// IEEE 754 half conversions, round-to-nearest-even on encode.
uint16_t f64_to_f16(double v);
double f16_to_f64(uint16_t h);

// --- storage/transmission/recording arithmetic ---

int64_t storage_bytes(const Shape& shape, int bytes_per_value);

// bytes/1e6 rounded to two decimals ("MB" means 10^6 bytes).
double storage_megabytes(int64_t bytes);

// bytes * 8 / bandwidth_bits_per_s.
double transmission_time(double bytes, double bandwidth_bits_per_s);

// capacity / (rate * size) / 3600.
double recording_duration(double capacity_bytes, double images_per_s, double per_image_bytes);

struct StorageRow {
  int64_t per_image_bytes = 0;
  double megabytes = 0;            // rounded to 2 decimals
  double transmission_seconds = 0; // from the rounded megabyte figure
  double recording_hours = 0;      // from the rounded megabyte figure
};

struct CompressionReport {
  StorageRow raw;
  StorageRow latent;
  double ratio_vs_raw = 0;  // exact byte ratio, no rounding
};

// Headline figures for one raw/latent shape pair. Transmission and recording
// numbers are derived from the two-decimal megabyte values so the report
// matches what a reader computes from the printed storage column; the
// compression ratio uses exact byte counts.
CompressionReport compression_report(const Shape& raw_shape, const Shape& latent_shape,
                                     int bytes_per_value = 8,
                                     double bandwidth_bits_per_s = 1e9,
                                     double capacity_bytes = 2204.28e6,
                                     double images_per_s = 1.0);

std::string format_report(const CompressionReport& report);

}  // namespace cevae

#endif  // CEVAE_LATENT_CODEC_HPP_
