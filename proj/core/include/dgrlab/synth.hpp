#pragma once

// Labeled synthetic distortions: procedural clean patches, seven distortion
// families at five severity levels, and a proxy opinion score that is
// Gaussian around a per-level mean.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dgrlab/layers.hpp"

namespace dgrlab::synth {

inline constexpr int kLevels = 5;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// H x W x 3, row-major, interleaved channels, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  Image crop(std::size_t top, std::size_t left, std::size_t h, std::size_t w) const;
};

enum class Family { blur, additive_noise, impulse_noise, block_quantize, brightness, contrast, pixelate };

std::string_view family_name(Family family);
Family parse_family(std::string_view name);  // throws ConfigError

struct DistortionSpec {
  int type_id = 0;
  Family family = Family::blur;
  std::array<double, kLevels> strengths{};  // strictly increasing severity
};

std::array<double, kLevels> default_strengths(Family family);
DistortionSpec make_spec(Family family, int type_id);
// All seven families, type ids in declaration order.
std::vector<DistortionSpec> default_catalog();

struct DistortionSample {
  Image patch;
  int type_id = 0;
  int level = 1;
  double proxy_mos = 0.0;
  std::uint64_t content_seed = 0;
};

// Level-to-mean tables for the proxy score. Types without an explicit table
// use default_table.
struct MosModel {
  std::array<double, kLevels> default_table{5.0, 4.2, 3.4, 2.6, 1.8};
  std::vector<std::array<double, kLevels>> per_type;
  double jitter_std = 0.2;

  double mean(int type_id, int level) const;
  void validate() const;
};

// Training and held-out content seeds never collide.
enum class SeedSpace { training, heldout };

struct SampleOptions {
  std::size_t patch_size = 32;
  MosModel mos;
  SeedSpace seed_space = SeedSpace::training;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t draw_content_seed(Rng& rng, SeedSpace space);
SeedSpace seed_space_of(std::uint64_t content_seed);

Image make_clean_patch(std::uint64_t content_seed, std::size_t height, std::size_t width);
Image apply_distortion(const Image& patch, const DistortionSpec& spec, int level, std::uint64_t noise_seed);
double proxy_mos(int type_id, int level, std::uint64_t content_seed, const MosModel& model = {});

// Clean content at the given size, distorted with the sample's deterministic noise seed.
DistortionSample make_sample(const DistortionSpec& spec, int level, std::uint64_t content_seed,
                             std::size_t height, std::size_t width, const MosModel& mos);

std::vector<DistortionSample> sample_type_batch(const DistortionSpec& spec, std::size_t n, Rng& rng,
                                                const SampleOptions& options = {});

// Uniform type and level per sample.
std::vector<DistortionSample> sample_mixed_batch(std::span<const DistortionSpec> types, std::size_t n,
                                                 Rng& rng, const SampleOptions& options = {});

struct TripletBatches {
  std::vector<DistortionSample> anchor;
  std::vector<DistortionSample> positive;
  std::vector<DistortionSample> negative;
};

TripletBatches sample_triplet(std::span<const DistortionSpec> types, std::size_t n, Rng& rng,
                              const SampleOptions& options = {});

double psnr(const Image& reference, const Image& distorted);

// PNG patches plus manifest.csv with `path,type_id,level,proxy_mos,seed`.
void export_dataset(const std::filesystem::path& directory, std::span<const DistortionSample> samples);
void write_png(const std::filesystem::path& path, const Image& image);

}  // namespace dgrlab::synth
