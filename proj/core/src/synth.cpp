#include "dgrlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace dgrlab::synth {

namespace {

constexpr std::uint64_t kHeldoutBit = std::uint64_t{1} << 63;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void check_level(int level) {
  if (level < 1 || level > kLevels) {
    throw std::out_of_range("distortion level " + std::to_string(level) + " outside [1, 5]");
  }
}

Image gaussian_blur(const Image& src, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (auto& k : kernel) k /= norm;

  const auto h = static_cast<int>(src.height), w = static_cast<int>(src.width);
  Image tmp(src.height, src.width), out(src.height, src.width);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sx = std::clamp(x + i, 0, w - 1);
          acc += kernel[i + radius] * src.at(y, sx, c);
        }
        tmp.at(y, x, c) = acc;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sy = std::clamp(y + i, 0, h - 1);
          acc += kernel[i + radius] * tmp.at(sy, x, c);
        }
        out.at(y, x, c) = acc;
      }
  return out;
}

Image pixelate(const Image& src, std::size_t block) {
  Image out(src.height, src.width);
  for (std::size_t by = 0; by < src.height; by += block)
    for (std::size_t bx = 0; bx < src.width; bx += block) {
      const std::size_t ey = std::min(src.height, by + block), ex = std::min(src.width, bx + block);
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t y = by; y < ey; ++y)
          for (std::size_t x = bx; x < ex; ++x) acc += src.at(y, x, c);
        acc /= static_cast<double>((ey - by) * (ex - bx));
        for (std::size_t y = by; y < ey; ++y)
          for (std::size_t x = bx; x < ex; ++x) out.at(y, x, c) = acc;
      }
    }
  return out;
}

// Smooth random field: values on a coarse lattice, bilinearly interpolated.
std::vector<double> band_limited_field(std::size_t h, std::size_t w, double spacing, double amplitude,
                                       Rng& rng) {
  const std::size_t gh = static_cast<std::size_t>(std::ceil(h / spacing)) + 2;
  const std::size_t gw = static_cast<std::size_t>(std::ceil(w / spacing)) + 2;
  std::normal_distribution<double> normal(0.0, amplitude);
  std::vector<double> lattice(gh * gw);
  for (auto& v : lattice) v = normal(rng);
  std::vector<double> field(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double fy = y / spacing, fx = x / spacing;
      const auto iy = static_cast<std::size_t>(fy), ix = static_cast<std::size_t>(fx);
      const double ty = fy - iy, tx = fx - ix;
      const double v00 = lattice[iy * gw + ix], v01 = lattice[iy * gw + ix + 1];
      const double v10 = lattice[(iy + 1) * gw + ix], v11 = lattice[(iy + 1) * gw + ix + 1];
      field[y * w + x] = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    }
  return field;
}

}  // namespace

Image Image::crop(std::size_t top, std::size_t left, std::size_t h, std::size_t w) const {
  if (top + h > height || left + w > width) throw std::out_of_range("crop outside image bounds");
  Image out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = at(top + y, left + x, c);
  return out;
}

std::string_view family_name(Family family) {
  switch (family) {
    case Family::blur: return "blur";
    case Family::additive_noise: return "additive-noise";
    case Family::impulse_noise: return "impulse-noise";
    case Family::block_quantize: return "block-quantize";
    case Family::brightness: return "brightness";
    case Family::contrast: return "contrast";
    case Family::pixelate: return "pixelate";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (auto f : {Family::blur, Family::additive_noise, Family::impulse_noise, Family::block_quantize,
                 Family::brightness, Family::contrast, Family::pixelate}) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown distortion family '" + std::string(name) + "'");
}

std::array<double, kLevels> default_strengths(Family family) {
  switch (family) {
    case Family::blur: return {0.6, 1.1, 1.7, 2.5, 3.5};            // Gaussian sigma, px
    case Family::additive_noise: return {0.03, 0.06, 0.10, 0.15, 0.22};  // noise std
    case Family::impulse_noise: return {0.01, 0.03, 0.06, 0.11, 0.18};   // flip probability
    case Family::block_quantize: return {0.04, 0.08, 0.13, 0.20, 0.30};  // quantization step
    case Family::brightness: return {0.06, 0.13, 0.21, 0.30, 0.40};      // additive lift
    case Family::contrast: return {0.25, 0.42, 0.57, 0.70, 0.82};        // fraction of contrast removed
    case Family::pixelate: return {2, 3, 4, 6, 8};                      // block edge, px
  }
  throw ConfigError("unknown distortion family");
}

DistortionSpec make_spec(Family family, int type_id) {
  return DistortionSpec{type_id, family, default_strengths(family)};
}

std::vector<DistortionSpec> default_catalog() {
  std::vector<DistortionSpec> out;
  int id = 0;
  for (auto f : {Family::blur, Family::additive_noise, Family::impulse_noise, Family::block_quantize,
                 Family::brightness, Family::contrast, Family::pixelate}) {
    out.push_back(make_spec(f, id++));
  }
  return out;
}

double MosModel::mean(int type_id, int level) const {
  check_level(level);
  const auto& table = (type_id >= 0 && static_cast<std::size_t>(type_id) < per_type.size())
                          ? per_type[static_cast<std::size_t>(type_id)]
                          : default_table;
  return table[static_cast<std::size_t>(level - 1)];
}

void MosModel::validate() const {
  auto check = [](const std::array<double, kLevels>& t) {
    for (std::size_t i = 0; i + 1 < t.size(); ++i)
      if (!(t[i] > t[i + 1])) throw ConfigError("proxy score table must strictly decrease with level");
  };
  check(default_table);
  for (const auto& t : per_type) check(t);
  if (jitter_std < 0.0) throw ConfigError("proxy score jitter must be nonnegative");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t draw_content_seed(Rng& rng, SeedSpace space) {
  const std::uint64_t raw = rng();
  return space == SeedSpace::heldout ? (raw | kHeldoutBit) : (raw & ~kHeldoutBit);
}

SeedSpace seed_space_of(std::uint64_t content_seed) {
  return (content_seed & kHeldoutBit) ? SeedSpace::heldout : SeedSpace::training;
}

Image make_clean_patch(std::uint64_t content_seed, std::size_t height, std::size_t width) {
  Rng rng(mix_seed(content_seed, 0x636c65616eULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Image img(height, width);

  // Base colour plus a linear gradient.
  std::array<double, 3> base{};
  for (auto& b : base) b = 0.4 + 0.2 * unit(rng);
  const double angle = 2.0 * 3.14159265358979323846 * unit(rng);
  const double slope = (0.04 + 0.08 * unit(rng)) / 32.0;  // per pixel
  const double gy = std::sin(angle) * slope, gx = std::cos(angle) * slope;
  const double cy = 0.5 * static_cast<double>(height), cx = 0.5 * static_cast<double>(width);

  // Band-limited texture: a shared luminance field and weaker chroma fields.
  const auto luma = band_limited_field(height, width, 6.0, 0.16, rng);
  std::array<std::vector<double>, 3> chroma;
  for (auto& f : chroma) f = band_limited_field(height, width, 9.0, 0.04, rng);

  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double g = gy * (static_cast<double>(y) - cy) + gx * (static_cast<double>(x) - cx);
      for (std::size_t c = 0; c < 3; ++c)
        img.at(y, x, c) = base[c] + g + luma[y * width + x] + chroma[c][y * width + x];
    }

  // Sharp-edged rectangles, density fixed per unit area so crops look alike.
  const auto count = std::max<std::size_t>(2, (height * width) / 140);
  std::uniform_int_distribution<std::size_t> side(3, 10);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t rh = std::min(side(rng), height), rw = std::min(side(rng), width);
    const std::size_t top = std::uniform_int_distribution<std::size_t>(0, height - rh)(rng);
    const std::size_t left = std::uniform_int_distribution<std::size_t>(0, width - rw)(rng);
    const double lum = unit(rng) < 0.5 ? 0.05 + 0.2 * unit(rng) : 0.75 + 0.2 * unit(rng);
    std::array<double, 3> colour{};
    for (auto& c : colour) c = lum + 0.08 * (unit(rng) - 0.5);
    for (std::size_t y = top; y < top + rh; ++y)
      for (std::size_t x = left; x < left + rw; ++x)
        for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = colour[c];
  }

  // Fine detail over everything: an oriented grating and a short-range field.
  // Without it blur, pixelation and quantization barely touch the patch.
  const double theta = 3.14159265358979323846 * unit(rng);
  const double period = 3.0 + 3.0 * unit(rng);
  const double phase = 2.0 * 3.14159265358979323846 * unit(rng);
  const double grating = 0.04 + 0.04 * unit(rng);
  const double ky = std::sin(theta) * 2.0 * 3.14159265358979323846 / period;
  const double kx = std::cos(theta) * 2.0 * 3.14159265358979323846 / period;
  const auto fine = band_limited_field(height, width, 2.0, 0.05, rng);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double d = grating * std::sin(ky * static_cast<double>(y) + kx * static_cast<double>(x) + phase) +
                       fine[y * width + x];
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) += d;
    }

  for (auto& v : img.pixels) v = clamp01(v);
  return img;
}

Image apply_distortion(const Image& patch, const DistortionSpec& spec, int level, std::uint64_t noise_seed) {
  check_level(level);
  const double s = spec.strengths[static_cast<std::size_t>(level - 1)];
  Rng rng(mix_seed(noise_seed, 0x6e6f697365ULL));
  Image out;
  switch (spec.family) {
    case Family::blur:
      out = gaussian_blur(patch, s);
      break;
    case Family::additive_noise: {
      out = patch;
      std::normal_distribution<double> normal(0.0, s);
      for (auto& v : out.pixels) v += normal(rng);
      break;
    }
    case Family::impulse_noise: {
      out = patch;
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
        if (unit(rng) < s) {
          const double v = unit(rng) < 0.5 ? 0.0 : 1.0;
          out.pixels[i] = out.pixels[i + 1] = out.pixels[i + 2] = v;
        }
      }
      break;
    }
    case Family::block_quantize:
      out = patch;
      for (auto& v : out.pixels) v = std::round(v / s) * s;
      break;
    case Family::brightness:
      out = patch;
      for (auto& v : out.pixels) v += s;
      break;
    case Family::contrast: {
      out = patch;
      std::array<double, 3> mean{};
      for (std::size_t i = 0; i < out.pixels.size(); ++i) mean[i % 3] += out.pixels[i];
      for (auto& m : mean) m /= static_cast<double>(patch.height * patch.width);
      for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = mean[i % 3] + (1.0 - s) * (out.pixels[i] - mean[i % 3]);
      break;
    }
    case Family::pixelate:
      out = pixelate(patch, static_cast<std::size_t>(s));
      break;
    default:
      throw ConfigError("unknown distortion family");
  }
  for (auto& v : out.pixels) v = clamp01(v);
  return out;
}

double proxy_mos(int type_id, int level, std::uint64_t content_seed, const MosModel& model) {
  const double m = model.mean(type_id, level);
  double eta = 0.0;
  if (model.jitter_std > 0.0) {
    Rng rng(mix_seed(content_seed, 0x6d6f73ULL));
    eta = std::normal_distribution<double>(0.0, model.jitter_std)(rng);
  }
  return std::clamp(m + eta, 1.0, 5.0);
}

DistortionSample make_sample(const DistortionSpec& spec, int level, std::uint64_t content_seed,
                             std::size_t height, std::size_t width, const MosModel& mos) {
  DistortionSample sample;
  sample.type_id = spec.type_id;
  sample.level = level;
  sample.content_seed = content_seed;
  sample.proxy_mos = proxy_mos(spec.type_id, level, content_seed, mos);
  const auto noise_seed = mix_seed(content_seed, static_cast<std::uint64_t>(spec.type_id * 8 + level));
  sample.patch = apply_distortion(make_clean_patch(content_seed, height, width), spec, level, noise_seed);
  return sample;
}

std::vector<DistortionSample> sample_type_batch(const DistortionSpec& spec, std::size_t n, Rng& rng,
                                                const SampleOptions& options) {
  if (n < 2) throw std::invalid_argument("a distortion graph needs at least 2 samples, got " + std::to_string(n));
  std::vector<int> levels(n);
  const std::size_t full_rounds = (n / kLevels) * kLevels;
  for (std::size_t i = 0; i < full_rounds; ++i) levels[i] = static_cast<int>(i % kLevels) + 1;
  std::uniform_int_distribution<int> any_level(1, kLevels);
  for (std::size_t i = full_rounds; i < n; ++i) levels[i] = any_level(rng);

  std::set<std::uint64_t> used;
  std::vector<DistortionSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t seed;
    do {
      seed = draw_content_seed(rng, options.seed_space);
    } while (!used.insert(seed).second);
    out.push_back(make_sample(spec, levels[i], seed, options.patch_size, options.patch_size, options.mos));
  }
  return out;
}

std::vector<DistortionSample> sample_mixed_batch(std::span<const DistortionSpec> types, std::size_t n,
                                                 Rng& rng, const SampleOptions& options) {
  if (types.empty()) throw std::invalid_argument("sample_mixed_batch: no distortion types");
  std::uniform_int_distribution<std::size_t> pick(0, types.size() - 1);
  std::uniform_int_distribution<int> any_level(1, kLevels);
  std::set<std::uint64_t> used;
  std::vector<DistortionSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& spec = types[pick(rng)];
    const int level = any_level(rng);
    std::uint64_t seed;
    do {
      seed = draw_content_seed(rng, options.seed_space);
    } while (!used.insert(seed).second);
    out.push_back(make_sample(spec, level, seed, options.patch_size, options.patch_size, options.mos));
  }
  return out;
}

TripletBatches sample_triplet(std::span<const DistortionSpec> types, std::size_t n, Rng& rng,
                              const SampleOptions& options) {
  if (types.size() < 2) throw std::invalid_argument("triplet sampling needs at least 2 distortion types");
  std::uniform_int_distribution<std::size_t> pick(0, types.size() - 1);
  const std::size_t anchor_idx = pick(rng);
  std::size_t negative_idx = std::uniform_int_distribution<std::size_t>(0, types.size() - 2)(rng);
  if (negative_idx >= anchor_idx) ++negative_idx;

  TripletBatches t;
  t.anchor = sample_type_batch(types[anchor_idx], n, rng, options);
  std::set<std::uint64_t> anchor_seeds;
  for (const auto& s : t.anchor) anchor_seeds.insert(s.content_seed);
  // Redraw until content is disjoint from the anchor batch.
  for (;;) {
    t.positive = sample_type_batch(types[anchor_idx], n, rng, options);
    bool disjoint = true;
    for (const auto& s : t.positive) disjoint = disjoint && !anchor_seeds.contains(s.content_seed);
    if (disjoint) break;
  }
  t.negative = sample_type_batch(types[negative_idx], n, rng, options);
  return t;
}

double psnr(const Image& reference, const Image& distorted) {
  if (reference.pixels.size() != distorted.pixels.size()) throw std::invalid_argument("psnr: size mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < reference.pixels.size(); ++i) {
    const double d = reference.pixels[i] - distorted.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(reference.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace dgrlab::synth
