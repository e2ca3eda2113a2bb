#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "dgrlab/synth.hpp"

namespace dgrlab::synth {

void write_png(const std::filesystem::path& path, const Image& image) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<png_byte> row(image.width * 3);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t i = 0; i < image.width * 3; ++i)
      row[i] = static_cast<png_byte>(std::lround(255.0 * image.pixels[y * image.width * 3 + i]));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void export_dataset(const std::filesystem::path& directory, std::span<const DistortionSample> samples) {
  std::filesystem::create_directories(directory);
  std::ofstream manifest(directory / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + directory.string());
  manifest << "path,type_id,level,proxy_mos,seed\n";
  manifest << std::setprecision(17);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    std::ostringstream name;
    name << "patch_" << std::setw(6) << std::setfill('0') << i << ".png";
    write_png(directory / name.str(), s.patch);
    manifest << name.str() << ',' << s.type_id << ',' << s.level << ',' << s.proxy_mos << ',' << s.content_seed
             << '\n';
  }
}

}  // namespace dgrlab::synth
