#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tacseg/metrics.hpp"
#include "tacseg/synthetic.hpp"
#include "tacseg/tensor.hpp"

// Dataset on disk: binary PPM (P6) images and binary PGM (P5) masks with
// 255 = foreground, laid out as <split>/<image_id>/{image.ppm, inst_<k>.pgm}.

namespace tacseg {

namespace fs = std::filesystem;

inline void write_ppm(const fs::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 3)
    throw DimensionError("write_ppm: expected [3 x H x W], got " +
                         shape_str(image.shape()));
  const std::size_t h = image.extent(1), w = image.extent(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(3 * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch)
        row[3 * c + ch] = static_cast<unsigned char>(std::lround(
            std::clamp(image.at(ch, r, c), 0.0, 1.0) * 255.0));
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!os) throw IoError("write failed: " + path.string());
}

namespace detail {

inline void skip_pnm_whitespace(std::istream& is) {
  int ch = is.peek();
  while (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '#') {
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else {
      is.get();
    }
    ch = is.peek();
  }
}

inline std::size_t read_pnm_int(std::istream& is) {
  skip_pnm_whitespace(is);
  std::size_t v = 0;
  if (!(is >> v)) throw IoError("PNM: bad header integer");
  return v;
}

}  // namespace detail

inline Tensor read_ppm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P6") throw IoError("read_ppm: not a P6 file: " + path.string());
  const std::size_t w = detail::read_pnm_int(is);
  const std::size_t h = detail::read_pnm_int(is);
  const std::size_t maxval = detail::read_pnm_int(is);
  if (maxval != 255) throw IoError("read_ppm: expected maxval 255");
  is.get();  // single whitespace after header
  std::vector<unsigned char> buf(3 * w * h);
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw IoError("read_ppm: truncated pixel data: " + path.string());
  Tensor image({3, h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch)
        image.at(ch, r, c) = buf[(r * w + c) * 3 + ch] / 255.0;
  return image;
}

inline void write_pgm(const fs::path& path, const Mask& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "P5\n" << m.w << " " << m.h << "\n255\n";
  std::vector<unsigned char> row(m.w);
  for (std::size_t r = 0; r < m.h; ++r) {
    for (std::size_t c = 0; c < m.w; ++c) row[c] = m.at(r, c) ? 255 : 0;
    os.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!os) throw IoError("write failed: " + path.string());
}

inline Mask read_pgm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P5") throw IoError("read_pgm: not a P5 file: " + path.string());
  const std::size_t w = detail::read_pnm_int(is);
  const std::size_t h = detail::read_pnm_int(is);
  const std::size_t maxval = detail::read_pnm_int(is);
  if (maxval != 255) throw IoError("read_pgm: expected maxval 255");
  is.get();
  std::vector<unsigned char> buf(w * h);
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw IoError("read_pgm: truncated pixel data: " + path.string());
  Mask m(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m.v[i] = buf[i] >= 128 ? 1 : 0;
  return m;
}

inline std::string image_dir_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "img_%03zu", index);
  return buf;
}

// Writes <root>/<split>/<image_id>/..., refusing an existing non-empty split
// directory unless force is set.
inline void write_dataset(const fs::path& root, const std::string& split,
                          std::vector<SyntheticSample>& samples, bool force) {
  const fs::path dir = root / split;
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw IoError("refusing to overwrite non-empty directory " + dir.string() +
                  " (use --force)");
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    samples[i].instances.image_id = image_dir_name(i);
    const fs::path idir = dir / samples[i].instances.image_id;
    fs::create_directories(idir);
    write_ppm(idir / "image.ppm", samples[i].image);
    for (std::size_t k = 0; k < samples[i].instances.masks.size(); ++k)
      write_pgm(idir / ("inst_" + std::to_string(k) + ".pgm"),
                samples[i].instances.masks[k]);
  }
}

// Reads a split directory back; samples ordered by image_id.
inline std::vector<SyntheticSample> read_dataset(const fs::path& split_dir) {
  if (!fs::is_directory(split_dir))
    throw IoError("dataset directory not found: " + split_dir.string());
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(split_dir))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<SyntheticSample> samples;
  for (const fs::path& idir : dirs) {
    SyntheticSample s;
    s.image = read_ppm(idir / "image.ppm");
    s.instances.image_id = idir.filename().string();
    std::vector<fs::path> masks;
    for (const auto& entry : fs::directory_iterator(idir))
      if (entry.path().extension() == ".pgm") masks.push_back(entry.path());
    std::sort(masks.begin(), masks.end());
    for (const fs::path& mp : masks)
      s.instances.masks.push_back(read_pgm(mp));
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace tacseg
