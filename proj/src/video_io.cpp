// Copyright (c) the CVC Project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cvc/video_io.hpp"

#include <fnmatch.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace cvc {

namespace {

std::uint8_t clamp_u8(double v) {
  const double r = std::round(v);
  if (r < 0.0) return 0;
  if (r > 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Mirror an index into [0, n-1] (reflect-101 with arbitrary overshoot).
int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace

void validate_frame(const Tensor& frame) {
  check_shape(frame.ndim() == 3 && frame.dim(0) == 3,
              "frame must be [3,H,W], got " + frame.shape_str());
  check_shape(frame.dim(1) >= 1 && frame.dim(2) >= 1, "frame must be non-empty");
  for (std::int64_t i = 0; i < frame.numel(); ++i) {
    if (!(frame[i] >= 0.0 && frame[i] <= 1.0)) {
      throw ArgumentError("frame values must lie in [0,1]");
    }
  }
}

void rgb_to_yuv_8bit(double r, double g, double b, std::uint8_t& y,
                     std::uint8_t& u, std::uint8_t& v) {
  y = clamp_u8(16.0 + 65.481 * r + 128.553 * g + 24.966 * b);
  u = clamp_u8(128.0 - 37.797 * r - 74.203 * g + 112.0 * b);
  v = clamp_u8(128.0 + 112.0 * r - 93.786 * g - 18.214 * b);
}

void yuv_8bit_to_rgb(std::uint8_t y, std::uint8_t u, std::uint8_t v, double& r,
                     double& g, double& b) {
  const double l = (static_cast<double>(y) - 16.0) / 219.0;
  const double cb = (static_cast<double>(u) - 128.0) / 224.0;
  const double cr = (static_cast<double>(v) - 128.0) / 224.0;
  r = clamp01(l + 1.402 * cr);
  g = clamp01(l - (0.299 * 1.402 / 0.587) * cr - (0.114 * 1.772 / 0.587) * cb);
  b = clamp01(l + 1.772 * cb);
}

FrameSequence load_yuv420(const std::string& path, int width, int height,
                          int max_frames) {
  if (width < 2 || height < 2 || width % 2 != 0 || height % 2 != 0) {
    throw ArgumentError("yuv420 dimensions must be positive and even");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open yuv file: " + path);
  in.seekg(0, std::ios::end);
  const std::int64_t size = static_cast<std::int64_t>(in.tellg());
  in.seekg(0);

  const std::int64_t frame_bytes =
      static_cast<std::int64_t>(width) * height * 3 / 2;
  if (size % frame_bytes != 0) {
    throw DataError("yuv file size " + std::to_string(size) +
                    " is not a multiple of " + std::to_string(frame_bytes) +
                    " bytes per frame: " + path);
  }
  std::int64_t available = size / frame_bytes;
  if (available == 0) throw DataError("yuv file holds no complete frame: " + path);
  const std::int64_t n = std::min<std::int64_t>(available, max_frames);
  if (n == 0) throw DataError("max_frames is zero");

  FrameSequence seq;
  const int cw = width / 2, ch = height / 2;
  std::vector<std::uint8_t> ybuf(static_cast<size_t>(width) * height);
  std::vector<std::uint8_t> ubuf(static_cast<size_t>(cw) * ch);
  std::vector<std::uint8_t> vbuf(static_cast<size_t>(cw) * ch);
  for (std::int64_t f = 0; f < n; ++f) {
    in.read(reinterpret_cast<char*>(ybuf.data()), static_cast<std::streamsize>(ybuf.size()));
    in.read(reinterpret_cast<char*>(ubuf.data()), static_cast<std::streamsize>(ubuf.size()));
    in.read(reinterpret_cast<char*>(vbuf.data()), static_cast<std::streamsize>(vbuf.size()));
    if (!in) throw DataError("short read in yuv file: " + path);
    Tensor frame({3, height, width});
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::uint8_t yy = ybuf[static_cast<size_t>(y) * width + x];
        const std::uint8_t uu = ubuf[static_cast<size_t>(y / 2) * cw + x / 2];
        const std::uint8_t vv = vbuf[static_cast<size_t>(y / 2) * cw + x / 2];
        double r, g, b;
        yuv_8bit_to_rgb(yy, uu, vv, r, g, b);
        frame.at(0, y, x) = r;
        frame.at(1, y, x) = g;
        frame.at(2, y, x) = b;
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void save_yuv420(const std::string& path, const FrameSequence& seq) {
  if (seq.frames.empty()) throw ArgumentError("empty sequence");
  const int w = seq.width(), h = seq.height();
  if (w % 2 != 0 || h % 2 != 0) {
    throw ArgumentError("yuv420 dimensions must be even");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  std::vector<std::uint8_t> ybuf(static_cast<size_t>(w) * h);
  std::vector<double> uacc(static_cast<size_t>(w / 2) * (h / 2));
  std::vector<double> vacc(uacc.size());
  std::vector<std::uint8_t> ubuf(uacc.size()), vbuf(uacc.size());
  for (const Tensor& frame : seq.frames) {
    std::fill(uacc.begin(), uacc.end(), 0.0);
    std::fill(vacc.begin(), vacc.end(), 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::uint8_t yy, uu, vv;
        rgb_to_yuv_8bit(frame.at(0, y, x), frame.at(1, y, x), frame.at(2, y, x),
                        yy, uu, vv);
        ybuf[static_cast<size_t>(y) * w + x] = yy;
        uacc[static_cast<size_t>(y / 2) * (w / 2) + x / 2] += uu;
        vacc[static_cast<size_t>(y / 2) * (w / 2) + x / 2] += vv;
      }
    }
    for (size_t i = 0; i < uacc.size(); ++i) {
      ubuf[i] = clamp_u8(uacc[i] / 4.0);
      vbuf[i] = clamp_u8(vacc[i] / 4.0);
    }
    out.write(reinterpret_cast<const char*>(ybuf.data()), static_cast<std::streamsize>(ybuf.size()));
    out.write(reinterpret_cast<const char*>(ubuf.data()), static_cast<std::streamsize>(ubuf.size()));
    out.write(reinterpret_cast<const char*>(vbuf.data()), static_cast<std::streamsize>(vbuf.size()));
  }
}

namespace {

Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw DataError("unsupported ppm magic in " + path);
  int w, h, maxval;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval != 255) {
    throw DataError("unsupported ppm header in " + path);
  }
  in.get();  // single whitespace after header
  std::vector<std::uint8_t> buf(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw DataError("truncated ppm payload in " + path);
  Tensor frame({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        frame.at(c, y, x) = buf[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return frame;
}

void save_ppm(const std::string& path, const Tensor& frame) {
  const int h = frame.dim(1), w = frame.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<std::uint8_t> buf(static_cast<size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        buf[(static_cast<size_t>(y) * w + x) * 3 + c] =
            clamp_u8(frame.at(c, y, x) * 255.0);
      }
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

Tensor load_png(const std::string& path) {
  PngReadCloser ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) throw DataError("cannot open image: " + path);
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.png || !ctx.info) throw DataError("png init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("malformed png: " + path);
  png_init_io(ctx.png, ctx.fp);
  png_read_info(ctx.png, ctx.info);

  const int w = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  const int h = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  const png_byte color = png_get_color_type(ctx.png, ctx.info);
  const png_byte depth = png_get_bit_depth(ctx.png, ctx.info);
  if (depth == 16) png_set_strip_16(ctx.png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(ctx.png);
  }
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  std::vector<std::uint8_t> buf(static_cast<size_t>(w) * h * 3);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = buf.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(ctx.png, rows.data());

  Tensor frame({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        frame.at(c, y, x) = buf[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return frame;
}

void save_png(const std::string& path, const Tensor& frame) {
  const int h = frame.dim(1), w = frame.dim(2);
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("png write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[static_cast<size_t>(x) * 3 + c] = clamp_u8(frame.at(c, y, x) * 255.0);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

}  // namespace

Tensor load_image(const std::string& path) {
  const fs::path p(path);
  const std::string ext = p.extension().string();
  if (ext == ".ppm") return load_ppm(path);
  if (ext == ".png") return load_png(path);
  throw DataError("unsupported image extension: " + path);
}

void save_image(const std::string& path, const Tensor& frame) {
  check_shape(frame.ndim() == 3 && frame.dim(0) == 3, "image must be [3,H,W]");
  const fs::path p(path);
  const std::string ext = p.extension().string();
  if (ext == ".ppm") return save_ppm(path, frame);
  if (ext == ".png") return save_png(path, frame);
  throw DataError("unsupported image extension: " + path);
}

FrameSequence load_image_sequence(const std::string& dir, const std::string& pattern) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0) {
      paths.push_back(entry.path().string());
    }
  }
  if (paths.empty()) {
    throw DataError("no image matches pattern '" + pattern + "' in " + dir);
  }
  std::sort(paths.begin(), paths.end());
  FrameSequence seq;
  for (const std::string& p : paths) {
    Tensor frame = load_image(p);
    if (!seq.frames.empty() && !frame.same_shape(seq.frames[0])) {
      throw DataError("image dimension mismatch: " + p + " is " +
                      frame.shape_str() + ", expected " + seq.frames[0].shape_str());
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

GopStructure segment_gops(int num_frames, int gop_size) {
  if (gop_size < 1) throw ArgumentError("gop_size must be >= 1");
  if (num_frames < 0) throw ArgumentError("negative frame count");
  GopStructure g;
  g.gop_size = gop_size;
  g.frame_roles.reserve(static_cast<size_t>(num_frames));
  for (int i = 0; i < num_frames; ++i) {
    g.frame_roles.push_back(i % gop_size == 0 ? FrameRole::kIntra
                                              : FrameRole::kPredicted);
  }
  return g;
}

GopStructure segment_gops(const FrameSequence& seq, int gop_size) {
  return segment_gops(static_cast<int>(seq.frames.size()), gop_size);
}

Tensor pad_to_multiple(const Tensor& frame, int multiple) {
  check_shape(frame.ndim() == 3, "pad_to_multiple: need [C,H,W]");
  const int c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  const int ph = (h + multiple - 1) / multiple * multiple;
  const int pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return frame;
  Tensor out({c, ph, pw});
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < ph; ++y) {
      const int sy = mirror_index(y, h);
      for (int x = 0; x < pw; ++x) {
        out.at(ci, y, x) = frame.at(ci, sy, mirror_index(x, w));
      }
    }
  }
  return out;
}

Tensor crop_frame(const Tensor& frame, int width, int height) {
  check_shape(frame.ndim() == 3, "crop_frame: need [C,H,W]");
  check_shape(width <= frame.dim(2) && height <= frame.dim(1),
              "crop_frame: target larger than source");
  if (width == frame.dim(2) && height == frame.dim(1)) return frame;
  Tensor out({frame.dim(0), height, width});
  for (int c = 0; c < frame.dim(0); ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) out.at(c, y, x) = frame.at(c, y, x);
    }
  }
  return out;
}

std::vector<DatasetEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest json: " + std::string(e.what()));
  }
  if (!j.is_array()) throw DataError("manifest must be a json array");
  std::vector<DatasetEntry> out;
  for (const auto& item : j) {
    DatasetEntry e;
    e.name = item.at("name").get<std::string>();
    e.path = item.at("path").get<std::string>();
    e.format = item.at("format").get<std::string>();
    e.width = item.value("width", 0);
    e.height = item.value("height", 0);
    e.frames = item.value("frames", 0);
    e.gop = item.value("gop", 0);
    e.pattern = item.value("pattern", std::string("*.png"));
    if (e.format != "yuv420" && e.format != "images") {
      throw DataError("manifest entry '" + e.name + "' has unknown format " + e.format);
    }
    out.push_back(std::move(e));
  }
  return out;
}

FrameSequence load_dataset_entry(const DatasetEntry& e) {
  if (e.format == "yuv420") {
    return load_yuv420(e.path, e.width, e.height,
                       e.frames > 0 ? e.frames : 1 << 30);
  }
  FrameSequence seq = load_image_sequence(e.path, e.pattern);
  if (e.frames > 0 && static_cast<int>(seq.frames.size()) > e.frames) {
    seq.frames.resize(static_cast<size_t>(e.frames));
  }
  return seq;
}

}  // namespace cvc
