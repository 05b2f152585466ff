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

#include <filesystem>
#include <fstream>

#include "cvc/video_io.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cvc;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE_BEGIN("video_io");

TEST_CASE("yuv420 loading: constant chroma-neutral frames") {
  const fs::path dir = temp_dir("cvc_yuv");
  // Two 16x16 frames: Y = 0, U = V = 128 -> 768 bytes total.
  std::vector<std::uint8_t> bytes;
  for (int f = 0; f < 2; ++f) {
    bytes.insert(bytes.end(), 256, 0);
    bytes.insert(bytes.end(), 128, 128);
  }
  CHECK(bytes.size() == 768);
  write_bytes(dir / "c.yuv", bytes);

  const FrameSequence seq = load_yuv420((dir / "c.yuv").string(), 16, 16, 100);
  CHECK(seq.frames.size() == 2);
  for (const Tensor& f : seq.frames) {
    CHECK(f.shape() == std::vector<int>{3, 16, 16});
    // Y below the limited-range floor clamps to pure black.
    CHECK(f.min() == 0.0);
    CHECK(f.max() == 0.0);
  }
}

TEST_CASE("yuv420 loading: size mismatch is a data error") {
  const fs::path dir = temp_dir("cvc_yuv_bad");
  write_bytes(dir / "bad.yuv", std::vector<std::uint8_t>(769, 0));
  CHECK_THROWS_AS(load_yuv420((dir / "bad.yuv").string(), 16, 16, 10), DataError);
  write_bytes(dir / "empty.yuv", {});
  CHECK_THROWS_AS(load_yuv420((dir / "empty.yuv").string(), 16, 16, 10), DataError);
  CHECK_THROWS_AS(load_yuv420((dir / "bad.yuv").string(), 15, 16, 10), ArgumentError);
}

TEST_CASE("color round trip stays within the 8-bit quantization bound") {
  // Grayscale gradient: chroma is constant, so the 4:2:0 file path is lossless
  // up to quantization of the matrices.
  const int n = 64;
  Tensor grad({3, n, n});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) grad.at(c, y, x) = x / double(n - 1);
    }
  }
  const fs::path dir = temp_dir("cvc_rt");
  save_yuv420((dir / "g.yuv").string(), FrameSequence{{grad}, 30.0});
  const FrameSequence back = load_yuv420((dir / "g.yuv").string(), n, n, 1);
  double max_err = 0.0;
  for (std::int64_t i = 0; i < grad.numel(); ++i) {
    max_err = std::max(max_err, std::fabs(grad[i] - back.frames[0][i]));
  }
  CHECK(max_err <= 2.0 / 255.0);

  // Full-resolution matrix round trip on random colors.
  Rng rng(3);
  max_err = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double r = rng.uniform(0.0, 1.0), g = rng.uniform(0.0, 1.0),
                 b = rng.uniform(0.0, 1.0);
    std::uint8_t yy, uu, vv;
    rgb_to_yuv_8bit(r, g, b, yy, uu, vv);
    double r2, g2, b2;
    yuv_8bit_to_rgb(yy, uu, vv, r2, g2, b2);
    max_err = std::max({max_err, std::fabs(r - r2), std::fabs(g - g2),
                        std::fabs(b - b2)});
  }
  CHECK(max_err <= 2.0 / 255.0);
}

TEST_CASE("image sequence loading") {
  const fs::path dir = temp_dir("cvc_imgs");
  Rng rng(11);
  for (int i = 0; i < 3; ++i) {
    save_image((dir / ("f" + std::to_string(i) + ".png")).string(),
               testutil::random_tensor({3, 64, 64}, rng, 0.0, 1.0));
  }
  const FrameSequence seq = load_image_sequence(dir.string(), "*.png");
  CHECK(seq.frames.size() == 3);
  CHECK(seq.width() == 64);
  CHECK(seq.height() == 64);

  // Dimension mismatch.
  const fs::path dir2 = temp_dir("cvc_imgs2");
  save_image((dir2 / "a.png").string(), testutil::random_tensor({3, 32, 32}, rng, 0.0, 1.0));
  save_image((dir2 / "b.png").string(), testutil::random_tensor({3, 48, 32}, rng, 0.0, 1.0));
  CHECK_THROWS_AS(load_image_sequence(dir2.string(), "*.png"), DataError);

  // No match.
  CHECK_THROWS_AS(load_image_sequence(dir.string(), "*.jpg"), DataError);

  // Single all-white png decodes to all 1.0.
  const fs::path dir3 = temp_dir("cvc_imgs3");
  save_image((dir3 / "w.png").string(), Tensor({3, 8, 8}, 1.0));
  const FrameSequence white = load_image_sequence(dir3.string(), "*.png");
  CHECK(white.frames.size() == 1);
  CHECK(white.frames[0].min() == 1.0);
}

TEST_CASE("ppm round trip") {
  const fs::path dir = temp_dir("cvc_ppm");
  Rng rng(13);
  Tensor img = testutil::random_tensor({3, 10, 14}, rng, 0.0, 1.0);
  save_image((dir / "x.ppm").string(), img);
  const Tensor back = load_image((dir / "x.ppm").string());
  CHECK(back.shape() == img.shape());
  for (std::int64_t i = 0; i < img.numel(); ++i) {
    CHECK(std::fabs(back[i] - img[i]) <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("gop segmentation") {
  const GopStructure g1 = segment_gops(100, 10);
  CHECK(g1.frame_roles.size() == 100);
  int intra = 0;
  for (size_t i = 0; i < g1.frame_roles.size(); ++i) {
    if (g1.frame_roles[i] == FrameRole::kIntra) ++intra;
    CHECK((g1.frame_roles[i] == FrameRole::kIntra) == (i % 10 == 0));
  }
  CHECK(intra == 10);

  const GopStructure g2 = segment_gops(12, 12);
  CHECK(std::count(g2.frame_roles.begin(), g2.frame_roles.end(), FrameRole::kIntra) == 1);

  const GopStructure g3 = segment_gops(25, 10);
  CHECK(std::count(g3.frame_roles.begin(), g3.frame_roles.end(), FrameRole::kIntra) == 3);

  CHECK_THROWS_AS(segment_gops(10, 0), ArgumentError);

  // Property: role list covers the sequence, I count is ceil(N / gop).
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    const int n = rng.uniform_int(1, 200);
    const int gop = rng.uniform_int(1, 30);
    const GopStructure g = segment_gops(n, gop);
    CHECK(static_cast<int>(g.frame_roles.size()) == n);
    const auto intra_count =
        std::count(g.frame_roles.begin(), g.frame_roles.end(), FrameRole::kIntra);
    CHECK(intra_count == (n + gop - 1) / gop);
  }
}

TEST_CASE("padding and cropping") {
  Rng rng(19);
  Tensor f = testutil::random_tensor({3, 48, 80}, rng, 0.0, 1.0);
  const Tensor padded = pad_to_multiple(f, 64);
  CHECK(padded.shape() == std::vector<int>{3, 64, 128});
  // Interior preserved exactly.
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 48; ++y) {
      for (int x = 0; x < 80; ++x) CHECK(padded.at(c, y, x) == f.at(c, y, x));
    }
  }
  // Mirror: first padded row repeats row 46 (reflect about the last row).
  CHECK(padded.at(0, 48, 0) == f.at(0, 46, 0));
  const Tensor back = crop_frame(padded, 80, 48);
  for (std::int64_t i = 0; i < f.numel(); ++i) CHECK(back[i] == f[i]);
}

TEST_SUITE_END();
