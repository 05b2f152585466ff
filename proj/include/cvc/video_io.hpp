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

#pragma once

#include <string>
#include <vector>

#include "cvc/tensor.hpp"

namespace cvc {

// A frame is a [3,H,W] tensor with values in [0,1].
void validate_frame(const Tensor& frame);

struct FrameSequence {
  std::vector<Tensor> frames;
  double frame_rate = 30.0;  // metadata only

  int width() const { return frames.empty() ? 0 : frames[0].dim(2); }
  int height() const { return frames.empty() ? 0 : frames[0].dim(1); }
};

enum class FrameRole : std::uint8_t { kIntra = 0, kPredicted = 1 };

struct GopStructure {
  int gop_size = 1;
  std::vector<FrameRole> frame_roles;  // one entry per frame in the sequence
};

// ---- color conversion ----
// Fixed BT.601 limited-range matrices, applied per pixel on [0,1] RGB:
//   Y  =  16 +  65.481 R + 128.553 G +  24.966 B
//   Cb = 128 -  37.797 R -  74.203 G + 112.000 B
//   Cr = 128 + 112.000 R -  93.786 G -  18.214 B
// The inverse uses the exact matrix inverse, so a full-resolution round
// trip is limited by 8-bit quantization only (max error < 2/255 per
// channel). Chroma subsampling in the 4:2:0 file format adds its own loss
// on top of this.
void rgb_to_yuv_8bit(double r, double g, double b, std::uint8_t& y,
                     std::uint8_t& u, std::uint8_t& v);
void yuv_8bit_to_rgb(std::uint8_t y, std::uint8_t u, std::uint8_t v, double& r,
                     double& g, double& b);

// ---- raw video ----
FrameSequence load_yuv420(const std::string& path, int width, int height,
                          int max_frames);
void save_yuv420(const std::string& path, const FrameSequence& seq);

// ---- image sequences ----
FrameSequence load_image_sequence(const std::string& dir, const std::string& pattern);
Tensor load_image(const std::string& path);  // .png / .ppm
void save_image(const std::string& path, const Tensor& frame);

// ---- GOP segmentation ----
GopStructure segment_gops(const FrameSequence& seq, int gop_size);
GopStructure segment_gops(int num_frames, int gop_size);

// ---- padding ----
// Mirror-pads a frame on the right/bottom to the next multiple of
// `multiple`; the original size is carried in the bitstream header and the
// decoder crops before metrics.
Tensor pad_to_multiple(const Tensor& frame, int multiple);
Tensor crop_frame(const Tensor& frame, int width, int height);

// ---- dataset manifest ----
struct DatasetEntry {
  std::string name;
  std::string path;
  std::string format;  // "yuv420" or "images"
  int width = 0;
  int height = 0;
  int frames = 0;
  int gop = 0;
  std::string pattern = "*.png";  // images only
};

std::vector<DatasetEntry> load_manifest(const std::string& path);
FrameSequence load_dataset_entry(const DatasetEntry& e);

}  // namespace cvc
