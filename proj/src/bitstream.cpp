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

#include "cvc/bitstream.hpp"

#include <zlib.h>

#include <cmath>
#include <fstream>

namespace cvc {

namespace ag = cvc::ag;
using ag::Var;

// ---- little serialization helpers (big-endian) ---------------------------

namespace {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }
void put_u16(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, size_t size) : data_(data), size_(size) {}
  std::uint8_t u8() { return need(1), data_[pos_++]; }
  std::uint32_t u16() {
    need(2);
    std::uint32_t v = (static_cast<std::uint32_t>(data_[pos_]) << 8) | data_[pos_ + 1];
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_ + static_cast<size_t>(i)];
    pos_ += 4;
    return v;
  }
  std::vector<std::uint8_t> bytes(size_t n) {
    need(n);
    std::vector<std::uint8_t> v(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return v;
  }
  size_t remaining() const { return size_ - pos_; }

 private:
  bool need(size_t n) {
    if (pos_ + n > size_) throw DataError("truncated bitstream");
    return true;
  }
  const std::uint8_t* data_;
  size_t size_;
  size_t pos_ = 0;
};

Tensor round_tensor(const Tensor& t) {
  Tensor out = t;
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::round(out[i]);
  return out;
}

int symbol_range_for(double max_abs) {
  const int r = std::max(32, static_cast<int>(std::ceil(max_abs)));
  if (r > 30000) throw DataError("latent magnitude out of codable range");
  return r;
}

double ce_bits_of(std::uint32_t freq) {
  return kCdfPrecisionBits - std::log2(static_cast<double>(freq));
}

// ---- Laplace-coded substreams --------------------------------------------
// Element order is position-major, channel-minor, matching the raster walk
// of the sequential (autoregressive) decoder.

std::vector<std::uint8_t> laplace_encode_batch(const Tensor& latents,
                                               const Tensor& mu, const Tensor& sigma,
                                               SubstreamInfo& info) {
  const int c = latents.dim(0), h = latents.dim(1), w = latents.dim(2);
  int r = 32;
  for (std::int64_t i = 0; i < latents.numel(); ++i) {
    r = std::max(r, symbol_range_for(std::fabs(latents[i] - std::round(mu[i]))));
  }
  std::vector<std::uint8_t> payload;
  put_u16(payload, static_cast<std::uint32_t>(r));
  RangeEncoder enc;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ci = 0; ci < c; ++ci) {
        const double m = mu.at(ci, y, x);
        const double mr = std::round(m);
        const CdfTable table = build_cdf(
            laplace_mass_row(m - mr, sigma.at(ci, y, x), r), r);
        const int d = static_cast<int>(latents.at(ci, y, x) - mr);
        info.quantized_ce_bits += ce_bits_of(table.freq(d + r));
        enc.encode(table, d);
      }
    }
  }
  info.symbols += latents.numel();
  auto body = enc.finish();
  payload.insert(payload.end(), body.begin(), body.end());
  info.bytes = static_cast<std::int64_t>(payload.size());
  return payload;
}

Tensor laplace_decode_batch(const std::vector<std::uint8_t>& payload,
                            const Tensor& mu, const Tensor& sigma,
                            const std::vector<int>* table_build_order) {
  const int c = mu.dim(0), h = mu.dim(1), w = mu.dim(2);
  ByteReader br(payload.data(), payload.size());
  const int r = static_cast<int>(br.u16());
  const auto body = br.bytes(br.remaining());

  // Table construction is independent per element; honor an arbitrary
  // build order to demonstrate it (the byte stream itself is consumed in
  // the fixed canonical order).
  const std::int64_t n = mu.numel();
  std::vector<CdfTable> tables(static_cast<size_t>(n));
  std::vector<double> mu_round(static_cast<size_t>(n));
  auto build_one = [&](int e) {
    const int ci = e % c;
    const int pos = e / c;
    const int y = pos / w, x = pos % w;
    const double m = mu.at(ci, y, x);
    const double mr = std::round(m);
    mu_round[static_cast<size_t>(e)] = mr;
    tables[static_cast<size_t>(e)] =
        build_cdf(laplace_mass_row(m - mr, sigma.at(ci, y, x), r), r);
  };
  if (table_build_order != nullptr) {
    if (static_cast<std::int64_t>(table_build_order->size()) != n) {
      throw ArgumentError("table_build_order must cover every latent element");
    }
    for (int e : *table_build_order) build_one(e);
  } else {
    for (std::int64_t e = 0; e < n; ++e) build_one(static_cast<int>(e));
  }

  Tensor out({c, h, w});
  RangeDecoder dec(body.data(), body.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ci = 0; ci < c; ++ci) {
        const std::int64_t e = (static_cast<std::int64_t>(y) * w + x) * c + ci;
        const int d = dec.decode(tables[static_cast<size_t>(e)]);
        out.at(ci, y, x) = d + mu_round[static_cast<size_t>(e)];
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> laplace_encode_sequential(const Tensor& latents,
                                                    const SequentialFusion& sf,
                                                    SubstreamInfo& info) {
  const int c = latents.dim(0), h = latents.dim(1), w = latents.dim(2);
  // Pass 1: walk the raster and record the coding parameters. The masked
  // taps read only strictly-previous positions, so evaluating against the
  // fully populated latent buffer reproduces the decoder's view.
  Tensor mu({c, h, w}), sigma({c, h, w});
  std::vector<double> mu_col(static_cast<size_t>(c)), sg_col(static_cast<size_t>(c));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      sf.params_at(latents, y, x, mu_col.data(), sg_col.data());
      for (int ci = 0; ci < c; ++ci) {
        mu.at(ci, y, x) = mu_col[static_cast<size_t>(ci)];
        sigma.at(ci, y, x) = sg_col[static_cast<size_t>(ci)];
      }
    }
  }
  return laplace_encode_batch(latents, mu, sigma, info);
}

Tensor laplace_decode_sequential(const std::vector<std::uint8_t>& payload,
                                 const SequentialFusion& sf, int c, int h, int w) {
  ByteReader br(payload.data(), payload.size());
  const int r = static_cast<int>(br.u16());
  const auto body = br.bytes(br.remaining());
  RangeDecoder dec(body.data(), body.size());
  Tensor out({c, h, w}, 0.0);
  std::vector<double> mu_col(static_cast<size_t>(c)), sg_col(static_cast<size_t>(c));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      sf.params_at(out, y, x, mu_col.data(), sg_col.data());
      for (int ci = 0; ci < c; ++ci) {
        const double m = mu_col[static_cast<size_t>(ci)];
        const double mr = std::round(m);
        const CdfTable table =
            build_cdf(laplace_mass_row(m - mr, sg_col[static_cast<size_t>(ci)], r), r);
        const int d = dec.decode(table);
        out.at(ci, y, x) = d + mr;
      }
    }
  }
  return out;
}

// ---- factorized-coded substreams ------------------------------------------

std::vector<std::uint8_t> factorized_encode(const Tensor& values,
                                            const FactorizedModel& model,
                                            SubstreamInfo& info) {
  const int c = values.dim(0);
  const int r = symbol_range_for(values.abs_max());
  const auto masses = model.masses_all(r);
  std::vector<CdfTable> tables(static_cast<size_t>(c));
  for (int ci = 0; ci < c; ++ci) {
    tables[static_cast<size_t>(ci)] = build_cdf(masses[static_cast<size_t>(ci)], r);
  }
  std::vector<std::uint8_t> payload;
  put_u16(payload, static_cast<std::uint32_t>(r));
  RangeEncoder enc;
  const std::int64_t plane = static_cast<std::int64_t>(values.dim(1)) * values.dim(2);
  for (int ci = 0; ci < c; ++ci) {
    const CdfTable& table = tables[static_cast<size_t>(ci)];
    for (std::int64_t i = 0; i < plane; ++i) {
      const int v = static_cast<int>(values[ci * plane + i]);
      info.quantized_ce_bits += ce_bits_of(table.freq(v + r));
      enc.encode(table, v);
    }
  }
  info.symbols += values.numel();
  auto body = enc.finish();
  payload.insert(payload.end(), body.begin(), body.end());
  info.bytes = static_cast<std::int64_t>(payload.size());
  return payload;
}

Tensor factorized_decode(const std::vector<std::uint8_t>& payload,
                         const FactorizedModel& model, int c, int h, int w) {
  ByteReader br(payload.data(), payload.size());
  const int r = static_cast<int>(br.u16());
  const auto body = br.bytes(br.remaining());
  const auto masses = model.masses_all(r);
  Tensor out({c, h, w});
  RangeDecoder dec(body.data(), body.size());
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const CdfTable table = build_cdf(masses[static_cast<size_t>(ci)], r);
    for (std::int64_t i = 0; i < plane; ++i) {
      out[ci * plane + i] = dec.decode(table);
    }
  }
  return out;
}

}  // namespace

// ---- container -------------------------------------------------------------

std::int64_t FrameBitstream::payload_bits() const {
  if (type == FrameRole::kIntra) {
    return 8 * (1 + 4 + static_cast<std::int64_t>(intra_payload.size()));
  }
  std::int64_t bits = 4 * 32;
  for (const auto& s : substreams) bits += 8 * static_cast<std::int64_t>(s.size());
  return bits;
}

std::vector<std::uint8_t> serialize_container(const BitstreamContainer& c) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  put_u8(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(c.header.orig_w));
  put_u32(out, static_cast<std::uint32_t>(c.header.orig_h));
  put_u32(out, static_cast<std::uint32_t>(c.header.padded_w));
  put_u32(out, static_cast<std::uint32_t>(c.header.padded_h));
  put_u16(out, static_cast<std::uint32_t>(c.header.gop_size));
  put_u8(out, static_cast<std::uint8_t>(c.header.entropy_mode));
  put_u8(out, static_cast<std::uint8_t>(c.header.condition_mode));
  put_u8(out, static_cast<std::uint8_t>(c.header.motion_mode));
  put_u16(out, static_cast<std::uint32_t>(c.header.context_dim));
  put_u32(out, static_cast<std::uint32_t>(c.frames.size()));
  for (const auto& f : c.frames) {
    put_u8(out, static_cast<std::uint8_t>(f.type));
    if (f.type == FrameRole::kIntra) {
      put_u8(out, f.intra_id);
      put_u32(out, static_cast<std::uint32_t>(f.intra_payload.size()));
      out.insert(out.end(), f.intra_payload.begin(), f.intra_payload.end());
    } else {
      for (const auto& s : f.substreams) {
        put_u32(out, static_cast<std::uint32_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
      }
    }
  }
  return out;
}

BitstreamContainer parse_container(const std::vector<std::uint8_t>& bytes) {
  ByteReader br(bytes.data(), bytes.size());
  const auto magic = br.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kContainerMagic)) {
    throw DataError("bad container magic");
  }
  const std::uint8_t version = br.u8();
  if (version != kContainerVersion) {
    throw DataError("unsupported container version " + std::to_string(version));
  }
  BitstreamContainer c;
  c.header.orig_w = static_cast<int>(br.u32());
  c.header.orig_h = static_cast<int>(br.u32());
  c.header.padded_w = static_cast<int>(br.u32());
  c.header.padded_h = static_cast<int>(br.u32());
  c.header.gop_size = static_cast<int>(br.u16());
  c.header.entropy_mode = static_cast<EntropyMode>(br.u8());
  c.header.condition_mode = static_cast<ConditionMode>(br.u8());
  c.header.motion_mode = static_cast<MotionMode>(br.u8());
  c.header.context_dim = static_cast<int>(br.u16());
  const std::uint32_t n = br.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    FrameBitstream f;
    f.type = static_cast<FrameRole>(br.u8());
    if (f.type == FrameRole::kIntra) {
      f.intra_id = br.u8();
      const std::uint32_t len = br.u32();
      f.intra_payload = br.bytes(len);
    } else if (f.type == FrameRole::kPredicted) {
      for (auto& s : f.substreams) {
        const std::uint32_t len = br.u32();
        s = br.bytes(len);
      }
    } else {
      throw DataError("unknown frame type in container");
    }
    c.frames.push_back(std::move(f));
  }
  if (br.remaining() != 0) throw DataError("trailing bytes after container payload");
  return c;
}

void write_container(const std::string& path, const BitstreamContainer& c) {
  const auto bytes = serialize_container(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

BitstreamContainer read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open container: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

// ---- intra plugs -------------------------------------------------------------

namespace {

class LosslessDeflateIntra : public IntraCodec {
 public:
  std::uint8_t id() const override { return kIntraLosslessDeflate; }
  std::string name() const override { return "lossless-deflate"; }

  std::vector<std::uint8_t> encode(const Tensor& frame) const override {
    const int h = frame.dim(1), w = frame.dim(2);
    std::vector<std::uint8_t> raw(static_cast<size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          const double v = std::round(frame.at(c, y, x) * 255.0);
          raw[(static_cast<size_t>(y) * w + x) * 3 + c] =
              static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
      }
    }
    uLongf dest_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(dest_len);
    if (compress2(compressed.data(), &dest_len, raw.data(),
                  static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION) != Z_OK) {
      throw DataError("deflate failed");
    }
    compressed.resize(dest_len);
    std::vector<std::uint8_t> payload;
    put_u32(payload, static_cast<std::uint32_t>(w));
    put_u32(payload, static_cast<std::uint32_t>(h));
    payload.insert(payload.end(), compressed.begin(), compressed.end());
    return payload;
  }

  Tensor decode(const std::vector<std::uint8_t>& payload) const override {
    ByteReader br(payload.data(), payload.size());
    const int w = static_cast<int>(br.u32());
    const int h = static_cast<int>(br.u32());
    const auto compressed = br.bytes(br.remaining());
    std::vector<std::uint8_t> raw(static_cast<size_t>(w) * h * 3);
    uLongf dest_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &dest_len, compressed.data(),
                   static_cast<uLong>(compressed.size())) != Z_OK ||
        dest_len != raw.size()) {
      throw DataError("corrupted deflate intra payload");
    }
    Tensor frame({3, h, w});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          frame.at(c, y, x) = raw[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
        }
      }
    }
    return frame;
  }
};

class ToyHyperpriorIntra : public IntraCodec {
 public:
  explicit ToyHyperpriorIntra(const IntraModel* model) : model_(model) {}
  std::uint8_t id() const override { return kIntraToyHyperprior; }
  std::string name() const override { return "toy-hyperprior"; }

  std::vector<std::uint8_t> encode(const Tensor& frame) const override {
    ag::NoGradGuard ng;
    const int w = frame.dim(2), h = frame.dim(1);
    const Tensor padded = pad_to_multiple(frame, kPadMultiple);
    Var y = model_->enc(ag::constant(padded));
    const Tensor y_hat = round_tensor(y->value);
    Var z = model_->hyper_enc(y);
    const Tensor z_hat = round_tensor(z->value);
    SubstreamInfo dummy;
    const auto z_bytes = factorized_encode(z_hat, model_->factorized_z, dummy);
    Var hf = model_->hyper_dec(ag::constant(z_hat));
    auto [mu, sigma] = model_->fusion(hf, nullptr, nullptr);
    const auto y_bytes = laplace_encode_batch(y_hat, mu->value, sigma->value, dummy);
    std::vector<std::uint8_t> payload;
    put_u32(payload, static_cast<std::uint32_t>(w));
    put_u32(payload, static_cast<std::uint32_t>(h));
    put_u32(payload, static_cast<std::uint32_t>(y_bytes.size()));
    payload.insert(payload.end(), y_bytes.begin(), y_bytes.end());
    put_u32(payload, static_cast<std::uint32_t>(z_bytes.size()));
    payload.insert(payload.end(), z_bytes.begin(), z_bytes.end());
    return payload;
  }

  Tensor decode(const std::vector<std::uint8_t>& payload) const override {
    ag::NoGradGuard ng;
    ByteReader br(payload.data(), payload.size());
    const int w = static_cast<int>(br.u32());
    const int h = static_cast<int>(br.u32());
    const int pw = (w + kPadMultiple - 1) / kPadMultiple * kPadMultiple;
    const int ph = (h + kPadMultiple - 1) / kPadMultiple * kPadMultiple;
    const std::uint32_t y_len = br.u32();
    const auto y_bytes = br.bytes(y_len);
    const std::uint32_t z_len = br.u32();
    const auto z_bytes = br.bytes(z_len);
    const Tensor z_hat =
        factorized_decode(z_bytes, model_->factorized_z, kHyperCh, ph / 64, pw / 64);
    Var hf = model_->hyper_dec(ag::constant(z_hat));
    auto [mu, sigma] = model_->fusion(hf, nullptr, nullptr);
    const Tensor y_hat = laplace_decode_batch(y_bytes, mu->value, sigma->value, nullptr);
    Var feat = model_->dec(ag::constant(y_hat));
    Var rec = ag::clamp_ste(model_->head(feat, nullptr), 0.0, 1.0);
    return crop_frame(rec->value, w, h);
  }

 private:
  const IntraModel* model_;
};

}  // namespace

void IntraCodecRegistry::add(std::shared_ptr<IntraCodec> codec) {
  by_id_[codec->id()] = std::move(codec);
}

const IntraCodec& IntraCodecRegistry::get(std::uint8_t id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) {
    throw ConfigError("unsupported intra codec id " + std::to_string(id));
  }
  return *it->second;
}

IntraCodecRegistry IntraCodecRegistry::standard(const VideoCodecModel* model) {
  IntraCodecRegistry reg;
  reg.add(std::make_shared<LosslessDeflateIntra>());
  if (model != nullptr) {
    reg.add(std::make_shared<ToyHyperpriorIntra>(&model->intra));
  }
  return reg;
}

// ---- frame coding -------------------------------------------------------------

namespace {

void check_padded_pair(const Tensor& x, const Tensor& ref) {
  check_shape(x.ndim() == 3 && x.dim(0) == 3 && x.same_shape(ref),
              "encode_frame_p: frames must be [3,H,W] with matching dims");
  check_shape(x.dim(1) % kPadMultiple == 0 && x.dim(2) % kPadMultiple == 0,
              "encode_frame_p: frames must be padded to multiples of " +
                  std::to_string(kPadMultiple));
}

// Condition tensor (context or pixel prediction) plus the temporal-prior
// source, recomputed identically on both ends from (ref, m_hat).
struct ConditionTensors {
  Tensor cond;
  Tensor tp_src;
};

ConditionTensors make_condition(const VideoCodecModel& model, const Tensor& ref,
                                const Tensor* m_hat) {
  ag::NoGradGuard ng;
  ConditionTensors out;
  Var ref_v = ag::constant(ref);
  if (model.config.condition_mode == ConditionMode::kContextFeature) {
    Var mv;
    if (m_hat != nullptr) mv = ag::constant(*m_hat);
    Var ctx = generate_context(ref_v, m_hat != nullptr ? &mv : nullptr, *model.fe,
                               *model.cr, model.config.motion_mode);
    out.cond = ctx->value;
    out.tp_src = out.cond;
  } else {
    Tensor pred = ref;
    if (m_hat != nullptr) {
      pred = ag::warp_bilinear(ref_v, ag::constant(*m_hat))->value;
    }
    out.cond = pred;
    out.tp_src = pred;
  }
  return out;
}

}  // namespace

PFrameResult encode_frame_p(const Tensor& x, const Tensor& ref,
                            const VideoCodecModel& model) {
  check_padded_pair(x, ref);
  ag::NoGradGuard ng;
  PFrameResult res;
  res.bits.type = FrameRole::kPredicted;

  Tensor m_hat;
  if (model.has_motion()) {
    const MotionCodec& mc = *model.motion;
    const Tensor flow = mc.flow(ag::constant(ref), ag::constant(x))->value;
    Var g = mc.encoder(ag::constant(flow));
    const Tensor g_hat = round_tensor(g->value);
    Var s = mc.hyper_enc(g);
    const Tensor s_hat = round_tensor(s->value);
    res.bits.substreams[1] = factorized_encode(s_hat, mc.factorized_s, res.info.s);
    Var hf = mc.hyper_dec(ag::constant(s_hat));
    SequentialFusion sf{&mc.spatial, &mc.fusion, mc.fusion.stage1(hf, nullptr)->value};
    res.bits.substreams[0] = laplace_encode_sequential(g_hat, sf, res.info.g);
    m_hat = mc.decoder(ag::constant(g_hat))->value;
  }

  const ConditionTensors ct =
      make_condition(model, ref, model.has_motion() ? &m_hat : nullptr);

  Var in = assemble_encoder_input(model.config, ag::constant(x), ag::constant(ct.cond));
  Var y = model.enc(in);
  const Tensor y_hat = round_tensor(y->value);
  Var z = model.hyper_enc(y);
  const Tensor z_hat = round_tensor(z->value);
  res.bits.substreams[3] = factorized_encode(z_hat, model.factorized_z, res.info.z);

  Var hyper_feat = model.hyper_dec(ag::constant(z_hat));
  std::optional<Var> tp;
  if (model.config.uses_temporal_prior()) {
    tp = (*model.tpe)(ag::constant(ct.tp_src));
  }
  if (model.config.uses_spatial_prior()) {
    SequentialFusion sf{&*model.spatial, &model.fusion,
                        model.fusion.stage1(hyper_feat, tp ? &*tp : nullptr)->value};
    res.bits.substreams[2] = laplace_encode_sequential(y_hat, sf, res.info.y);
  } else {
    auto [mu, sigma] = model.fusion(hyper_feat, tp ? &*tp : nullptr, nullptr);
    res.bits.substreams[2] =
        laplace_encode_batch(y_hat, mu->value, sigma->value, res.info.y);
  }

  res.reconstruction =
      reconstruct_frame(model, ag::constant(y_hat), ag::constant(ct.cond))->value;
  return res;
}

Tensor decode_frame_p(const FrameBitstream& bits, const Tensor& ref,
                      const VideoCodecModel& model,
                      const std::vector<int>* table_build_order) {
  check_shape(ref.ndim() == 3 && ref.dim(0) == 3, "decode_frame_p: bad reference");
  check_shape(ref.dim(1) % kPadMultiple == 0 && ref.dim(2) % kPadMultiple == 0,
              "decode_frame_p: reference must be padded");
  if (bits.type != FrameRole::kPredicted) {
    throw ArgumentError("decode_frame_p: not a P frame record");
  }
  if (table_build_order != nullptr && model.config.uses_spatial_prior()) {
    throw ConfigError(
        "table build order can only be permuted in the parallel entropy modes");
  }
  ag::NoGradGuard ng;
  const int ph = ref.dim(1), pw = ref.dim(2);

  Tensor m_hat;
  if (model.has_motion()) {
    const MotionCodec& mc = *model.motion;
    Tensor s_hat, g_hat;
    try {
      s_hat = factorized_decode(bits.substreams[1], mc.factorized_s, kMvLatentCh,
                                ph / 64, pw / 64);
    } catch (const DataError& e) {
      throw DataError("substream 1 (mv hyper): " + std::string(e.what()));
    }
    Var hf = mc.hyper_dec(ag::constant(s_hat));
    SequentialFusion sf{&mc.spatial, &mc.fusion, mc.fusion.stage1(hf, nullptr)->value};
    try {
      g_hat = laplace_decode_sequential(bits.substreams[0], sf, kMvLatentCh,
                                        ph / 16, pw / 16);
    } catch (const DataError& e) {
      throw DataError("substream 0 (mv latents): " + std::string(e.what()));
    }
    m_hat = mc.decoder(ag::constant(g_hat))->value;
  }

  const ConditionTensors ct =
      make_condition(model, ref, model.has_motion() ? &m_hat : nullptr);

  Tensor z_hat;
  try {
    z_hat = factorized_decode(bits.substreams[3], model.factorized_z, kHyperCh,
                              ph / 64, pw / 64);
  } catch (const DataError& e) {
    throw DataError("substream 3 (hyper latents): " + std::string(e.what()));
  }
  Var hyper_feat = model.hyper_dec(ag::constant(z_hat));
  std::optional<Var> tp;
  if (model.config.uses_temporal_prior()) {
    tp = (*model.tpe)(ag::constant(ct.tp_src));
  }
  Tensor y_hat;
  try {
    if (model.config.uses_spatial_prior()) {
      SequentialFusion sf{&*model.spatial, &model.fusion,
                          model.fusion.stage1(hyper_feat, tp ? &*tp : nullptr)->value};
      y_hat = laplace_decode_sequential(bits.substreams[2], sf, kLatentCh, ph / 16,
                                        pw / 16);
    } else {
      auto [mu, sigma] = model.fusion(hyper_feat, tp ? &*tp : nullptr, nullptr);
      y_hat = laplace_decode_batch(bits.substreams[2], mu->value, sigma->value,
                                   table_build_order);
    }
  } catch (const DataError& e) {
    throw DataError("substream 2 (frame latents): " + std::string(e.what()));
  }

  return reconstruct_frame(model, ag::constant(y_hat), ag::constant(ct.cond))->value;
}

// ---- sequence coding -----------------------------------------------------------

EncodedSequence encode_sequence(const FrameSequence& seq, const GopStructure& gops,
                                const VideoCodecModel& model,
                                const IntraCodecRegistry& registry,
                                std::uint8_t intra_id) {
  if (seq.frames.empty()) throw ArgumentError("encode_sequence: empty sequence");
  if (gops.frame_roles.size() != seq.frames.size()) {
    throw ArgumentError("encode_sequence: GOP roles do not cover the sequence");
  }
  const IntraCodec& intra = registry.get(intra_id);

  EncodedSequence out;
  const int w = seq.width(), h = seq.height();
  const Tensor padded0 = pad_to_multiple(seq.frames[0], kPadMultiple);
  out.container.header.orig_w = w;
  out.container.header.orig_h = h;
  out.container.header.padded_w = padded0.dim(2);
  out.container.header.padded_h = padded0.dim(1);
  out.container.header.gop_size = gops.gop_size;
  out.container.header.entropy_mode = model.config.entropy_mode;
  out.container.header.condition_mode = model.config.condition_mode;
  out.container.header.motion_mode = model.config.motion_mode;
  out.container.header.context_dim = model.config.context_dim;

  Tensor ref;  // padded previous decoded frame
  const double pixels = static_cast<double>(w) * h;
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    SequenceRateRecord rec;
    rec.frame = static_cast<int>(i);
    rec.type = gops.frame_roles[i];
    if (gops.frame_roles[i] == FrameRole::kIntra) {
      FrameBitstream fb;
      fb.type = FrameRole::kIntra;
      fb.intra_id = intra_id;
      fb.intra_payload = intra.encode(seq.frames[i]);
      const Tensor decoded = intra.decode(fb.intra_payload);
      ref = pad_to_multiple(decoded, kPadMultiple);
      out.reconstructions.push_back(decoded);
      rec.bpp = static_cast<double>(fb.payload_bits()) / pixels;
      out.container.frames.push_back(std::move(fb));
    } else {
      const Tensor padded_x = pad_to_multiple(seq.frames[i], kPadMultiple);
      PFrameResult r = encode_frame_p(padded_x, ref, model);
      ref = r.reconstruction;
      out.reconstructions.push_back(crop_frame(r.reconstruction, w, h));
      rec.bits_g = 8 * r.info.g.bytes;
      rec.bits_s = 8 * r.info.s.bytes;
      rec.bits_y = 8 * r.info.y.bytes;
      rec.bits_z = 8 * r.info.z.bytes;
      rec.bpp = static_cast<double>(r.bits.payload_bits()) / pixels;
      out.container.frames.push_back(std::move(r.bits));
    }
    out.rates.push_back(rec);
  }
  return out;
}

FrameSequence decode_sequence(const BitstreamContainer& container,
                              const VideoCodecModel& model,
                              const IntraCodecRegistry& registry) {
  FrameSequence out;
  const int w = container.header.orig_w, h = container.header.orig_h;
  Tensor ref;
  for (size_t i = 0; i < container.frames.size(); ++i) {
    const FrameBitstream& fb = container.frames[i];
    if (fb.type == FrameRole::kIntra) {
      const Tensor decoded = registry.get(fb.intra_id).decode(fb.intra_payload);
      ref = pad_to_multiple(decoded, kPadMultiple);
      out.frames.push_back(decoded);
    } else {
      if (ref.numel() == 0) throw DataError("P frame before any intra frame");
      const Tensor recon = decode_frame_p(fb, ref, model);
      ref = recon;
      out.frames.push_back(crop_frame(recon, w, h));
    }
  }
  return out;
}

void write_rate_report(const std::string& path,
                       const std::vector<SequenceRateRecord>& rates) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  for (const auto& r : rates) {
    out << "{\"frame\":" << r.frame << ",\"type\":\""
        << (r.type == FrameRole::kIntra ? "I" : "P") << "\",\"bits_g\":" << r.bits_g
        << ",\"bits_s\":" << r.bits_s << ",\"bits_y\":" << r.bits_y
        << ",\"bits_z\":" << r.bits_z << ",\"bpp\":" << r.bpp << "}\n";
  }
}

}  // namespace cvc
