#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ftfd/tensor.hpp"

namespace ftfd::nn {

using ftfd::to_string;

enum class Attention { none, visual_only, avam };
enum class FusionStrategy { cmf, concat, sum, cmf_kqv, cmf_last, cmf_last3 };

struct Modalities {
  bool visual = true;
  bool audio = true;
  bool motion = true;

  std::size_t count() const { return std::size_t(visual) + std::size_t(audio) + std::size_t(motion); }
  bool operator==(const Modalities&) const = default;
};

struct EncoderConfig {
  std::vector<std::size_t> widths{64, 128, 256, 512, 512};
  std::vector<std::size_t> convs{2, 2, 3, 3, 3};

  std::size_t blocks() const { return widths.size(); }
};

struct ModelConfig {
  std::size_t frames = 4;        // T
  std::size_t input_size = 112;  // square face crop
  std::size_t channels = 3;
  std::size_t mfcc_coeffs = 13;
  EncoderConfig encoder;
  FusionStrategy fusion = FusionStrategy::cmf;
  Attention attention = Attention::avam;
  Modalities modalities;
  double dropout = 0.5;
  std::vector<std::size_t> classifier{512, 128};
  bool share_siamese = false;

  /// MFCC frames per window: T video frames at 25 fps, 10 ms hop.
  std::size_t mfcc_steps() const { return frames * 4; }

  /// Number of trailing encoder blocks the fusion strategy consumes.
  std::size_t consumed_blocks() const {
    switch (fusion) {
      case FusionStrategy::cmf_last: return 1;
      case FusionStrategy::cmf_last3: return 3;
      default: return 2;
    }
  }

  bool cmf_family() const { return fusion != FusionStrategy::concat && fusion != FusionStrategy::sum; }

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
    if (frames == 0) fail("frames (T) must be positive");
    if (channels == 0) fail("channels must be positive");
    if (modalities.count() == 0) fail("at least one modality must be enabled");
    if (attention == Attention::avam && !modalities.audio) fail("avam attention requires the audio modality");
    if (attention != Attention::none && !modalities.visual) fail("attention acts on the visual stream, which is disabled");
    if (encoder.widths.empty() || encoder.widths.size() != encoder.convs.size()) fail("widths and convs must be non-empty and equal length");
    for (auto c : encoder.convs)
      if (c == 0) fail("every block needs at least one conv");
    for (auto w : encoder.widths)
      if (w == 0) fail("block widths must be positive");
    if (consumed_blocks() > encoder.blocks()) {
      fail("fusion strategy consumes " + std::to_string(consumed_blocks()) + " blocks but the encoder has " +
           std::to_string(encoder.blocks()));
    }
    if ((input_size >> encoder.blocks()) == 0) fail("input size " + std::to_string(input_size) + " too small for the block count");
    if (dropout < 0 || dropout >= 1) fail("dropout must be in [0, 1)");
    if (mfcc_coeffs == 0) fail("MFCC coefficient count must be positive");
  }
};

inline const char* to_string(Attention a) {
  switch (a) {
    case Attention::none: return "none";
    case Attention::visual_only: return "visual";
    case Attention::avam: return "avam";
  }
  return "?";
}

inline const char* to_string(FusionStrategy f) {
  switch (f) {
    case FusionStrategy::cmf: return "cmf";
    case FusionStrategy::concat: return "concat";
    case FusionStrategy::sum: return "sum";
    case FusionStrategy::cmf_kqv: return "cmf-kqv";
    case FusionStrategy::cmf_last: return "cmf-last";
    case FusionStrategy::cmf_last3: return "cmf-last3";
  }
  return "?";
}

inline std::string to_string(const Modalities& m) {
  std::string s;
  if (m.visual) s += 'v';
  if (m.audio) s += 'a';
  if (m.motion) s += 'm';
  return s;
}

inline Attention parse_attention(const std::string& s) {
  if (s == "none") return Attention::none;
  if (s == "visual" || s == "visual_only") return Attention::visual_only;
  if (s == "avam") return Attention::avam;
  throw std::invalid_argument("unknown attention variant '" + s + "' (expected none, visual, avam)");
}

inline FusionStrategy parse_fusion(const std::string& s) {
  for (auto f : {FusionStrategy::cmf, FusionStrategy::concat, FusionStrategy::sum, FusionStrategy::cmf_kqv, FusionStrategy::cmf_last,
                 FusionStrategy::cmf_last3}) {
    std::string name = to_string(f), alt = name;
    for (auto& c : alt)
      if (c == '-') c = '_';
    if (s == name || s == alt) return f;
  }
  throw std::invalid_argument("unknown fusion strategy '" + s + "' (expected cmf, concat, sum, cmf-kqv, cmf-last, cmf-last3)");
}

inline Modalities parse_modalities(const std::string& s) {
  Modalities m{false, false, false};
  for (char c : s) {
    bool* slot = c == 'v' ? &m.visual : c == 'a' ? &m.audio : c == 'm' ? &m.motion : nullptr;
    if (!slot) throw std::invalid_argument("unknown modality '" + std::string(1, c) + "' in '" + s + "' (use v, a, m)");
    if (*slot) throw std::invalid_argument("modality '" + std::string(1, c) + "' repeated in '" + s + "'");
    *slot = true;
  }
  if (m.count() == 0) throw std::invalid_argument("empty modality set");
  return m;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"frames", c.frames},
          {"input_size", c.input_size},
          {"channels", c.channels},
          {"mfcc_coeffs", c.mfcc_coeffs},
          {"widths", c.encoder.widths},
          {"convs", c.encoder.convs},
          {"fusion", to_string(c.fusion)},
          {"attention", to_string(c.attention)},
          {"modalities", to_string(c.modalities)},
          {"dropout", c.dropout},
          {"classifier", c.classifier},
          {"share_siamese", c.share_siamese}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.frames = j.at("frames").get<std::size_t>();
  c.input_size = j.at("input_size").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.mfcc_coeffs = j.at("mfcc_coeffs").get<std::size_t>();
  c.encoder.widths = j.at("widths").get<std::vector<std::size_t>>();
  c.encoder.convs = j.at("convs").get<std::vector<std::size_t>>();
  c.fusion = parse_fusion(j.at("fusion").get<std::string>());
  c.attention = parse_attention(j.at("attention").get<std::string>());
  c.modalities = parse_modalities(j.at("modalities").get<std::string>());
  c.dropout = j.at("dropout").get<double>();
  c.classifier = j.at("classifier").get<std::vector<std::size_t>>();
  c.share_siamese = j.at("share_siamese").get<bool>();
  c.validate();
  return c;
}

}  // namespace ftfd::nn
