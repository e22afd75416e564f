#pragma once

#include <array>
#include <string>

#include <nlohmann/json.hpp>

#include "motionfuse/core/error.hpp"

namespace mfuse::fusion {

using json = nlohmann::json;

// How the appearance and motion streams exchange information.
//   single:          appearance (or motion) stream alone
//   decoder:         decoder cross- and self-attention over both streams' tokens and queries
//   encoder:         deformable encoder over the x-concatenated feature maps
//   encoder_decoder: both of the above
//   mbt:             streams talk only through a small shared bottleneck query set
enum class Mechanism { kSingle, kDecoder, kEncoder, kEncoderDecoder, kMbt };

inline std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kSingle: return "single";
    case Mechanism::kDecoder: return "decoder";
    case Mechanism::kEncoder: return "encoder";
    case Mechanism::kEncoderDecoder: return "encoder_decoder";
    case Mechanism::kMbt: return "mbt";
  }
  return "single";
}

inline Mechanism parse_mechanism(const std::string& s) {
  if (s == "single") return Mechanism::kSingle;
  if (s == "decoder" || s == "D") return Mechanism::kDecoder;
  if (s == "encoder" || s == "E") return Mechanism::kEncoder;
  if (s == "encoder_decoder" || s == "E+D" || s == "ED") return Mechanism::kEncoderDecoder;
  if (s == "mbt" || s == "mbt_decoder") return Mechanism::kMbt;
  fail(ErrorCode::kInvalidSpec, "unknown fusion mechanism '", s, "'");
}

inline bool fuses_encoder(Mechanism m) {
  return m == Mechanism::kEncoder || m == Mechanism::kEncoderDecoder;
}
inline bool fuses_decoder(Mechanism m) {
  return m == Mechanism::kDecoder || m == Mechanism::kEncoderDecoder;
}

inline constexpr int kNumLevels = 3;  // strides 8, 16, 32

enum class Modality { kAppearance, kMotion };

inline std::string to_string(Modality m) { return m == Modality::kAppearance ? "rgb" : "motion"; }

inline Modality parse_modality(const std::string& s) {
  if (s == "rgb" || s == "appearance") return Modality::kAppearance;
  if (s == "motion" || s == "of" || s == "sf" || s == "emb") return Modality::kMotion;
  fail(ErrorCode::kInvalidSpec, "unknown modality '", s, "'");
}

struct FusionConfig {
  Mechanism mechanism = Mechanism::kDecoder;
  // Which input a single-mechanism model reads.
  Modality single_stream = Modality::kAppearance;
  int n_bottleneck = 8;
  // false: a learned per-modality vector is added on top of the shared sine
  // encoding; true: both streams see the identical positional encoding.
  bool share_positional = false;
  int d_model = 128;
  int n_heads = 4;
  int n_enc_layers = 6;
  int n_dec_layers = 9;
  int n_queries = 100;
  int n_points = 4;
  int ffn_dim = 512;
  int mask_mlp_layers = 3;
  std::array<int, 4> backbone_widths{32, 64, 128, 256};
  int rgb_channels = 3;
  int motion_channels = 2;
  int input_height = 96;
  int input_width = 96;

  bool two_stream() const { return mechanism != Mechanism::kSingle; }
  int channels_of(Modality m) const { return m == Modality::kAppearance ? rgb_channels : motion_channels; }

  void validate() const {
    check(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, ErrorCode::kInvalidSpec,
          "d_model ", d_model, " must be a positive multiple of n_heads ", n_heads);
    check(d_model % 4 == 0, ErrorCode::kInvalidSpec, "d_model must be divisible by 4 for the sine encoding");
    check(n_enc_layers >= 0 && n_dec_layers >= 1, ErrorCode::kInvalidSpec, "layer counts");
    check(n_queries >= 1 && n_points >= 1 && ffn_dim >= 1, ErrorCode::kInvalidSpec, "query/point/ffn sizes");
    check(mask_mlp_layers >= 1, ErrorCode::kInvalidSpec, "mask_mlp_layers must be >= 1");
    for (int w : backbone_widths) check(w > 0, ErrorCode::kInvalidSpec, "backbone widths must be positive");
    check(rgb_channels > 0 && motion_channels > 0, ErrorCode::kInvalidSpec, "input channels must be positive");
    check(input_height >= 32 && input_width >= 32, ErrorCode::kInvalidSpec, "input must be at least 32x32");
    if (mechanism == Mechanism::kMbt)
      check(n_bottleneck >= 1, ErrorCode::kInvalidSpec, "mbt needs n_bottleneck >= 1");
  }

  // Small widths and depths that train in minutes on one CPU core.
  static FusionConfig desk() {
    FusionConfig c;
    c.d_model = 64;
    c.n_heads = 4;
    c.n_enc_layers = 2;
    c.n_dec_layers = 3;
    c.n_queries = 16;
    c.ffn_dim = 128;
    c.backbone_widths = {16, 32, 64, 128};
    return c;
  }
};

inline json to_json(const FusionConfig& c) {
  return {{"mechanism", to_string(c.mechanism)},
          {"single_stream", to_string(c.single_stream)},
          {"n_bottleneck", c.n_bottleneck},
          {"share_positional", c.share_positional},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"n_enc_layers", c.n_enc_layers},
          {"n_dec_layers", c.n_dec_layers},
          {"n_queries", c.n_queries},
          {"n_points", c.n_points},
          {"ffn_dim", c.ffn_dim},
          {"mask_mlp_layers", c.mask_mlp_layers},
          {"backbone_widths", c.backbone_widths},
          {"rgb_channels", c.rgb_channels},
          {"motion_channels", c.motion_channels},
          {"input_height", c.input_height},
          {"input_width", c.input_width}};
}

inline FusionConfig fusion_config_from_json(const json& j, FusionConfig c = {}) {
  check(j.is_object(), ErrorCode::kInvalidSpec, "fusion config must be a JSON object");
  for (auto& [k, v] : j.items()) {
    try {
      if (k == "mechanism") c.mechanism = parse_mechanism(v.get<std::string>());
      else if (k == "single_stream") c.single_stream = parse_modality(v.get<std::string>());
      else if (k == "n_bottleneck") c.n_bottleneck = v;
      else if (k == "share_positional") c.share_positional = v;
      else if (k == "d_model") c.d_model = v;
      else if (k == "n_heads") c.n_heads = v;
      else if (k == "n_enc_layers") c.n_enc_layers = v;
      else if (k == "n_dec_layers") c.n_dec_layers = v;
      else if (k == "n_queries") c.n_queries = v;
      else if (k == "n_points") c.n_points = v;
      else if (k == "ffn_dim") c.ffn_dim = v;
      else if (k == "mask_mlp_layers") c.mask_mlp_layers = v;
      else if (k == "backbone_widths") c.backbone_widths = v.get<std::array<int, 4>>();
      else if (k == "rgb_channels") c.rgb_channels = v;
      else if (k == "motion_channels") c.motion_channels = v;
      else if (k == "input_height") c.input_height = v;
      else if (k == "input_width") c.input_width = v;
      else fail(ErrorCode::kInvalidSpec, "unknown fusion config key '", k, "'");
    } catch (const json::exception& e) {
      fail(ErrorCode::kInvalidSpec, "fusion config key '", k, "': ", e.what());
    }
  }
  c.validate();
  return c;
}

}  // namespace mfuse::fusion
