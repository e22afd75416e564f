#pragma once

#include <cstdint>

#include "motionfuse/core/attention_ops.hpp"
#include "motionfuse/fusion/config.hpp"
#include "motionfuse/fusion/decoder.hpp"
#include "motionfuse/fusion/encoder.hpp"

namespace mfuse::fusion {

// Query/key pairs one forward pass evaluates, by site, in closed form. The
// same quantities are counted at run time by the attention kernels.
inline AttentionCounter expected_pairs(const FusionConfig& c, const LevelLayout& lay) {
  AttentionCounter out;
  const std::int64_t nq = c.n_queries, nb = c.n_bottleneck, lp = static_cast<std::int64_t>(kNumLevels) * c.n_points;
  const std::int64_t streams = c.two_stream() ? 2 : 1;
  const Mechanism m = c.mechanism;
  out.pairs[0] = streams * c.n_enc_layers * lay.total * lp;
  for (int l = 0; l < c.n_dec_layers; ++l) {
    const std::int64_t t = lay.count(decoder_level(l));
    std::int64_t cross = 0, self = 0;
    if (!c.two_stream()) {
      cross = nq * t;
      self = nq * nq;
    } else if (fuses_decoder(m)) {
      cross = 2 * nq * 2 * t;
      self = (2 * nq) * (2 * nq);
    } else if (m == Mechanism::kMbt) {
      cross = 2 * nq * (t + nb) + nb * 2 * t;
      self = 2 * nq * (nq + nb) + nb * nb;
    } else {
      cross = 2 * nq * t;
      self = 2 * nq * nq;
    }
    out.pairs[1] += cross;
    out.pairs[2] += self;
  }
  return out;
}

// Cross-modal decoder cost of one layer with t tokens per stream.
inline std::int64_t naive_decoder_cross_pairs(std::int64_t nq, std::int64_t t_rgb, std::int64_t t_motion) {
  return 2 * nq * (t_rgb + t_motion);
}
inline std::int64_t mbt_decoder_cross_pairs(std::int64_t nq, std::int64_t nb, std::int64_t t_rgb,
                                            std::int64_t t_motion) {
  return nq * (t_rgb + nb) + nq * (t_motion + nb) + nb * (t_rgb + t_motion);
}

}  // namespace mfuse::fusion
