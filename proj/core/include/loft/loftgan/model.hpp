#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>

#include "loft/nn/network.hpp"
#include "loft/sim.hpp"

namespace loft::gan {

/// Encoder F (speckle -> phase), generator H (phase -> speckle) and a PatchGAN discriminator.
///
/// Encoder: conv 7x7/3 (16), conv 5x5/2 (32), conv 3x3/1 (48), all ReLU with "same"
/// padding; dense 512 ReLU; dropout 0.5; dense phase_side^2, sigmoid.
/// Generator mirrors it: dense 512, dense to the encoder's last feature map, then for each
/// encoder conv in reverse a nearest-neighbour resize back to that conv's input extent and
/// a stride-1 conv of the same kernel size; sigmoid output.
/// Discriminator: the three encoder convs (features, also the content-loss tap), then
/// 3x3 convs 48 -> 16 -> 4 -> 1 with a sigmoid patch output.
struct LoftganModel {
  std::size_t speckle_side = 0;
  std::size_t phase_side = 0;
  std::uint64_t seed = 0;

  nn::Network enc;
  nn::Network gen;
  nn::Network dis_features;
  nn::Network dis_head;

  nn::ParamStore enc_params;
  nn::ParamStore gen_params;
  nn::ParamStore dis_params;

  std::size_t phase_size() const noexcept { return phase_side * phase_side; }
  std::size_t speckle_size() const noexcept { return speckle_side * speckle_side; }
  /// Side of the square discriminator patch grid.
  std::size_t patch_side() const { return dis_head.output_shape().at(0); }
  /// Per-sample shape of the content-loss features.
  const nn::Shape& tap_shape() const { return dis_features.output_shape(); }
};

inline constexpr std::size_t kMinSide = 8;

/// Deterministic for a given seed. Throws std::invalid_argument if either side is below kMinSide.
LoftganModel build_model(std::size_t speckle_side, std::size_t phase_side, std::uint64_t seed);

void save_model(const LoftganModel& model, const std::filesystem::path& path);
LoftganModel load_model(const std::filesystem::path& path);

bool same_parameters(const LoftganModel& a, const LoftganModel& b);

/// [B, S, S, 1] from speckles of side S.
nn::Tensor speckle_batch(std::span<const SpecklePattern> speckles, std::size_t side);
/// [B, P] from phases of length P.
nn::Tensor phase_batch(std::span<const PhasePattern> phases, std::size_t length);

}  // namespace loft::gan
