#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "loft/error.hpp"
#include "loft/io.hpp"
#include "loft/loftgan/losses.hpp"
#include "loft/loftgan/model.hpp"
#include "loft/nn/optim.hpp"

namespace loft::gan {

/// x: phases [B, P^2]; y: speckles [B, S, S, 1].
struct Batch {
  nn::Tensor phases;
  nn::Tensor speckles;
  std::size_t size() const { return phases.rank() ? phases.dim(0) : 0; }
};

Batch make_batch(const LoftganModel& model, const io::PairDataset& ds, std::span<const std::size_t> indices);

struct StepReport {
  double dev = 0.0, dis = 0.0, content = 0.0, style = 0.0;
};

/// Ungated gradients of each loss with respect to each sub-network's parameters,
/// from one forward pass. Terms that cannot depend on a sub-network are absent
/// (L_dev and L_dis only involve Enc).
struct TermGradients {
  StepReport losses;
  nn::Gradients dev_enc, dis_enc;
  nn::Gradients content_enc, content_gen, content_dis;
  nn::Gradients style_enc, style_gen, style_dis;
};

/// Descent directions for the three parameter sets. An empty map means "not updated".
struct StepGradients {
  StepReport losses;
  nn::Gradients enc, gen, dis;
};

/// `rng` drives encoder dropout; the same state gives the same masks in both functions.
TermGradients compute_term_gradients(const LoftganModel& model, const Batch& batch, Rng& rng);

/// Combines per-term gradients under the routing rules:
///   enc <- w.dev * dev + w.dis * dis + w.con * content
///   gen <- w.con_gen * content + style      (descends its fake terms of L_style)
///   dis <- -style                           (ascends L_style; content is dropped)
/// The style path into Enc is dropped. enc_only leaves gen and dis empty.
StepGradients gate(const TermGradients& terms, const LossWeights& weights, AblationMode mode);

/// Same result as gate(compute_term_gradients(...)) with fewer backward passes.
StepGradients compute_step_gradients(const LoftganModel& model, const Batch& batch, const LossWeights& weights,
                                     AblationMode mode, Rng& rng);

struct Optimizers {
  explicit Optimizers(const nn::OptimizerConfig& cfg = {}) : enc(cfg), gen(cfg), dis(cfg) {}
  nn::Optimizer enc, gen, dis;
};

enum UpdateMask : unsigned { kUpdateEnc = 1U, kUpdateGen = 2U, kUpdateDis = 4U, kUpdateAll = 7U };

/// Steps each selected, non-empty set. Throws NumericFault with parameter norms if a gradient is not finite.
void apply_gradients(LoftganModel& model, Optimizers& opt, const StepGradients& grads, unsigned mask = kUpdateAll);

/// One simultaneous update of Enc, Gen and Dis from a single forward pass.
StepReport train_step(LoftganModel& model, Optimizers& opt, const Batch& batch, const LossWeights& weights,
                      AblationMode mode, Rng& rng, unsigned mask = kUpdateAll);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch = 32;
  nn::OptimizerConfig optimizer;
  AblationMode mode = AblationMode::full;
  LossWeights weights;
  std::uint64_t seed = 0;
  double val_split = 0.1;
  /// Stop after this many epochs without a new best validation L_dev (0 disables).
  std::size_t patience = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double dev = 0.0, dis = 0.0, content = 0.0, style = 0.0;
  double val_dev = 0.0;
};

struct TrainResult {
  LoftganModel model;  ///< parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  ///< 0 when no epoch ran
  bool stopped_early = false;
};

class DivergenceError : public NumericFault {
 public:
  using NumericFault::NumericFault;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded shuffling, per-epoch validation L_dev on a held-out split, best-validation retention.
/// Throws DivergenceError when L_dev exceeds 10x its first-epoch value for 3 epochs in a row.
TrainResult train(LoftganModel model, const io::PairDataset& ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Mean L_dev of the encoder in eval mode over `indices`.
double evaluate_dev(const LoftganModel& model, const io::PairDataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch = 64);

/// Header "epoch,L_dev,L_dis,L_content,L_style,val_L_dev".
void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

/// Encoder output for `target` with dropout off, optionally snapped to `levels` grey levels.
PhasePattern predict_phase(const LoftganModel& model, const SpecklePattern& target,
                           std::optional<int> levels = std::nullopt);

}  // namespace loft::gan
