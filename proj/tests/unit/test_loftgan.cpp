#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "loft/loftgan/model.hpp"
#include "loft/loftgan/trainer.hpp"

using namespace loft;
using namespace loft::gan;
using nn::Gradients;
using nn::ParamStore;

namespace {

struct Fixture {
  LoftganModel model = build_model(16, 8, 7);
  io::PairDataset ds = io::gen_dataset(gen_tm(64, 256, 3), 40, 5);
  Batch batch;

  Fixture() {
    std::vector<std::size_t> idx(6);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    batch = make_batch(model, ds, idx);
  }
};

bool zero_map(const Gradients& g) {
  for (const auto& [_, t] : g) {
    for (double v : t.data()) {
      if (v != 0.0) return false;
    }
  }
  return true;
}

double max_abs_diff(const Gradients& a, const Gradients& b) {
  EXPECT_EQ(a.size(), b.size());
  double worst = 0.0;
  for (const auto& [name, t] : a) {
    const auto it = b.find(name);
    if (it == b.end()) return INFINITY;
    for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(t[i] - it->second[i]));
  }
  return worst;
}

Gradients combine(std::initializer_list<std::pair<const Gradients*, double>> terms) {
  Gradients out;
  for (auto [g, w] : terms) nn::accumulate(out, *g, w);
  return out;
}

enum class Net { enc, gen, dis };

ParamStore& store(LoftganModel& m, Net n) {
  return n == Net::enc ? m.enc_params : n == Net::gen ? m.gen_params : m.dis_params;
}

}  // namespace

TEST(Model, OutputSizes) {
  const auto large = build_model(64, 32, 1);
  EXPECT_EQ(large.enc.output_shape(), (nn::Shape{1024}));
  EXPECT_EQ(large.gen.output_shape(), (nn::Shape{64, 64, 1}));
  const auto desk = build_model(16, 8, 1);
  EXPECT_EQ(desk.enc.output_shape(), (nn::Shape{64}));
  EXPECT_EQ(desk.tap_shape(), (nn::Shape{3, 3, 48}));
  EXPECT_EQ(desk.patch_side(), 3u);
}

TEST(Model, DeterministicPerSeed) {
  EXPECT_TRUE(same_parameters(build_model(16, 8, 4), build_model(16, 8, 4)));
  EXPECT_FALSE(same_parameters(build_model(16, 8, 4), build_model(16, 8, 5)));
}

TEST(Model, TooSmallThrowsNamingMinimum) {
  try {
    build_model(7, 8, 1);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("8"), std::string::npos);
  }
  EXPECT_THROW(build_model(16, 4, 1), std::invalid_argument);
}

TEST(Model, CheckpointRoundTrip) {
  const auto m = build_model(16, 8, 9);
  const auto path = std::filesystem::temp_directory_path() / "loft_model_rt.loft";
  save_model(m, path);
  const auto back = load_model(path);
  EXPECT_TRUE(same_parameters(m, back));
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.phase_side, 8u);
}

TEST(Predict, UntrainedGivesValidPhase) {
  const auto m = build_model(16, 8, 2);
  const auto ds = io::gen_dataset(gen_tm(64, 256, 1), 3, 2);
  for (const auto& s : ds.speckles) {
    const auto p = predict_phase(m, s);
    ASSERT_EQ(p.size(), 64u);
    for (double v : p.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const auto q = predict_phase(m, s, 32);
    for (double v : q.values()) EXPECT_EQ(std::round(v * 32), v * 32);
  }
  EXPECT_THROW(predict_phase(m, SpecklePattern(std::vector<double>(100, 0.5), true)), ShapeError);
  EXPECT_THROW(predict_phase(m, SpecklePattern(std::vector<double>(256, 2.0), false)), RangeError);
}

TEST(TermGradients, MatchFiniteDifferences) {
  Fixture f;
  const Rng state(21);
  Rng r = state;
  const TermGradients t = compute_term_gradients(f.model, f.batch, r);

  struct Case {
    const Gradients* grad;
    Net net;
    double StepReport::*loss;
  };
  const std::vector<Case> cases{
      {&t.dev_enc, Net::enc, &StepReport::dev},         {&t.dis_enc, Net::enc, &StepReport::dis},
      {&t.content_enc, Net::enc, &StepReport::content}, {&t.content_gen, Net::gen, &StepReport::content},
      {&t.content_dis, Net::dis, &StepReport::content}, {&t.style_enc, Net::enc, &StepReport::style},
      {&t.style_gen, Net::gen, &StepReport::style},     {&t.style_dis, Net::dis, &StepReport::style},
  };
  const double h = 1e-6;
  for (const auto& c : cases) {
    int checked = 0;
    for (const auto& [name, g] : *c.grad) {
      if (checked == 4) break;
      const std::size_t i = static_cast<std::size_t>(
          std::max_element(g.data().begin(), g.data().end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) -
          g.data().begin());
      if (std::abs(g[i]) < 1e-8) continue;
      LoftganModel m = f.model;
      const double v = store(m, c.net).value(name)[i];
      store(m, c.net).value(name)[i] = v + h;
      Rng rp = state;
      const double up = compute_term_gradients(m, f.batch, rp).losses.*c.loss;
      store(m, c.net).value(name)[i] = v - h;
      Rng rm = state;
      const double down = compute_term_gradients(m, f.batch, rm).losses.*c.loss;
      const double numeric = (up - down) / (2 * h);
      EXPECT_NEAR(g[i], numeric, 1e-4 * std::abs(g[i]) + 1e-9) << name;
      ++checked;
    }
    EXPECT_GT(checked, 0);
  }
}

TEST(Gating, RoutingRules) {
  Fixture f;
  Rng r(3);
  const TermGradients t = compute_term_gradients(f.model, f.batch, r);
  const LossWeights w;
  const StepGradients g = gate(t, w, AblationMode::full);

  // Content does reach the discriminator parameters before gating.
  EXPECT_FALSE(zero_map(t.content_dis));
  EXPECT_FALSE(zero_map(t.style_enc));
  EXPECT_EQ(max_abs_diff(g.dis, combine({{&t.style_dis, -1.0}})), 0.0);
  EXPECT_EQ(max_abs_diff(g.enc, combine({{&t.dev_enc, w.dev}, {&t.dis_enc, w.dis}, {&t.content_enc, w.con}})), 0.0);
  EXPECT_EQ(max_abs_diff(g.gen, combine({{&t.content_gen, w.con_gen}, {&t.style_gen, 1.0}})), 0.0);

  TermGradients poisoned = t;
  for (auto& [_, v] : poisoned.style_enc) v.fill(1e6);
  for (auto& [_, v] : poisoned.content_dis) v.fill(1e6);
  const StepGradients gp = gate(poisoned, w, AblationMode::full);
  EXPECT_EQ(max_abs_diff(gp.enc, g.enc), 0.0);
  EXPECT_EQ(max_abs_diff(gp.dis, g.dis), 0.0);
}

TEST(Gating, FusedPathEqualsGatedTerms) {
  Fixture f;
  for (AblationMode mode : {AblationMode::full, AblationMode::enc_only, AblationMode::no_dis_loss,
                            AblationMode::no_content_loss}) {
    Rng a(8), b(8);
    const StepGradients ref = gate(compute_term_gradients(f.model, f.batch, a), LossWeights{}, mode);
    const StepGradients got = compute_step_gradients(f.model, f.batch, LossWeights{}, mode, b);
    EXPECT_LT(max_abs_diff(got.enc, ref.enc), 1e-10) << to_string(mode);
    if (mode == AblationMode::enc_only) {
      EXPECT_TRUE(got.gen.empty());
      EXPECT_TRUE(got.dis.empty());
    } else {
      EXPECT_LT(max_abs_diff(got.gen, ref.gen), 1e-10) << to_string(mode);
      EXPECT_LT(max_abs_diff(got.dis, ref.dis), 1e-10) << to_string(mode);
    }
  }
}

TEST(Gating, NoDisModeDropsDistributionTerm) {
  Fixture f;
  Rng r(4);
  const TermGradients t = compute_term_gradients(f.model, f.batch, r);
  LossWeights w;
  const StepGradients g = gate(t, w, AblationMode::no_dis_loss);
  w.dis = 0.0;
  EXPECT_EQ(max_abs_diff(g.enc, gate(t, w, AblationMode::full).enc), 0.0);
}

TEST(TrainStep, DiscriminatorOnlyUpdateLeavesEncAndGen) {
  Fixture f;
  LoftganModel m = f.model;
  Optimizers opt(nn::OptimizerConfig{nn::OptimMethod::adam, 1e-3});
  Rng r(5);
  train_step(m, opt, f.batch, LossWeights{}, AblationMode::full, r, kUpdateDis);
  EXPECT_TRUE(m.enc_params.same_values(f.model.enc_params));
  EXPECT_TRUE(m.gen_params.same_values(f.model.gen_params));
  EXPECT_FALSE(m.dis_params.same_values(f.model.dis_params));
}

TEST(TrainStep, EncOnlyChangesOnlyEncoder) {
  Fixture f;
  LoftganModel m = f.model;
  Optimizers opt;
  Rng r(6);
  const StepReport rep = train_step(m, opt, f.batch, LossWeights{}, AblationMode::enc_only, r);
  EXPECT_FALSE(m.enc_params.same_values(f.model.enc_params));
  EXPECT_TRUE(m.gen_params.same_values(f.model.gen_params));
  EXPECT_TRUE(m.dis_params.same_values(f.model.dis_params));
  EXPECT_TRUE(std::isfinite(rep.style));
  EXPECT_TRUE(std::isfinite(rep.content));
}

TEST(TrainStep, NonFiniteGradientAbortsWithoutChanges) {
  Fixture f;
  LoftganModel m = f.model;
  Optimizers opt;
  Rng r(7);
  StepGradients g = compute_step_gradients(m, f.batch, LossWeights{}, AblationMode::full, r);
  g.dis.begin()->second[0] = NAN;
  EXPECT_THROW(apply_gradients(m, opt, g), NumericFault);
  EXPECT_TRUE(same_parameters(m, f.model));
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  Fixture f;
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto res = train(f.model, f.ds, cfg);
  EXPECT_TRUE(same_parameters(res.model, f.model));
  EXPECT_TRUE(res.history.empty());
  EXPECT_EQ(res.best_epoch, 0u);
}

TEST(Train, SameSeedSameHistoryAndFiniteLosses) {
  Fixture f;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 8;
  cfg.seed = 11;
  const auto a = train(f.model, f.ds, cfg);
  const auto b = train(f.model, f.ds, cfg);
  ASSERT_EQ(a.history.size(), 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(a.history[e].dev, b.history[e].dev);
    EXPECT_EQ(a.history[e].style, b.history[e].style);
    EXPECT_EQ(a.history[e].val_dev, b.history[e].val_dev);
    for (double v : {a.history[e].dev, a.history[e].dis, a.history[e].content, a.history[e].style}) {
      EXPECT_TRUE(std::isfinite(v));
    }
  }
  EXPECT_TRUE(same_parameters(a.model, b.model));
  EXPECT_GE(a.best_epoch, 1u);
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.val_split = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Train, HistoryCsvHeader) {
  const auto path = std::filesystem::temp_directory_path() / "loft_hist.csv";
  write_history_csv({EpochRecord{1, 2.0, 0.5, 0.25, -2.0, 1.5}}, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "epoch,L_dev,L_dis,L_content,L_style,val_L_dev");
  EXPECT_EQ(row, "1,2,0.5,0.25,-2,1.5");
}
