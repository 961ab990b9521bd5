#include "loft/loftgan/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace loft::gan {

using nn::Gradients;
using nn::Pass;
using nn::Tensor;

namespace {

Tensor scaled(const Tensor& t, double s) {
  Tensor r = t;
  r *= s;
  return r;
}

struct Forward {
  Tensor x_tilde, y_tilde, y_hat;
  Tensor h_y, h_t, h_x;
  Tensor d_r, d_t, d_x;
  Pass enc, gen_t, gen_x, fy, ft, fx, hy, ht, hx;
  StepReport losses;
};

Forward run_forward(const LoftganModel& m, const Batch& b, Rng& rng) {
  if (b.size() == 0 || b.speckles.rank() != 4 || b.speckles.dim(0) != b.size()) {
    throw ShapeError("train batch: phases and speckles must share a nonzero batch size");
  }
  Forward f;
  f.x_tilde = m.enc.forward(m.enc_params, b.speckles, true, &rng, &f.enc);
  f.y_tilde = m.gen.forward(m.gen_params, f.x_tilde, true, nullptr, &f.gen_t);
  f.y_hat = m.gen.forward(m.gen_params, b.phases, true, nullptr, &f.gen_x);
  f.h_y = m.dis_features.forward(m.dis_params, b.speckles, true, nullptr, &f.fy);
  f.h_t = m.dis_features.forward(m.dis_params, f.y_tilde, true, nullptr, &f.ft);
  f.h_x = m.dis_features.forward(m.dis_params, f.y_hat, true, nullptr, &f.fx);
  f.d_r = m.dis_head.forward(m.dis_params, f.h_y, true, nullptr, &f.hy);
  f.d_t = m.dis_head.forward(m.dis_params, f.h_t, true, nullptr, &f.ht);
  f.d_x = m.dis_head.forward(m.dis_params, f.h_x, true, nullptr, &f.hx);
  f.losses.dev = loss_dev(f.x_tilde, b.phases);
  f.losses.dis = loss_dis(f.x_tilde, b.phases);
  f.losses.content = loss_content(f.h_y, f.h_t);
  f.losses.style = loss_style(f.d_r, f.d_x, f.d_t);
  return f;
}

std::string diagnostics(const LoftganModel& m, const StepReport& r) {
  std::ostringstream os;
  os << "L_dev=" << r.dev << " L_dis=" << r.dis << " L_content=" << r.content << " L_style=" << r.style
     << " |enc|=" << std::sqrt(m.enc_params.squared_norm()) << " |gen|=" << std::sqrt(m.gen_params.squared_norm())
     << " |dis|=" << std::sqrt(m.dis_params.squared_norm());
  return os.str();
}

bool finite(const StepReport& r) {
  return std::isfinite(r.dev) && std::isfinite(r.dis) && std::isfinite(r.content) && std::isfinite(r.style);
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

Batch make_batch(const LoftganModel& model, const io::PairDataset& ds, std::span<const std::size_t> indices) {
  std::vector<PhasePattern> x;
  std::vector<SpecklePattern> y;
  x.reserve(indices.size());
  y.reserve(indices.size());
  for (std::size_t i : indices) {
    x.push_back(ds.phases.at(i));
    y.push_back(ds.speckles.at(i));
  }
  return {phase_batch(x, model.phase_size()), speckle_batch(y, model.speckle_side)};
}

TermGradients compute_term_gradients(const LoftganModel& m, const Batch& b, Rng& rng) {
  Forward f = run_forward(m, b, rng);
  TermGradients t;
  t.losses = f.losses;

  m.enc.backward(m.enc_params, f.enc, loss_dev_grad(f.x_tilde, b.phases).grad, &t.dev_enc, false);
  m.enc.backward(m.enc_params, f.enc, loss_dis_grad(f.x_tilde, b.phases).grad, &t.dis_enc, false);

  const LossGrad con = loss_content_grad(f.h_y, f.h_t);
  const Tensor dyt = m.dis_features.backward(m.dis_params, f.ft, con.grad, &t.content_dis);
  m.dis_features.backward(m.dis_params, f.fy, scaled(con.grad, -1.0), &t.content_dis, false);
  const Tensor dxt = m.gen.backward(m.gen_params, f.gen_t, dyt, &t.content_gen);
  m.enc.backward(m.enc_params, f.enc, dxt, &t.content_enc, false);

  const StyleGrads st = loss_style_grad(f.d_r, f.d_x, f.d_t);
  const Tensor dhy = m.dis_head.backward(m.dis_params, f.hy, st.d_real, &t.style_dis);
  m.dis_features.backward(m.dis_params, f.fy, dhy, &t.style_dis, false);
  const Tensor dht = m.dis_head.backward(m.dis_params, f.ht, st.d_fake_enc, &t.style_dis);
  const Tensor dyt_s = m.dis_features.backward(m.dis_params, f.ft, dht, &t.style_dis);
  const Tensor dxt_s = m.gen.backward(m.gen_params, f.gen_t, dyt_s, &t.style_gen);
  m.enc.backward(m.enc_params, f.enc, dxt_s, &t.style_enc, false);
  const Tensor dhx = m.dis_head.backward(m.dis_params, f.hx, st.d_fake_x, &t.style_dis);
  const Tensor dyx = m.dis_features.backward(m.dis_params, f.fx, dhx, &t.style_dis);
  m.gen.backward(m.gen_params, f.gen_x, dyx, &t.style_gen, false);
  return t;
}

StepGradients gate(const TermGradients& t, const LossWeights& weights, AblationMode mode) {
  const LossWeights w = effective_weights(weights, mode);
  StepGradients g;
  g.losses = t.losses;
  nn::accumulate(g.enc, t.dev_enc, w.dev);
  nn::accumulate(g.enc, t.dis_enc, w.dis);
  nn::accumulate(g.enc, t.content_enc, w.con);
  if (mode != AblationMode::enc_only) {
    nn::accumulate(g.gen, t.content_gen, w.con_gen);
    nn::accumulate(g.gen, t.style_gen, 1.0);
    nn::accumulate(g.dis, t.style_dis, -1.0);
  }
  return g;
}

StepGradients compute_step_gradients(const LoftganModel& m, const Batch& b, const LossWeights& weights,
                                     AblationMode mode, Rng& rng) {
  const LossWeights w = effective_weights(weights, mode);
  Forward f = run_forward(m, b, rng);
  StepGradients g;
  g.losses = f.losses;
  const bool adversarial = mode != AblationMode::enc_only;

  Tensor seed = scaled(loss_dev_grad(f.x_tilde, b.phases).grad, w.dev);
  seed += scaled(loss_dis_grad(f.x_tilde, b.phases).grad, w.dis);

  const bool gen_content = adversarial && w.con_gen > 0.0;
  if (w.con > 0.0 || gen_content) {
    const LossGrad con = loss_content_grad(f.h_y, f.h_t);
    const Tensor dyt = m.dis_features.backward(m.dis_params, f.ft, con.grad, nullptr);
    Gradients tmp;
    const Tensor dxt = m.gen.backward(m.gen_params, f.gen_t, dyt, gen_content ? &tmp : nullptr, w.con > 0.0);
    if (gen_content) nn::accumulate(g.gen, tmp, w.con_gen);
    if (w.con > 0.0) seed += scaled(dxt, w.con);
  }
  m.enc.backward(m.enc_params, f.enc, seed, &g.enc, false);

  if (adversarial) {
    const StyleGrads st = loss_style_grad(f.d_r, f.d_x, f.d_t);
    Gradients sd, sg;
    const Tensor dhy = m.dis_head.backward(m.dis_params, f.hy, st.d_real, &sd);
    m.dis_features.backward(m.dis_params, f.fy, dhy, &sd, false);
    const Tensor dht = m.dis_head.backward(m.dis_params, f.ht, st.d_fake_enc, &sd);
    const Tensor dyt = m.dis_features.backward(m.dis_params, f.ft, dht, &sd);
    m.gen.backward(m.gen_params, f.gen_t, dyt, &sg, false);
    const Tensor dhx = m.dis_head.backward(m.dis_params, f.hx, st.d_fake_x, &sd);
    const Tensor dyx = m.dis_features.backward(m.dis_params, f.fx, dhx, &sd);
    m.gen.backward(m.gen_params, f.gen_x, dyx, &sg, false);
    nn::accumulate(g.gen, sg, 1.0);
    nn::accumulate(g.dis, sd, -1.0);
  }
  return g;
}

void apply_gradients(LoftganModel& model, Optimizers& opt, const StepGradients& grads, unsigned mask) {
  auto load = [&](nn::ParamStore& store, const Gradients& g, const char* which) {
    for (auto& [name, p] : store) {
      auto it = g.find(name);
      if (it == g.end()) throw StateError(std::string(which) + " update is missing the gradient of " + name);
      try {
        it->second.check_finite(name);
      } catch (const NumericFault& e) {
        throw NumericFault(std::string(e.what()) + "; " + diagnostics(model, grads.losses));
      }
      store.set_grad(name, it->second);
    }
  };
  // Load everything before stepping anything so a fault leaves all parameters untouched.
  const bool do_enc = (mask & kUpdateEnc) && !grads.enc.empty();
  const bool do_gen = (mask & kUpdateGen) && !grads.gen.empty();
  const bool do_dis = (mask & kUpdateDis) && !grads.dis.empty();
  if (do_enc) load(model.enc_params, grads.enc, "enc");
  if (do_gen) load(model.gen_params, grads.gen, "gen");
  if (do_dis) load(model.dis_params, grads.dis, "dis");
  if (do_enc) opt.enc.step(model.enc_params);
  if (do_gen) opt.gen.step(model.gen_params);
  if (do_dis) opt.dis.step(model.dis_params);
}

StepReport train_step(LoftganModel& model, Optimizers& opt, const Batch& batch, const LossWeights& weights,
                      AblationMode mode, Rng& rng, unsigned mask) {
  StepGradients g;
  try {
    g = compute_step_gradients(model, batch, weights, mode, rng);
  } catch (const NumericFault& e) {
    throw NumericFault(std::string(e.what()) + "; " + diagnostics(model, {}));
  }
  if (!finite(g.losses)) throw NumericFault("non-finite loss; " + diagnostics(model, g.losses));
  apply_gradients(model, opt, g, mask);
  return g.losses;
}

void TrainConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("train.batch must be >= 1");
  if (!(val_split >= 0.0 && val_split < 1.0)) throw std::invalid_argument("train.val_split must lie in [0, 1)");
  if (!(optimizer.lr > 0.0) || !std::isfinite(optimizer.lr)) throw std::invalid_argument("train.lr must be > 0");
  weights.validate();
}

double evaluate_dev(const LoftganModel& model, const io::PairDataset& ds, std::span<const std::size_t> indices,
                    std::size_t batch) {
  if (indices.empty()) throw std::invalid_argument("evaluate_dev: no samples");
  double total = 0.0;
  for (std::size_t s = 0; s < indices.size(); s += batch) {
    const auto chunk = indices.subspan(s, std::min(batch, indices.size() - s));
    const Batch b = make_batch(model, ds, chunk);
    const Tensor pred = model.enc.forward(model.enc_params, b.speckles, false, nullptr, nullptr);
    total += loss_dev(pred, b.phases) * static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(indices.size());
}

TrainResult train(LoftganModel model, const io::PairDataset& ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  const std::size_t n = ds.size();
  if (n == 0) throw std::invalid_argument("train: dataset is empty");
  if (ds.speckles.front().size() != model.speckle_size() || ds.phases.front().size() != model.phase_size()) {
    throw ShapeError("train: dataset pattern sizes do not match the model");
  }

  const Rng root(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = root.split(11);
  shuffle(order, split_rng);
  std::size_t n_val = 0;
  if (cfg.val_split > 0.0) {
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.val_split * static_cast<double>(n))));
  }
  if (n_val >= n) throw std::invalid_argument("train: validation split leaves no training pairs");
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  TrainResult res;
  res.model = model;
  Optimizers opt(cfg.optimizer);
  Rng order_rng = root.split(12);
  Rng dropout_rng = root.split(13);
  double best = std::numeric_limits<double>::infinity();
  double first_dev = 0.0;
  std::size_t since_best = 0, over = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(tr, order_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t s = 0; s < tr.size(); s += cfg.batch) {
      const std::size_t len = std::min(cfg.batch, tr.size() - s);
      const Batch b = make_batch(model, ds, std::span<const std::size_t>(tr).subspan(s, len));
      const StepReport r = train_step(model, opt, b, cfg.weights, cfg.mode, dropout_rng);
      const double wgt = static_cast<double>(len);
      rec.dev += r.dev * wgt;
      rec.dis += r.dis * wgt;
      rec.content += r.content * wgt;
      rec.style += r.style * wgt;
    }
    const double nt = static_cast<double>(tr.size());
    rec.dev /= nt;
    rec.dis /= nt;
    rec.content /= nt;
    rec.style /= nt;
    rec.val_dev = n_val ? evaluate_dev(model, ds, val, cfg.batch) : rec.dev;
    res.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val_dev < best) {
      best = rec.val_dev;
      res.model = model;
      res.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }

    if (epoch == 1) {
      first_dev = rec.dev;
    } else if (rec.dev > 10.0 * first_dev) {
      if (++over >= 3) {
        std::ostringstream os;
        os << "training diverged: L_dev " << rec.dev << " exceeded 10x its epoch-1 value " << first_dev
           << " for 3 consecutive epochs (last epoch " << epoch << ")";
        throw DivergenceError(os.str());
      }
    } else {
      over = 0;
    }

    if (cfg.patience > 0 && since_best >= cfg.patience) {
      res.stopped_early = true;
      break;
    }
  }
  return res;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "epoch,L_dev,L_dis,L_content,L_style,val_L_dev\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << io::format_double(r.dev) << ',' << io::format_double(r.dis) << ','
        << io::format_double(r.content) << ',' << io::format_double(r.style) << ',' << io::format_double(r.val_dev)
        << '\n';
  }
}

PhasePattern predict_phase(const LoftganModel& model, const SpecklePattern& target, std::optional<int> levels) {
  if (target.size() != model.speckle_size()) {
    throw ShapeError("predict_phase: target has " + std::to_string(target.size()) + " values, model expects " +
                     std::to_string(model.speckle_size()));
  }
  for (double v : target.values()) {
    if (v > 1.0) throw RangeError("predict_phase: target must be normalized to [0, 1]");
  }
  const SpecklePattern one[] = {target};
  const Tensor x = speckle_batch(one, model.speckle_side);
  const Tensor out = model.enc.forward(model.enc_params, x, false, nullptr, nullptr);
  PhasePattern p(out.vec());
  return levels ? p.quantized(*levels) : p;
}

}  // namespace loft::gan
