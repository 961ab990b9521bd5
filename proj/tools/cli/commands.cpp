#include "cli/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>

#include <CLI11.hpp>

#include "loft/error.hpp"
#include "loft/io.hpp"
#include "loft/loftgan/trainer.hpp"
#include "loft/sim.hpp"

namespace loft::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
  Json cfg;
  fs::path run_dir;
  std::ostream& out;
  std::ostream& err;

  template <class T>
  T get(const std::string& key) const {
    return at_path(cfg, key).get<T>();
  }
};

std::size_t exact_side(std::size_t n, const std::string& key) {
  const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (s * s != n) throw ConfigError(key, std::to_string(n) + " is not a perfect square");
  return s;
}

fs::path input_path(const Context& ctx, const std::string& key, const std::string& command) {
  const std::string p = ctx.get<std::string>(key);
  if (p.empty()) throw ConfigError(key, "required by " + command);
  if (!fs::exists(p)) throw ConfigError(key, "file not found: " + p);
  return p;
}

void write_json(const fs::path& path, const Json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
}

TransmissionMatrix obtain_tm(const Context& ctx) {
  const auto n_in = ctx.get<std::size_t>("tm.n_in");
  const auto n_out = ctx.get<std::size_t>("tm.n_out");
  if (ctx.get<std::string>("paths.tm").empty()) return gen_tm(n_in, n_out, ctx.get<std::uint64_t>("tm.seed"));
  TransmissionMatrix tm = io::load_tm(input_path(ctx, "paths.tm", "this command"));
  if (tm.cols() != n_in || tm.rows() != n_out) {
    throw ConfigError("paths.tm", "matrix is " + std::to_string(tm.rows()) + "x" + std::to_string(tm.cols()) +
                                      " but tm.n_out x tm.n_in is " + std::to_string(n_out) + "x" +
                                      std::to_string(n_in));
  }
  return tm;
}

io::PairDataset obtain_dataset(const Context& ctx, const TransmissionMatrix& tm) {
  if (ctx.get<std::string>("paths.dataset").empty()) {
    const auto levels = ctx.get<int>("dataset.levels");
    return io::gen_dataset(tm, ctx.get<std::size_t>("dataset.pairs"), ctx.get<std::uint64_t>("dataset.seed"),
                           levels ? std::optional<int>(levels) : std::nullopt);
  }
  io::PairDataset ds = io::load_dataset(input_path(ctx, "paths.dataset", "this command"));
  if (ds.tm_seed != tm.seed()) {
    throw ConfigError("paths.dataset", "dataset was generated with tm seed " + std::to_string(ds.tm_seed) +
                                           ", current matrix has seed " + std::to_string(tm.seed()));
  }
  return ds;
}

std::optional<int> eval_levels(const Context& ctx) {
  const int l = ctx.get<int>("eval.levels");
  return l ? std::optional<int>(l) : std::nullopt;
}

void save_phase_outputs(const PhasePattern& phase, const fs::path& dir) {
  io::save_phase(phase, dir / "phase.loft");
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(phase.size()))));
  if (side * side == phase.size()) io::export_image(phase, dir / "phase.pgm");
}

eval::FocusReport report_for(const Context& ctx, const TransmissionMatrix& tm, const PhasePattern& phase,
                             const TargetSpec& target, const std::string& method, const fs::path& dir,
                             std::vector<std::uint64_t> extra_seeds = {}) {
  eval::FocusReport r = eval::evaluate(tm, phase, target, ctx.get<std::size_t>("eval.baseline_draws"),
                                       ctx.get<std::uint64_t>("eval.seed"), method);
  r.seeds.insert(r.seeds.end(), extra_seeds.begin(), extra_seeds.end());
  write_json(dir / "report.json", report_to_json(r));
  const SpecklePattern s(r.intensity, false);
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(s.size()))));
  if (side * side == s.size()) io::export_image(s.normalize(), dir / "speckle.pgm");
  ctx.out << method << ": enhancement " << r.enhancement << ", target mean " << r.target_mean << ", pearson "
          << r.pearson << '\n';
  return r;
}

gan::TrainConfig train_config(const Context& ctx, gan::AblationMode mode) {
  gan::TrainConfig tc;
  tc.epochs = ctx.get<std::size_t>("train.epochs");
  tc.batch = ctx.get<std::size_t>("train.batch");
  tc.optimizer.lr = ctx.get<double>("train.lr");
  tc.mode = mode;
  tc.weights = {ctx.get<double>("train.weights.dev"), ctx.get<double>("train.weights.dis"),
                ctx.get<double>("train.weights.con"), ctx.get<double>("train.weights.con_gen")};
  tc.seed = ctx.get<std::uint64_t>("train.seed");
  tc.val_split = 1.0 - ctx.get<double>("dataset.split");
  tc.patience = ctx.get<std::size_t>("train.patience");
  return tc;
}

gan::LoftganModel fresh_model(const Context& ctx) {
  const std::size_t s = exact_side(ctx.get<std::size_t>("tm.n_out"), "tm.n_out");
  const std::size_t p = exact_side(ctx.get<std::size_t>("tm.n_in"), "tm.n_in");
  if (s < gan::kMinSide) throw ConfigError("tm.n_out", "speckle side must be >= " + std::to_string(gan::kMinSide));
  if (p < gan::kMinSide) throw ConfigError("tm.n_in", "phase side must be >= " + std::to_string(gan::kMinSide));
  return gan::build_model(s, p, ctx.get<std::uint64_t>("train.seed"));
}

/// Trains one mode into `dir` and returns the focusing report of the predicted phase.
eval::FocusReport train_into(const Context& ctx, const TransmissionMatrix& tm, const io::PairDataset& ds,
                             gan::AblationMode mode, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string label(gan::to_string(mode));
  gan::TrainResult res = gan::train(fresh_model(ctx), ds, train_config(ctx, mode), [&](const gan::EpochRecord& r) {
    ctx.out << label << " epoch " << r.epoch << ": L_dev " << r.dev << " L_dis " << r.dis << " L_content "
            << r.content << " L_style " << r.style << " val_L_dev " << r.val_dev << '\n';
  });
  gan::save_model(res.model, dir / "checkpoint.loft");
  gan::write_history_csv(res.history, dir / "history.csv");
  const TargetSpec target = target_from_config(ctx.cfg);
  const PhasePattern phase = gan::predict_phase(res.model, target.as_speckle(), eval_levels(ctx));
  save_phase_outputs(phase, dir);
  return report_for(ctx, tm, phase, target, label, dir, {ctx.get<std::uint64_t>("train.seed")});
}

// Subcommands ------------------------------------------------------------------

void cmd_gen_tm(const Context& ctx) {
  const TransmissionMatrix tm = gen_tm(ctx.get<std::size_t>("tm.n_in"), ctx.get<std::size_t>("tm.n_out"),
                                       ctx.get<std::uint64_t>("tm.seed"));
  io::save_tm(tm, ctx.run_dir / "tm.loft");
  ctx.out << "wrote " << (ctx.run_dir / "tm.loft").string() << '\n';
}

void cmd_gen_data(const Context& ctx) {
  const TransmissionMatrix tm = obtain_tm(ctx);
  if (ctx.get<std::string>("paths.tm").empty()) io::save_tm(tm, ctx.run_dir / "tm.loft");
  const io::PairDataset ds = obtain_dataset(ctx, tm);
  io::save_dataset(ds, ctx.run_dir / "dataset.loft");
  const auto pside = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tm.cols()))));
  if (pside * pside == tm.cols()) io::export_image(ds.phases.front(), ctx.run_dir / "sample_phase.pgm");
  const auto sside = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tm.rows()))));
  if (sside * sside == tm.rows()) io::export_image(ds.speckles.front(), ctx.run_dir / "sample_speckle.pgm");
  ctx.out << "wrote " << ds.size() << " pairs to " << (ctx.run_dir / "dataset.loft").string() << '\n';
}

void cmd_calibrate(const Context& ctx) {
  const TransmissionMatrix tm = obtain_tm(ctx);
  const std::size_t n = tm.cols();
  if (!std::has_single_bit(n)) throw ConfigError("tm.n_in", "calibration needs a power of two");
  const IntensityOracle probe = [&tm](const PhasePattern& p) { return speckle(tm, p, false); };
  const TransmissionMatrix est = calibrate_tm(probe, n, tm.rows(), ctx.get<std::size_t>("calibrate.phase_steps"));
  io::save_tm(est, ctx.run_dir / "tm_estimate.loft");

  double min_corr = 1.0, sum_corr = 0.0;
  for (std::size_t m = 0; m < tm.rows(); ++m) {
    cplx dot = 0.0;
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      dot += est(m, k) * std::conj(tm(m, k));
      a += std::norm(est(m, k));
      b += std::norm(tm(m, k));
    }
    const double c = (a > 0.0 && b > 0.0) ? std::abs(dot) / std::sqrt(a * b) : 0.0;
    min_corr = std::min(min_corr, c);
    sum_corr += c;
  }
  const TargetSpec target = target_from_config(ctx.cfg);
  const double ratio = objective(tm, phase_conjugate(est, target), target) /
                       objective(tm, phase_conjugate(tm, target), target);
  write_json(ctx.run_dir / "calibration.json", Json{{"min_row_correlation", min_corr},
                                                     {"mean_row_correlation", sum_corr / tm.rows()},
                                                     {"focus_ratio", ratio}});
  ctx.out << "calibration: min row correlation " << min_corr << ", focus ratio " << ratio << '\n';
}

void cmd_optimize(const Context& ctx) {
  const TransmissionMatrix tm = obtain_tm(ctx);
  const TargetSpec target = target_from_config(ctx.cfg);
  const std::string method = ctx.get<std::string>("optimize.method");
  PhasePattern phase;
  std::vector<std::uint64_t> seeds;
  if (method == "conj") {
    phase = phase_conjugate(tm, target);
  } else {
    const ObjectiveOracle oracle = make_oracle(tm, target);
    const auto seed = ctx.get<std::uint64_t>("optimize.seed");
    OptimizerTrace trace;
    if (method == "csa") {
      trace = continuous_sequential(oracle, tm.cols(), ctx.get<int>("optimize.levels"), ctx.get<int>("optimize.sweeps"),
                                    seed);
    } else {
      GaConfig ga;
      ga.population = ctx.get<std::size_t>("optimize.ga.population");
      ga.generations = ctx.get<std::size_t>("optimize.ga.generations");
      ga.mutation_initial = ctx.get<double>("optimize.ga.mutation_initial");
      ga.mutation_decay = ctx.get<double>("optimize.ga.mutation_decay");
      ga.elite_fraction = ctx.get<double>("optimize.ga.elite_fraction");
      ga.seed = seed;
      try {
        ga.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError("optimize.ga", e.what());
      }
      trace = genetic_optimize(oracle, tm.cols(), ga);
    }
    write_trace_csv(trace, (ctx.run_dir / "trace.csv").string());
    phase = trace.best;
    seeds.push_back(seed);
  }
  save_phase_outputs(phase, ctx.run_dir);
  report_for(ctx, tm, phase, target, method, ctx.run_dir, seeds);
}

void cmd_train(const Context& ctx) {
  const TransmissionMatrix tm = obtain_tm(ctx);
  const io::PairDataset ds = obtain_dataset(ctx, tm);
  train_into(ctx, tm, ds, gan::parse_mode(ctx.get<std::string>("train.mode")), ctx.run_dir);
}

void cmd_predict(const Context& ctx) {
  const gan::LoftganModel model = gan::load_model(input_path(ctx, "paths.checkpoint", "predict"));
  if (model.speckle_size() != ctx.get<std::size_t>("tm.n_out")) {
    throw ConfigError("tm.n_out", "checkpoint expects " + std::to_string(model.speckle_size()) + " output modes");
  }
  const TargetSpec target = target_from_config(ctx.cfg);
  const PhasePattern phase = gan::predict_phase(model, target.as_speckle(), eval_levels(ctx));
  save_phase_outputs(phase, ctx.run_dir);
  ctx.out << "wrote " << (ctx.run_dir / "phase.loft").string() << '\n';
}

void cmd_evaluate(const Context& ctx) {
  const TransmissionMatrix tm = obtain_tm(ctx);
  const PhasePattern phase = io::load_phase(input_path(ctx, "paths.phase", "evaluate"));
  if (phase.size() != tm.cols()) throw ConfigError("paths.phase", "phase length does not match tm.n_in");
  report_for(ctx, tm, phase, target_from_config(ctx.cfg), "evaluate", ctx.run_dir);
}

void cmd_compare(const Context& ctx) {
  const Json& paths = at_path(ctx.cfg, "paths.reports");
  if (paths.empty()) throw ConfigError("paths.reports", "required by compare");
  std::vector<eval::FocusReport> reports;
  for (const auto& p : paths) {
    const std::string file = p.get<std::string>();
    std::ifstream in(file);
    if (!in) throw ConfigError("paths.reports", "file not found: " + file);
    try {
      reports.push_back(report_from_json(Json::parse(in)));
    } catch (const Json::exception& e) {
      throw ConfigError("paths.reports", file + ": " + e.what());
    }
  }
  const auto outs = eval::compare(reports, ctx.run_dir);
  ctx.out << "wrote " << outs.csv.string() << '\n';
}

void write_grid(const std::vector<eval::FocusReport>& reports, const fs::path& path) {
  const std::size_t side = reports.front().profile.row.size();
  if (side == 0) return;
  const std::size_t width = reports.size() * (side + 1) - 1;
  std::vector<double> img(side * width, 0.0);
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const SpecklePattern s = SpecklePattern(reports[k].intensity, false).normalize();
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) img[r * width + k * (side + 1) + c] = s[r * side + c];
    }
  }
  io::export_image(img, side, width, path);
}

void cmd_ablate(const Context& ctx) {
  const TransmissionMatrix tm = obtain_tm(ctx);
  const io::PairDataset ds = obtain_dataset(ctx, tm);
  std::vector<eval::FocusReport> reports;
  for (auto mode : {gan::AblationMode::enc_only, gan::AblationMode::no_dis_loss, gan::AblationMode::no_content_loss,
                    gan::AblationMode::full}) {
    reports.push_back(train_into(ctx, tm, ds, mode, ctx.run_dir / std::string(gan::to_string(mode))));
  }
  const auto outs = eval::compare(reports, ctx.run_dir);
  write_grid(reports, ctx.run_dir / "ablation_grid.pgm");
  ctx.out << "wrote " << outs.csv.string() << '\n';
}

// Setup --------------------------------------------------------------------------

struct CommonFlags {
  std::string config;
  std::string out;
  bool large_scale = false;
  int threads = 1;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON run configuration");
  sub->add_option("--out", f.out, "Run directory (default: $LOFT_RUN_DIR/<command>, or runs/<command>)");
  sub->add_flag("--paper-scale", f.large_scale, "64x64 speckles, 32x32 phases, 12888 pairs (slow)");
  sub->add_option("--threads", f.threads, "Worker threads; this build always runs serially")
      ->check(CLI::PositiveNumber);
  sub->allow_extras();
}

Json resolve_config(const CommonFlags& f, const std::vector<std::string>& extras, std::ostream& err) {
  Json cfg = default_config();
  if (f.large_scale) {
    merge_config(cfg, large_scale_preset());
    err << "warning: --paper-scale trains on 12888 64x64 speckles; expect many hours per model on one core\n";
  }
  if (!f.config.empty()) merge_config(cfg, read_config_file(f.config));
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2) throw ConfigError(a, "unexpected argument");
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError(key, "missing value");
      value = extras[++i];
    }
    apply_override(cfg, key, value);
  }
  return cfg;
}

void absolutize_paths(Json& cfg) {
  for (const char* k : {"tm", "dataset", "checkpoint", "phase"}) {
    auto& v = cfg["paths"][k];
    if (!v.get<std::string>().empty()) v = fs::absolute(v.get<std::string>()).lexically_normal().string();
  }
  for (auto& v : cfg["paths"]["reports"]) v = fs::absolute(v.get<std::string>()).lexically_normal().string();
}

}  // namespace

TargetSpec target_from_config(const Json& cfg) {
  const std::size_t side = exact_side(at_path(cfg, "tm.n_out").get<std::size_t>(), "tm.n_out");
  const double radius = at_path(cfg, "eval.target.radius").get<double>();
  std::vector<double> w(side * side, 0.0);
  for (const auto& p : at_path(cfg, "eval.target.points")) {
    const auto r = p[0].get<std::size_t>(), c = p[1].get<std::size_t>();
    if (r >= side || c >= side) {
      throw ConfigError("eval.target.points", "point [" + std::to_string(r) + ", " + std::to_string(c) +
                                                  "] outside the " + std::to_string(side) + "x" +
                                                  std::to_string(side) + " grid");
    }
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dy = static_cast<double>(y) - static_cast<double>(r);
        const double dx = static_cast<double>(x) - static_cast<double>(c);
        if (dy * dy + dx * dx <= radius * radius) w[y * side + x] = 1.0;
      }
    }
  }
  return TargetSpec(std::move(w));
}

Json report_to_json(const eval::FocusReport& r) {
  return Json{{"method", r.method},
              {"tm_seed", r.tm_seed},
              {"n_inputs", r.n_inputs},
              {"n_outputs", r.n_outputs},
              {"target_weights", r.target_weights},
              {"seeds", r.seeds},
              {"target_mean", r.target_mean},
              {"background_mean", r.background_mean},
              {"baseline_mean", r.baseline_mean},
              {"enhancement", r.enhancement},
              {"peak_to_background", std::isfinite(r.peak_to_background) ? Json(r.peak_to_background) : Json()},
              {"pearson", r.pearson},
              {"site_enhancement", r.site_enhancement},
              {"profile",
               {{"row", r.profile.row},
                {"col", r.profile.col},
                {"peak_row", r.profile.peak_row},
                {"peak_col", r.profile.peak_col}}},
              {"intensity", r.intensity}};
}

eval::FocusReport report_from_json(const Json& j) {
  eval::FocusReport r;
  r.method = j.at("method").get<std::string>();
  r.tm_seed = j.at("tm_seed").get<std::uint64_t>();
  r.n_inputs = j.at("n_inputs").get<std::size_t>();
  r.n_outputs = j.at("n_outputs").get<std::size_t>();
  r.target_weights = j.at("target_weights").get<std::vector<double>>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.target_mean = j.at("target_mean").get<double>();
  r.background_mean = j.at("background_mean").get<double>();
  r.baseline_mean = j.at("baseline_mean").get<double>();
  r.enhancement = j.at("enhancement").get<double>();
  const Json& ptb = j.at("peak_to_background");
  r.peak_to_background = ptb.is_null() ? std::numeric_limits<double>::infinity() : ptb.get<double>();
  r.pearson = j.at("pearson").get<double>();
  r.site_enhancement = j.at("site_enhancement").get<std::vector<double>>();
  const Json& p = j.at("profile");
  r.profile.row = p.at("row").get<std::vector<double>>();
  r.profile.col = p.at("col").get<std::vector<double>>();
  r.profile.peak_row = p.at("peak_row").get<std::size_t>();
  r.profile.peak_col = p.at("peak_col").get<std::size_t>();
  r.intensity = j.at("intensity").get<std::vector<double>>();
  return r;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"loft: transmission-matrix wavefront shaping and LoftGAN focusing"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string mode, method;
  std::vector<std::string> report_files;

  using Handler = void (*)(const Context&);
  std::map<CLI::App*, Handler> handlers;
  auto add = [&](const char* name, const char* help, Handler h) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, flags);
    handlers[sub] = h;
    return sub;
  };
  add("gen-tm", "Generate a random transmission matrix", cmd_gen_tm);
  add("gen-data", "Generate phase/speckle training pairs", cmd_gen_data);
  add("calibrate", "Recover a matrix from phase-stepped Hadamard intensity probes", cmd_calibrate);
  add("optimize", "Classical focusing: phase conjugation, CSA or GA", cmd_optimize)
      ->add_option("--method", method, "conj, csa or ga")
      ->check(CLI::IsMember({"conj", "csa", "ga"}));
  add("train", "Train a LoftGAN model", cmd_train)
      ->add_option("--mode", mode, "full, enc_only, no_dis or no_content")
      ->check(CLI::IsMember({"full", "enc_only", "no_dis", "no_content"}));
  add("predict", "Predict a focusing phase from a checkpoint", cmd_predict);
  add("evaluate", "Focusing report for a phase pattern", cmd_evaluate);
  add("compare", "Comparison table and profile plots for several reports", cmd_compare)
      ->add_option("reports", report_files, "report.json files");
  add("ablate", "Train all four modes and compare them", cmd_ablate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    Json cfg = resolve_config(flags, sub->remaining(), err);
    if (!mode.empty()) cfg["train"]["mode"] = mode;
    if (!method.empty()) cfg["optimize"]["method"] = method;
    if (!report_files.empty()) cfg["paths"]["reports"] = report_files;
    absolutize_paths(cfg);
    validate_config(cfg);
    if (flags.threads != 1) err << "note: --threads " << flags.threads << " ignored; this build runs serially\n";

    fs::path run_dir = flags.out;
    if (run_dir.empty()) {
      const char* root = std::getenv("LOFT_RUN_DIR");
      run_dir = fs::path(root && *root ? root : "runs") / sub->get_name();
    }
    fs::create_directories(run_dir);
    write_json(run_dir / "config.resolved.json", cfg);
    handlers.at(sub)(Context{std::move(cfg), run_dir, out, err});
    return kExitOk;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericFault& e) {
    err << "numeric fault: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace loft::cli
