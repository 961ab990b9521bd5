#include "cli/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace loft::cli {

Json default_config() {
  return Json{
      {"tm", {{"n_in", 64}, {"n_out", 256}, {"seed", 1}}},
      {"dataset", {{"pairs", 2000}, {"levels", 32}, {"split", 0.9}, {"seed", 2}}},
      {"train",
       {{"mode", "full"},
        {"epochs", 200},
        {"batch", 32},
        {"lr", 1e-4},
        {"patience", 10},
        {"weights", {{"dev", 22.0}, {"dis", 0.03}, {"con", 0.03}, {"con_gen", 1e-6}}},
        {"seed", 3}}},
      {"eval",
       {{"baseline_draws", 200},
        {"seed", 4},
        {"levels", 32},
        {"target", {{"points", Json::array({Json::array({8, 8})})}, {"radius", 0.0}}}}},
      {"calibrate", {{"phase_steps", 4}}},
      {"optimize",
       {{"method", "conj"},
        {"levels", 32},
        {"sweeps", 1},
        {"seed", 5},
        {"ga",
         {{"population", 30},
          {"generations", 200},
          {"mutation_initial", 0.1},
          {"mutation_decay", 0.995},
          {"elite_fraction", 0.1}}}}},
      {"paths",
       {{"tm", ""}, {"dataset", ""}, {"checkpoint", ""}, {"phase", ""}, {"reports", Json::array()}}},
  };
}

Json large_scale_preset() {
  Json p;
  p["tm"] = {{"n_in", 1024}, {"n_out", 4096}};
  p["dataset"] = {{"pairs", 12888}};
  p["eval"]["target"]["points"] = Json::array({Json::array({32, 32})});
  return p;
}

Json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("--config", path.string() + ": " + e.what());
  }
}

namespace {

bool is_integer(const Json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

bool same_kind(const Json& want, const Json& got) {
  if (is_integer(want)) return is_integer(got);
  if (want.is_number()) return got.is_number();
  return want.type() == got.type();
}

std::string kind_name(const Json& v) {
  if (is_integer(v)) return "an integer";
  if (v.is_number()) return "a number";
  if (v.is_string()) return "a string";
  if (v.is_boolean()) return "a boolean";
  if (v.is_array()) return "an array";
  if (v.is_object()) return "an object";
  return "null";
}

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

}  // namespace

void merge_config(Json& base, const Json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = join(prefix, key);
    if (!base.contains(key)) throw ConfigError(path, "unknown key");
    Json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, path);
    } else if (!same_kind(slot, value)) {
      throw ConfigError(path, "expected " + kind_name(slot) + ", got " + kind_name(value));
    } else {
      slot = value;
    }
  }
}

const Json& at_path(const Json& cfg, const std::string& dotted) {
  const Json* node = &cfg;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError(dotted, "unknown key");
    node = &(*node)[part];
  }
  return *node;
}

void apply_override(Json& cfg, const std::string& dotted, const std::string& raw) {
  const Json& current = at_path(cfg, dotted);
  Json value;
  if (current.is_string()) {
    value = raw;
  } else {
    try {
      value = Json::parse(raw);
    } catch (const Json::parse_error&) {
      throw ConfigError(dotted, "cannot parse '" + raw + "' as " + kind_name(current));
    }
  }
  // Rebuild the nested patch so merge_config performs the type check.
  Json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  merge_config(cfg, patch);
}

namespace {

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

std::int64_t get_int(const Json& cfg, const std::string& key) { return at_path(cfg, key).get<std::int64_t>(); }
double get_num(const Json& cfg, const std::string& key) { return at_path(cfg, key).get<double>(); }

}  // namespace

void validate_config(const Json& cfg) {
  for (const char* k : {"tm.n_in", "tm.n_out", "dataset.pairs", "train.batch", "optimize.ga.population"}) {
    require(get_int(cfg, k) >= 1, k, "must be >= 1");
  }
  for (const char* k : {"tm.seed", "dataset.seed", "train.seed", "eval.seed", "optimize.seed", "train.epochs",
                        "train.patience", "optimize.sweeps", "optimize.ga.generations"}) {
    require(get_int(cfg, k) >= 0, k, "must be >= 0");
  }
  const auto levels = get_int(cfg, "dataset.levels");
  require(levels == 0 || levels >= 2, "dataset.levels", "must be 0 (continuous) or >= 2");
  const auto eval_levels = get_int(cfg, "eval.levels");
  require(eval_levels == 0 || eval_levels >= 2, "eval.levels", "must be 0 (continuous) or >= 2");
  require(get_int(cfg, "optimize.levels") >= 2, "optimize.levels", "must be >= 2");
  const double split = get_num(cfg, "dataset.split");
  require(split > 0.0 && split <= 1.0, "dataset.split", "train fraction must lie in (0, 1]");
  require(get_num(cfg, "train.lr") > 0.0, "train.lr", "must be > 0");
  for (const char* k : {"train.weights.dev", "train.weights.dis", "train.weights.con", "train.weights.con_gen"}) {
    const double w = get_num(cfg, k);
    require(w >= 0.0 && std::isfinite(w), k, "must be finite and >= 0");
  }
  require(get_int(cfg, "eval.baseline_draws") >= 10, "eval.baseline_draws", "must be >= 10");
  require(get_int(cfg, "calibrate.phase_steps") >= 3, "calibrate.phase_steps", "must be >= 3");
  require(get_num(cfg, "eval.target.radius") >= 0.0, "eval.target.radius", "must be >= 0");
  const std::string mode = at_path(cfg, "train.mode").get<std::string>();
  require(mode == "full" || mode == "enc_only" || mode == "no_dis" || mode == "no_content", "train.mode",
          "expected full, enc_only, no_dis or no_content");
  const std::string method = at_path(cfg, "optimize.method").get<std::string>();
  require(method == "conj" || method == "csa" || method == "ga", "optimize.method", "expected conj, csa or ga");
  const Json& points = at_path(cfg, "eval.target.points");
  require(!points.empty(), "eval.target.points", "needs at least one [row, col]");
  for (const auto& p : points) {
    require(p.is_array() && p.size() == 2 && is_integer(p[0]) && is_integer(p[1]) && p[0].get<std::int64_t>() >= 0 &&
                p[1].get<std::int64_t>() >= 0,
            "eval.target.points", "each point must be [row, col] with nonnegative integers");
  }
  for (const auto& r : at_path(cfg, "paths.reports")) {
    require(r.is_string(), "paths.reports", "entries must be file paths");
  }
}

}  // namespace loft::cli
