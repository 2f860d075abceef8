#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "tacseg/seg_model.hpp"
#include "tacseg/strutil.hpp"
#include "tacseg/synthetic.hpp"

// Run configuration. Files use a flat INI dialect: [section] headers,
// `key = value` pairs, '#' comments. Unknown keys are an error (typos should
// not silently fall back to defaults). CLI flags override file values; the
// resolved result is written next to every run's outputs.

namespace tacseg {

enum class Schedule { kCosine, kStep };

inline const char* schedule_name(Schedule s) {
  return s == Schedule::kCosine ? "cosine" : "step";
}

inline Schedule schedule_from_name(const std::string& s) {
  if (s == "cosine") return Schedule::kCosine;
  if (s == "step") return Schedule::kStep;
  throw ConfigError("unknown schedule '" + s + "' (want cosine|step)");
}

struct RunConfig {
  // [run]
  VariantKind variant = VariantKind::kFused;
  std::uint64_t seed = 0;
  bool seed_set = false;  // seed is mandatory; no silent default
  int epochs = 30;
  int batch = 1;
  double lr = 1e-3;
  Schedule schedule = Schedule::kCosine;
  double step_factor = 0.1;
  int step_interval = 10;
  bool warmup = false;
  int warmup_epochs = 1;
  std::string out_dir = "out";

  // [data]
  int train_images = 32;
  int eval_images = 8;
  DataGenConfig data;

  // [model]
  ModelConfig model;

  void validate() const {
    if (!seed_set) throw ConfigError("seed is required (set [run] seed or --seed)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (step_factor <= 0.0 || step_factor > 1.0)
      throw ConfigError("step_factor must be in (0, 1]");
    if (step_interval < 1) throw ConfigError("step_interval must be >= 1");
    if (warmup && warmup_epochs < 1)
      throw ConfigError("warmup_epochs must be >= 1");
    if (warmup && warmup_epochs >= epochs)
      throw ConfigError("warmup_epochs must be < epochs");
    if (train_images < 1 || eval_images < 1)
      throw ConfigError("train_images and eval_images must be >= 1");
    data.validate();
    ModelConfig m = model;
    m.kind = variant;
    m.img_h = static_cast<std::size_t>(data.height);
    m.img_w = static_cast<std::size_t>(data.width);
    m.validate();
  }

  // Model config with the run-level variant and data-level image size folded in.
  ModelConfig resolved_model() const {
    ModelConfig m = model;
    m.kind = variant;
    m.img_h = static_cast<std::size_t>(data.height);
    m.img_w = static_cast<std::size_t>(data.width);
    return m;
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + v + "'");
}

}  // namespace detail

// Applies one dotted key ("run.lr", "model.embed_dim") to the config.
inline void apply_config_kv(RunConfig& cfg, const std::string& dotted,
                            const std::string& value) {
  auto bad = [&dotted]() -> void {
    throw ConfigError("unknown config key '" + dotted + "'");
  };
  try {
    if (dotted == "run.variant") cfg.variant = variant_from_name(value);
    else if (dotted == "run.seed") {
      cfg.seed = std::stoull(value);
      cfg.seed_set = true;
    } else if (dotted == "run.epochs") cfg.epochs = std::stoi(value);
    else if (dotted == "run.batch") cfg.batch = std::stoi(value);
    else if (dotted == "run.lr") cfg.lr = std::stod(value);
    else if (dotted == "run.schedule") cfg.schedule = schedule_from_name(value);
    else if (dotted == "run.step_factor") cfg.step_factor = std::stod(value);
    else if (dotted == "run.step_interval") cfg.step_interval = std::stoi(value);
    else if (dotted == "run.warmup") cfg.warmup = detail::parse_bool(value, dotted);
    else if (dotted == "run.warmup_epochs") cfg.warmup_epochs = std::stoi(value);
    else if (dotted == "run.out") cfg.out_dir = value;
    else if (dotted == "data.train_images") cfg.train_images = std::stoi(value);
    else if (dotted == "data.eval_images") cfg.eval_images = std::stoi(value);
    else if (dotted == "data.height") cfg.data.height = std::stoi(value);
    else if (dotted == "data.width") cfg.data.width = std::stoi(value);
    else if (dotted == "data.min_cells") cfg.data.min_cells = std::stoi(value);
    else if (dotted == "data.max_cells") cfg.data.max_cells = std::stoi(value);
    else if (dotted == "model.depth") {
      cfg.model.backbone.depth = std::stoi(value);
      cfg.model.tokens.depth = cfg.model.backbone.depth;
    } else if (dotted == "model.stage_channels")
      cfg.model.backbone.stage_channels = detail::split_ints(value);
    else if (dotted == "model.embed_dim") {
      cfg.model.backbone.embed_dim = std::stoi(value);
      cfg.model.tokens.embed_dim = cfg.model.backbone.embed_dim;
    } else if (dotted == "model.patch") cfg.model.tokens.patch = std::stoi(value);
    else if (dotted == "model.heads") cfg.model.tokens.heads = std::stoi(value);
    else if (dotted == "model.mlp_ratio")
      cfg.model.tokens.mlp_ratio = std::stoi(value);
    else bad();
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for " + dotted + ": '" + value + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("out-of-range value for " + dotted + ": '" + value + "'");
  }
}

inline RunConfig parse_config_text(std::istream& is) {
  RunConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim_ws(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": bad section header");
      section = line.substr(1, line.size() - 2);
      if (section != "run" && section != "data" && section != "model")
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": key before any [section]");
    const std::string key = detail::trim_ws(line.substr(0, eq));
    const std::string value = detail::trim_ws(line.substr(eq + 1));
    apply_config_kv(cfg, section + "." + key, value);
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  return parse_config_text(is);
}

inline std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[run]\n";
  os << "variant = " << variant_name(cfg.variant) << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "batch = " << cfg.batch << "\n";
  os << "lr = " << cfg.lr << "\n";
  os << "schedule = " << schedule_name(cfg.schedule) << "\n";
  os << "step_factor = " << cfg.step_factor << "\n";
  os << "step_interval = " << cfg.step_interval << "\n";
  os << "warmup = " << (cfg.warmup ? "true" : "false") << "\n";
  os << "warmup_epochs = " << cfg.warmup_epochs << "\n";
  os << "out = " << cfg.out_dir << "\n";
  os << "\n[data]\n";
  os << "train_images = " << cfg.train_images << "\n";
  os << "eval_images = " << cfg.eval_images << "\n";
  os << "height = " << cfg.data.height << "\n";
  os << "width = " << cfg.data.width << "\n";
  os << "min_cells = " << cfg.data.min_cells << "\n";
  os << "max_cells = " << cfg.data.max_cells << "\n";
  os << "\n[model]\n";
  os << "depth = " << cfg.model.backbone.depth << "\n";
  os << "stage_channels = " << detail::join_ints(cfg.model.backbone.stage_channels)
     << "\n";
  os << "embed_dim = " << cfg.model.backbone.embed_dim << "\n";
  os << "patch = " << cfg.model.tokens.patch << "\n";
  os << "heads = " << cfg.model.tokens.heads << "\n";
  os << "mlp_ratio = " << cfg.model.tokens.mlp_ratio << "\n";
  return os.str();
}

inline void write_config(const std::filesystem::path& path,
                         const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config " + path.string());
  os << render_config(cfg);
}

}  // namespace tacseg
