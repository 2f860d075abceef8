#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tacseg/params.hpp"
#include "tacseg/seg_model.hpp"
#include "tacseg/strutil.hpp"
#include "tacseg/tensor_io.hpp"

// Checkpoint container: a directory holding a structured-text manifest plus
// one FTNSR1 file per named tensor under tensors/. The [state] section makes
// a run resumable (step counts only; plain SGD carries no optimizer moments).

namespace tacseg {

struct TrainState {
  std::size_t epochs_completed = 0;
  std::size_t global_step = 0;
};

inline void save_checkpoint(const std::filesystem::path& dir,
                            const ModelConfig& cfg, const ParamStore& params,
                            const TrainState& state) {
  std::filesystem::create_directories(dir / "tensors");
  std::ofstream os(dir / "manifest.txt");
  if (!os) throw IoError("cannot write manifest in " + dir.string());
  os << "[model]\n";
  os << "variant = " << variant_name(cfg.kind) << "\n";
  os << "depth = " << cfg.backbone.depth << "\n";
  os << "stage_channels = " << detail::join_ints(cfg.backbone.stage_channels)
     << "\n";
  os << "embed_dim = " << cfg.backbone.embed_dim << "\n";
  os << "input_channels = " << cfg.backbone.input_channels << "\n";
  os << "patch = " << cfg.tokens.patch << "\n";
  os << "heads = " << cfg.tokens.heads << "\n";
  os << "mlp_ratio = " << cfg.tokens.mlp_ratio << "\n";
  os << "img_h = " << cfg.img_h << "\n";
  os << "img_w = " << cfg.img_w << "\n";
  os << "\n[state]\n";
  os << "epochs_completed = " << state.epochs_completed << "\n";
  os << "global_step = " << state.global_step << "\n";
  os << "\n[tensors]\n";
  for (const auto& [name, t] : params) {
    os << name << "\n";
    save_tensor(dir / "tensors" / (name + ".ftnsr"), t);
  }
  if (!os) throw IoError("manifest write failed in " + dir.string());
}

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
  TrainState state;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw IoError("cannot read manifest in " + dir.string());

  Checkpoint ck;
  std::map<std::string, std::string> kv;
  std::vector<std::string> tensor_names;
  std::string line, section;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line;
      continue;
    }
    if (section == "[tensors]") {
      tensor_names.push_back(line);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("manifest: bad line '" + line + "'");
    kv[detail::trim_ws(line.substr(0, eq))] =
        detail::trim_ws(line.substr(eq + 1));
  }

  auto need = [&kv, &dir](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end())
      throw ConfigError("manifest in " + dir.string() + " lacks '" + key +
                        "'");
    return it->second;
  };

  ck.config.kind = variant_from_name(need("variant"));
  ck.config.backbone.depth = std::stoi(need("depth"));
  ck.config.backbone.stage_channels = detail::split_ints(need("stage_channels"));
  ck.config.backbone.embed_dim = std::stoi(need("embed_dim"));
  ck.config.backbone.input_channels = std::stoi(need("input_channels"));
  ck.config.tokens.patch = std::stoi(need("patch"));
  ck.config.tokens.heads = std::stoi(need("heads"));
  ck.config.tokens.mlp_ratio = std::stoi(need("mlp_ratio"));
  ck.config.tokens.embed_dim = ck.config.backbone.embed_dim;
  ck.config.tokens.depth = ck.config.backbone.depth;
  ck.config.img_h = std::stoul(need("img_h"));
  ck.config.img_w = std::stoul(need("img_w"));
  ck.state.epochs_completed = std::stoul(need("epochs_completed"));
  ck.state.global_step = std::stoul(need("global_step"));
  ck.config.validate();

  for (const std::string& name : tensor_names)
    ck.params[name] = load_tensor(dir / "tensors" / (name + ".ftnsr"));
  return ck;
}

}  // namespace tacseg
