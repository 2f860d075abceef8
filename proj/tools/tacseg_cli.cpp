#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tacseg/pipeline.hpp"

// Exit codes: 0 success, 1 validation failure (gradcheck mismatch, NaN
// abort), 2 configuration / I-O error.

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kConfigError = 2;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  bool seed_given = false;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "configuration file");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option_function<std::uint64_t>(
         "--seed",
         [&o](const std::uint64_t& v) {
           o.seed = v;
           o.seed_given = true;
         },
         "run seed (overrides the config file)");
  cmd->add_option_function<std::vector<std::string>>(
         "--set",
         [&o](const std::vector<std::string>& kvs) {
           for (const std::string& kv : kvs) {
             const auto eq = kv.find('=');
             if (eq == std::string::npos)
               throw CLI::ValidationError("--set", "expected section.key=value");
             o.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
           }
         },
         "override a config key, e.g. --set run.epochs=12");
}

tacseg::RunConfig resolve_config(const CommonOpts& o) {
  tacseg::RunConfig cfg;
  if (!o.config_path.empty()) cfg = tacseg::load_config(o.config_path);
  for (const auto& [k, v] : o.overrides) tacseg::apply_config_kv(cfg, k, v);
  if (o.seed_given) {
    cfg.seed = o.seed;
    cfg.seed_set = true;
  }
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transformer-assisted cell segmentation, desk scale"};
  app.require_subcommand(1);

  // train
  CommonOpts train_opts;
  bool resume = false;
  CLI::App* train = app.add_subcommand("train", "train one variant");
  add_common(train, train_opts);
  train->add_flag("--resume", resume, "continue from the checkpoint in --out");

  // eval
  std::string eval_ckpt, eval_data;
  CommonOpts eval_opts;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", eval_ckpt, "checkpoint directory")
      ->required();
  eval->add_option("data", eval_data, "dataset split directory")->required();
  eval->add_option("--out", eval_opts.out_dir, "report output directory");

  // gradcheck
  std::string scope_arg = "all";
  std::uint64_t gc_seed = 1;
  int gc_seeds = 5;
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--scope", scope_arg,
                        "ops|fusion|block|end2end|all (default all)");
  gradcheck->add_option("--seed", gc_seed, "first seed (default 1)");
  gradcheck->add_option("--seeds", gc_seeds, "seeds per scope (default 5)");

  // gen-data
  std::uint64_t gd_seed = 0;
  bool gd_seed_given = false;
  std::size_t gd_n = 8;
  std::string gd_split = "train";
  int gd_h = 64, gd_w = 64;
  std::string gd_out = "data";
  bool gd_force = false;
  CLI::App* gendata =
      app.add_subcommand("gen-data", "write a synthetic PPM/PGM dataset");
  gendata
      ->add_option_function<std::uint64_t>(
          "--seed",
          [&](const std::uint64_t& v) {
            gd_seed = v;
            gd_seed_given = true;
          },
          "generator seed (required)")
      ->required();
  gendata->add_option("--n", gd_n, "number of images (default 8)");
  gendata->add_option("--split", gd_split, "split name (default train)");
  gendata->add_option("--height", gd_h, "image height (default 64)");
  gendata->add_option("--width", gd_w, "image width (default 64)");
  gendata->add_option("--out", gd_out, "dataset root (default data)");
  gendata->add_flag("--force", gd_force, "overwrite a non-empty split dir");

  // compare
  CommonOpts cmp_opts;
  CLI::App* compare = app.add_subcommand(
      "compare", "train vanilla and fused variants, report side by side");
  add_common(compare, cmp_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version land here too; keep their exit code 0 and fold
    // genuine command-line mistakes into the config-error code.
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) {
      tacseg::RunConfig cfg = resolve_config(train_opts);
      tacseg::cmd_train(cfg, cfg.out_dir, resume, std::cout);
      return kOk;
    }
    if (*eval) {
      const std::string out =
          eval_opts.out_dir.empty() ? "eval_report" : eval_opts.out_dir;
      tacseg::cmd_eval(eval_ckpt, eval_data, out, std::cout);
      return kOk;
    }
    if (*gradcheck) {
      std::vector<tacseg::GradScope> scopes;
      if (scope_arg == "all")
        scopes = {tacseg::GradScope::kOps, tacseg::GradScope::kFusion,
                  tacseg::GradScope::kBlock, tacseg::GradScope::kEnd2End};
      else
        scopes = {tacseg::grad_scope_from_name(scope_arg)};
      const auto out = tacseg::cmd_gradcheck(scopes, gc_seed, gc_seeds,
                                             std::cout);
      return out.pass ? kOk : kValidationFailure;
    }
    if (*gendata) {
      (void)gd_seed_given;
      tacseg::DataGenConfig dcfg;
      dcfg.height = static_cast<std::size_t>(gd_h);
      dcfg.width = static_cast<std::size_t>(gd_w);
      const auto dir = tacseg::cmd_gendata(gd_seed, gd_n, gd_split, dcfg,
                                           gd_out, gd_force);
      std::cout << "wrote " << gd_n << " images to " << dir.string() << "\n";
      return kOk;
    }
    if (*compare) {
      tacseg::RunConfig cfg = resolve_config(cmp_opts);
      tacseg::cmd_compare(cfg, cfg.out_dir, std::cout);
      return kOk;
    }
  } catch (const tacseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const tacseg::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kConfigError;
  } catch (const tacseg::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationFailure;
  }
  return kOk;
}
