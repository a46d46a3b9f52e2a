// stem: command-line front end.
//
//   stem em      --input X.stem --k 256 --out run/
//   stem invert  --input video.stem --variant stem --steps 50 --guidance 7.5
//   stem bench   --set frames=8 --set height=64 --set width=64
//   stem sweep-k --input video.stem --k 128,256,512
//   stem metrics --input a.stem --reference b.stem [--flow flow.stem]
//   stem gen     --kind moving_blob --out data/
//
// Settings are applied in order: STEM_THREADS, --config file, --set pairs,
// then the named flags, so a flag always wins over the file.
#include "stem/commands.hpp"
#include "stem/tensor_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;  // key, value in config terms
};

void report_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

// Registers `--name VALUE` mapping to config key `key`.
void add_setting(CLI::App* app, Options& opts, const std::string& flag, const std::string& key,
                 const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&opts, key](const std::string& v) { opts.flags.emplace_back(key, v); }, help);
}

void add_common(CLI::App* app, Options& opts) {
  app->add_option("--config", opts.config, "key = value config file");
  app->add_option("--set", opts.sets, "override any config key (KEY=VALUE), repeatable");
  add_setting(app, opts, "--seed", "seed", "random seed");
  add_setting(app, opts, "--threads", "threads", "worker threads (fallback: STEM_THREADS)");
  add_setting(app, opts, "--out", "out", "output directory");
  add_setting(app, opts, "--variant", "variant",
              "self_only | two_frame_fatezero | two_frame_tuneavideo | all_frame | stem");
  add_setting(app, opts, "--k", "k", "number of bases, or a comma list for sweeps");
  add_setting(app, opts, "--tau", "tau", "EM temperature");
  add_setting(app, opts, "--iters", "iters", "EM iterations R");
  add_setting(app, opts, "--steps", "steps", "DDIM inference steps");
  add_setting(app, opts, "--guidance", "guidance", "classifier-free guidance scale, or none");
  add_setting(app, opts, "--input", "input", "input tensor file");
}

stem::ExperimentConfig build_config(const Options& opts) {
  stem::ExperimentConfig cfg;
  if (const char* env = std::getenv("STEM_THREADS"); env != nullptr && *env != '\0') {
    cfg.set("threads", env);
  }
  if (!opts.config.empty()) cfg.apply(stem::load_config_file(opts.config));
  for (const std::string& pair : opts.sets) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw stem::ConfigError("--set expects KEY=VALUE, got '" + pair + "'");
    cfg.set(pair.substr(0, eq), pair.substr(eq + 1));
  }
  for (const auto& [key, value] : opts.flags) cfg.set(key, value);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial-temporal EM attention toolkit"};
  app.require_subcommand(1);

  Options opts;
  using Command = std::function<stem::CommandResult(const stem::ExperimentConfig&)>;
  std::vector<std::pair<CLI::App*, Command>> commands;

  auto* em = app.add_subcommand("em", "estimate EM bases for a feature tensor");
  add_common(em, opts);
  commands.emplace_back(em, stem::cmd_em);

  auto* invert = app.add_subcommand("invert", "DDIM-invert a latent video and reconstruct it");
  add_common(invert, opts);
  add_setting(invert, opts, "--predictor", "predictor", "zero | linear | attention_net");
  commands.emplace_back(invert, stem::cmd_invert);

  auto* bench = app.add_subcommand("bench", "FLOP counts and timings for every attention variant");
  add_common(bench, opts);
  add_setting(bench, opts, "--repeats", "repeats", "timed runs per variant (>= 5)");
  commands.emplace_back(bench, stem::cmd_bench);

  auto* sweep = app.add_subcommand("sweep-k", "reconstruction quality across K");
  add_common(sweep, opts);
  add_setting(sweep, opts, "--predictor", "predictor", "zero | linear | attention_net");
  commands.emplace_back(sweep, stem::cmd_sweep_k);

  auto* metrics = app.add_subcommand("metrics", "PSNR, SSIM, warp error and cosine maps");
  add_common(metrics, opts);
  add_setting(metrics, opts, "--reference", "reference", "reference video");
  add_setting(metrics, opts, "--flow", "flow", "flow field (N-1, H, W, 2); enables warp error");
  add_setting(metrics, opts, "--features-a", "features_a", "first feature tensor for cosine maps");
  add_setting(metrics, opts, "--features-b", "features_b", "second feature tensor for cosine maps");
  add_setting(metrics, opts, "--peak", "peak", "peak signal value");
  metrics->add_flag_callback("--warp", [&opts] { opts.flags.emplace_back("warp", "true"); },
                             "request warp error (needs --flow)");
  commands.emplace_back(metrics, stem::cmd_metrics);

  auto* gen = app.add_subcommand("gen", "write a synthetic dataset");
  add_common(gen, opts);
  add_setting(gen, opts, "--kind", "kind", "clusters | perturbed_video | moving_blob");
  add_setting(gen, opts, "--sigma", "sigma", "noise standard deviation");
  commands.emplace_back(gen, stem::gen_synthetic);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage_error", e.what());
    return 2;
  } catch (const stem::Error& e) {
    // Flag callbacks never throw, but keep the contract if that changes.
    report_error(e.kind(), e.what());
    return 1;
  }

  try {
    const stem::ExperimentConfig cfg = build_config(opts);
    for (const auto& [sub, run] : commands) {
      if (!sub->parsed()) continue;
      const stem::CommandResult result = run(cfg);
      for (const std::string& w : result.warnings) {
        std::cerr << nlohmann::json{{"warning", w}}.dump() << std::endl;
      }
      nlohmann::json files = nlohmann::json::array();
      for (const auto& f : result.files) files.push_back(f.string());
      for (const auto& f : result.timing_files) files.push_back(f.string());
      std::cout << nlohmann::json{{"command", sub->get_name()}, {"files", files}}.dump() << std::endl;
    }
  } catch (const stem::Error& e) {
    report_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("internal_error", e.what());
    return 1;
  }
  return 0;
}
