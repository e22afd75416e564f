#include <iostream>

#include <CLI11.hpp>

#include "motionfuse/cli/commands.hpp"

using namespace mfuse;

int main(int argc, char** argv) {
  CLI::App app{"Motion-appearance fusion for moving-object segmentation on synthetic scenes"};
  std::string command, config;
  cli::Overrides o;
  app.add_option("command", command, "gen | train | eval | infer | bench")
      ->required()
      ->check(CLI::IsMember({"gen", "train", "eval", "infer", "bench"}));
  app.add_option("--config", config, "JSON run configuration");
  auto opt = [&](const char* name, auto& field, const char* help) {
    return app.add_option_function<typename std::decay_t<decltype(field)>::value_type>(
        name, [&field](const auto& v) { field = v; }, help);
  };
  opt("--seed", o.seed, "random seed");
  opt("--out", o.out, "output directory (must be absent or empty)");
  opt("--mechanism", o.mechanism, "fusion mechanism")->check(CLI::IsMember({"single", "d", "e", "ed", "mbt"}));
  opt("--modality", o.modality, "input of a one-stream model")->check(CLI::IsMember({"rgb", "of", "sf", "emb"}));
  opt("--p-neg", o.p_neg, "negative-example probability")->check(CLI::Range(0.0, 1.0));
  opt("--n", o.n, "number of samples (gen, eval, infer)");
  opt("--max-steps", o.max_steps, "cap on training steps");
  opt("--checkpoint", o.checkpoint, "model checkpoint (eval, infer)");
  opt("--rgb-checkpoint", o.rgb_checkpoint, "appearance checkpoint (fusion training)");
  opt("--motion-checkpoint", o.motion_checkpoint, "motion checkpoint (fusion training)");
  opt("--dataset", o.dataset, "directory written by gen (eval, infer)");
  opt("--predictions", o.predictions, "prediction dump to score (eval)");
  app.add_flag("--overlays", o.overlays, "write mask overlay PNGs (infer)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  }
  try {
    const auto j = config.empty() ? nlohmann::json::object() : cli::read_json(config);
    return cli::run_command(cli::resolve(command, j, o), std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return cli::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
}
