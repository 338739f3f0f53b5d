#include "cli.hpp"

#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cpdp/error.hpp"
#include "cpdp/harness.hpp"

namespace cpdp::cli {

namespace {

constexpr int kUsageExit = 2;
constexpr int kFailureExit = 1;

void print_error(std::ostream& err, std::string_view code, const std::string& message) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  err << "error " << code << ": " << flat << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constrained probabilistic prediction of human arm motion"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("--mode", mode, "Prediction mode")
        ->check(CLI::IsMember({"xyz", "ja", "constr"}));
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--out", out_dir, "Output directory");
  };
  auto* fit = app.add_subcommand("fit", "Fit per-angle and task-space GP models");
  auto* predict = app.add_subcommand("predict", "Predict clouds over the horizon");
  auto* synth = app.add_subcommand("synth", "Generate the synthetic trajectory suite");
  auto* evaluate = app.add_subcommand("evaluate", "Compare the prediction modes");
  for (auto* sub : {fit, predict, synth, evaluate}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "E_USAGE", e.what());
    return kUsageExit;
  }

  try {
    harness::RunConfig cfg = harness::load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.output_dir = *out_dir;
    if (mode) {
      cfg.prediction.mode = predict::parse_mode(*mode);
      cfg.evaluate.modes = {cfg.prediction.mode};
    }

    std::string summary;
    if (fit->parsed()) {
      summary = harness::run_fit(cfg);
    } else if (predict->parsed()) {
      summary = harness::run_predict(cfg);
    } else if (synth->parsed()) {
      summary = harness::run_synth(cfg);
    } else {
      summary = harness::run_evaluate(cfg);
    }
    out << summary << "\n";
    return 0;
  } catch (const Error& e) {
    print_error(err, code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    print_error(err, "E_INTERNAL", e.what());
  }
  return kFailureExit;
}

}  // namespace cpdp::cli
