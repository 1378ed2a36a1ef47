#include "phi4/harness.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for the renormalised lattice phi^4_3 dynamics"};
  app.require_subcommand(1);

  const std::vector<std::string> experiments = {"renorm-constants", "simulate", "converge",
                                                "model-check", "measure-check", "norm"};
  struct Options {
    std::string config;
    std::string out;
    std::string resume;
    std::uint64_t seed = 0;
    bool seed_set = false;
  };
  std::map<std::string, Options> opts;
  for (const auto& name : experiments) {
    auto* sub = app.add_subcommand(name);
    auto& o = opts[name];
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--out", o.out, "output directory");
    auto* seed_opt = sub->add_option("--seed", o.seed, "RNG seed override");
    if (name == "simulate")
      sub->add_option("--resume", o.resume, "continue from a checkpoint file");
    sub->callback([&o, seed_opt] { o.seed_set = seed_opt->count() > 0; });
  }

  CLI11_PARSE(app, argc, argv);

  const std::string chosen = app.get_subcommands().front()->get_name();
  const Options& o = opts[chosen];
  try {
    nlohmann::json config = nlohmann::json::object();
    if (!o.config.empty()) config = phi4::load_config_file(o.config);
    const auto outcome = phi4::run_experiment(
        chosen, std::move(config),
        o.seed_set ? std::optional<std::uint64_t>(o.seed) : std::nullopt,
        o.out.empty() ? std::nullopt : std::optional<std::string>(o.out),
        o.resume.empty() ? std::nullopt : std::optional<std::string>(o.resume));
    if (outcome.exit_code == 0)
      std::cout << "ok: results in " << outcome.out_dir << "\n";
    else
      std::cout << "check failed: see " << outcome.out_dir << "\n";
    return outcome.exit_code;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
