// factorlens {fit|synth-study|edr|real-protocol|verify} [--config file.json] [flags]
//
// Every flag has a config-file key of the same meaning; flags win over the
// file and unknown keys are rejected. Exit codes: 0 ok, 1 assertion failure,
// 2 input error, 3 non-convergence or inconclusive verification.

#include "cli_commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace cli = factorlens::cli;

int main(int argc, char** argv) {
  CLI::App app{"Factor-model covariance estimation with trace penalties"};
  app.require_subcommand(1);

  struct Bound {
    const cli::CommandSpec* spec;
    CLI::App* sub;
    std::string config_path;
    std::map<std::string, std::string> text;  // flag -> raw value
    std::map<std::string, CLI::Option*> opts;
  };
  std::vector<Bound> bound;
  bound.reserve(cli::commands().size());
  for (const auto& spec : cli::commands()) {
    Bound& b = bound.emplace_back();
    b.spec = &spec;
    b.sub = app.add_subcommand(spec.name, spec.description);
    b.sub->add_option("--config", b.config_path, "JSON config file; flags override it");
    for (const auto& o : spec.options) {
      if (o.kind == cli::OptionKind::kFlag)
        b.opts[o.flag] = b.sub->add_flag("--" + o.flag, o.help);
      else
        b.opts[o.flag] = b.sub->add_option("--" + o.flag, b.text[o.flag], o.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kInputError;
  }

  for (auto& b : bound) {
    if (!b.sub->parsed()) continue;
    cli::Config config = cli::Config::object();
    try {
      if (!b.config_path.empty()) config = cli::load_config_file(b.config_path);
      for (const auto& o : b.spec->options)
        if (b.opts[o.flag]->count() > 0)
          config[o.key] = cli::parse_flag_value(o.kind, b.text[o.flag]);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return cli::kInputError;
    }
    return cli::run_command(*b.spec, config, std::cout, std::cerr);
  }
  return cli::kInputError;
}
