#pragma once

// Subcommands of the factorlens executable. Each command takes a resolved
// configuration (JSON file merged with command-line flags, flags winning) and
// returns a process exit code.

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace factorlens::cli {

using Config = nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kAssertionFail = 1,
  kInputError = 2,
  kConvergence = 3,  // solver non-convergence or inconclusive verification
};

/// How a flag's text is turned into a config value.
enum class OptionKind { kString, kInt, kDouble, kFlag, kIntList, kDoubleList, kStringList, kGrid };

struct OptionSpec {
  std::string flag;  // without leading dashes
  std::string key;   // config key
  OptionKind kind;
  std::string help;
};

struct CommandSpec {
  std::string name;
  std::string description;
  std::vector<OptionSpec> options;
  std::function<int(const Config&, std::ostream& out)> run;
};

const std::vector<CommandSpec>& commands();

/// Reads a JSON object from a file. Throws InputError.
Config load_config_file(const std::string& path);

/// Converts a flag's text into the config value for its kind. Throws InputError.
Config parse_flag_value(OptionKind kind, const std::string& text);

/// Throws InputError naming the first key not accepted by the command.
void reject_unknown_keys(const CommandSpec& command, const Config& config);

/// Runs the command, mapping exceptions to exit codes with a message on err.
int run_command(const CommandSpec& command, const Config& config, std::ostream& out,
                std::ostream& err);

/// "a:step:b" (inclusive range) or "a,b,c", or the same as a JSON array or
/// {"start", "step", "stop"} object.
std::vector<double> parse_grid(const Config& value, const std::string& key);

int cmd_fit(const Config& config, std::ostream& out);
int cmd_synth_study(const Config& config, std::ostream& out);
int cmd_edr(const Config& config, std::ostream& out);
int cmd_real_protocol(const Config& config, std::ostream& out);
int cmd_verify(const Config& config, std::ostream& out);

}  // namespace factorlens::cli
