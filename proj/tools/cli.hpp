#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace compcate::cli {

// Runs one subcommand. args excludes the program name. Results go to `out`;
// failures print a single JSON line on `err` and return the error's exit code
// (2 usage, 3 config, 4 data, 5 numeric).
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Reads a TOML pipeline config and checks every key and value type against
// the known sections. Throws ConfigError naming the offending field path.
nlohmann::ordered_json load_config(const std::string& toml_path);

// Every section filled with its defaults.
nlohmann::ordered_json default_config();

}  // namespace compcate::cli
