#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "afforda/backends.hpp"
#include "afforda/contact.hpp"
#include "afforda/motion.hpp"
#include "afforda/verifier.hpp"

namespace afforda {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitBackend = 3 };

// Settings read from --config (JSON). Every section and key is optional.
struct RunConfig {
  ContactConfig contact;
  MotionConfig motion;
  LoopConfig loop;
  OpenAIBackend::Options backend;
  // Region mask -> heatmap conversion for predictions.
  int grid_step = 4;
  double heatmap_sigma = 10.0;
};

// Throws ParseError on unknown keys or mistyped values.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Exit code for an error escaping a command.
int exit_code_for(const Error& e);

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace afforda
