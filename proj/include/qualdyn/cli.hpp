#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qualdyn/analysis.hpp"
#include "qualdyn/dynamics.hpp"
#include "qualdyn/ingest.hpp"

namespace qualdyn {

enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_nonconverged = 2 };

// Entry point; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// One JSON object per line: a record per step, then a summary record.
std::string trace_jsonl(const System& system, const DynamicsOutcome& outcome, Mode mode);

// Header row plus one row per sweep start.
std::string sweep_csv(const System& system, const std::vector<SweepRow>& rows);

// Scenario `features` block for fitted score distributions.
std::string fit_snippet(const FitTable& fits, const std::vector<std::string>& groups);

// Comma-separated rates; throws ConfigError on malformed input or a count mismatch.
QualificationState parse_init(const std::string& text, std::size_t groups);

}  // namespace qualdyn
