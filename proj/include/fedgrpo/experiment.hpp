#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fedgrpo/config.hpp"
#include "fedgrpo/server.hpp"

namespace fedgrpo {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "FEDGRPO_OUTPUT_ROOT";

// Fully assembled experiment state, for callers that need to drive rounds
// themselves (tests, sweeps).
struct ExperimentSetup {
    TaskConfig task;
    CorpusBundle bundle;
    std::vector<Client> clients;  // evaluators trained
    PolicyParams initial_params;
    EncoderConfig retrieval_encoder;
    EncoderConfig policy_encoder;
    TrainerConfig trainer;
};

ExperimentSetup build_experiment(const ExperimentConfig& config);

struct RunResult {
    std::string output_dir;
    EvalPoint final_eval;
    std::vector<EvalPoint> eval_curve;
    std::int64_t bytes_up = 0;
    std::int64_t bytes_down = 0;
    std::vector<Message> uplink_log;  // for audits
};

// Executes one experiment and writes rounds.jsonl, summary.csv,
// traffic.csv, eval_curve.csv, comm_summary.json, manifest.json and policy
// checkpoints under the resolved output directory. A lockfile serializes
// runs per directory. Relative output dirs resolve under $FEDGRPO_OUTPUT_ROOT
// when that is set.
RunResult run_experiment(const ExperimentConfig& config);

std::string resolve_output_dir(const std::string& dir);

// Runs the sweep (param is one of K, M, beta, G), one run per value using
// the same base seed, writing each run under <output_dir>/<param>_<value>
// plus a combined ablation.csv.
struct AblationRow {
    std::string param;
    double value = 0.0;
    double pass1_overall = 0.0;
    std::vector<double> pass1_per_domain;
};
std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const std::string& param,
                                      const std::vector<double>& values);

// Re-renders a results table from one or more finished run directories and
// appends a mean/std aggregate over them. Never re-runs anything.
int report_runs(const std::vector<std::string>& run_dirs, std::ostream& out);

}  // namespace fedgrpo
