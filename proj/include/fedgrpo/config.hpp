#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgrpo/corpus.hpp"
#include "fedgrpo/server.hpp"

namespace fedgrpo {

enum class EvaluationMode { mixed, me_only };

// Everything one experiment needs. Defaults follow the reference protocol
// settings: L=20, M=2, G=8, T=320, beta=0.1, temperature=0.7, reward
// coefficients 8 and 1.
struct ExperimentConfig {
    // corpus
    long long modulus = 7;
    std::vector<std::string> domains = {"add", "sub", "mul"};
    int count_per_domain = 800;
    std::string corpus_file;  // when set, replay items from this jsonl dump
    std::uint64_t seed = 1;
    // bundle split
    int aux_size = 100;
    int server_size = 400;
    int test_size = 300;
    // partition
    int num_clients = 8;
    PartitionMode partition_mode = PartitionMode::dirichlet;
    double beta = 0.1;
    // protocol
    int neighborhood_size = 20;  // L
    int num_experts = 2;         // M
    int group_size = 8;          // G
    int rounds = 320;            // T
    double epsilon = 1e-4;
    double learning_rate = 0.1;
    double temperature = 0.7;
    double reward_coeff = 8.0;
    double format_coeff = 1.0;
    NormalizationAxis normalization_axis = NormalizationAxis::candidate;
    ExpertSelection expert_selection = ExpertSelection::competence;
    double competence_ema = 0.0;  // 0 = recompute per question (default)
    int eval_every = 20;
    EvaluationMode evaluation_mode = EvaluationMode::mixed;
    // policy / encoders
    int embed_dim = 64;
    int knn_neighbors = 5;
    // outputs
    int checkpoint_every = 0;  // 0 = final checkpoint only
    std::string output_dir = "runs/default";
};

// Parses "key = value" lines ('#' starts a comment). Unknown keys are
// rejected. `overrides` entries look like "key=value" and win over the
// file, which wins over defaults. An empty path applies defaults only.
ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {});

// Applies one "key=value" assignment. Shared by file and flag parsing.
void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value);

// Enforces the cross-field invariants (1 <= M <= K, L >= 1, G >= 1,
// epsilon > 0, finite eta, sizes consistent, known domains...). Throws
// std::invalid_argument with an actionable message.
void validate_config(const ExperimentConfig& config);

// Seed derivation for the sub-streams, all splitmix64(seed ^ tag):
std::uint64_t corpus_seed(const ExperimentConfig& config);
std::uint64_t partition_seed(const ExperimentConfig& config);
std::uint64_t retrieval_encoder_seed(const ExperimentConfig& config);
std::uint64_t policy_encoder_seed(const ExperimentConfig& config);
std::uint64_t client_evaluator_seed(const ExperimentConfig& config, int client_id);

// Round-trip support for manifests.
ExperimentConfig config_from_map(const std::vector<std::pair<std::string, std::string>>& entries);
std::vector<std::pair<std::string, std::string>> config_to_map(const ExperimentConfig& config);

}  // namespace fedgrpo
