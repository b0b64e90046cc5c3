#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fedgrpo/client.hpp"
#include "fedgrpo/corpus.hpp"
#include "fedgrpo/netsim.hpp"
#include "fedgrpo/policy.hpp"
#include "json.hpp"

namespace fedgrpo {

// Which axis the group-relative normalization runs over. `candidate`
// averages the expert scores per candidate and normalizes across the
// candidate group; `expert` normalizes each candidate's scores across the
// experts (the per-candidate expert rows then sum to zero, so this mode
// produces no net update and exists for comparison).
enum class NormalizationAxis { candidate, expert };

enum class ExpertSelection { competence, random };

// The experts chosen for one question.
struct ExpertSet {
    std::int64_t question_id = 0;
    std::vector<int> members;            // selection order
    std::map<int, double> competence;    // client id -> score
};

// Exact Top-M by score, descending, ties by ascending client id; all
// clients when fewer than M exist.
std::vector<int> select_experts(const std::map<int, double>& competence, int num_experts);

// raw = c_group * correctness + c_format * format.
double combine_rewards(double correctness, int format, double c_group, double c_format);

// R_i = (raw_i - mean) / (population_std + epsilon). Empty input or
// non-positive epsilon throws; non-finite input throws.
std::vector<double> group_relative_normalize(const std::vector<double>& raw, double epsilon);

struct GroupRewards {
    std::vector<std::vector<double>> raw;  // [candidate][expert], combined rewards
    double mu = 0.0;
    double sigma = 0.0;
    std::vector<double> normalized;                      // candidate axis
    std::vector<std::vector<double>> normalized_matrix;  // expert axis
    double epsilon = 1e-4;
    NormalizationAxis axis = NormalizationAxis::candidate;
};

struct RoundRecord {
    int round = 0;
    std::uint64_t round_seed = 0;
    std::int64_t question_id = 0;
    ExpertSet expert_set;
    GroupRewards group;
    double update_norm = 0.0;
    std::int64_t bytes_up = 0;
    std::int64_t bytes_down = 0;
};

nlohmann::json round_record_to_json(const RoundRecord& record);

struct EvalPoint {
    int round = 0;
    double pass1_overall = 0.0;
    std::vector<double> pass1_per_domain;
};

struct TrainerConfig {
    int neighborhood_size = 20;  // L
    int num_experts = 2;         // M
    int group_size = 8;          // G
    int rounds = 320;            // T
    double epsilon = 1e-4;
    double learning_rate = 0.1;
    double reward_coeff = 8.0;
    double format_coeff = 1.0;
    NormalizationAxis axis = NormalizationAxis::candidate;
    ExpertSelection selection = ExpertSelection::competence;
    double competence_ema = 0.0;  // 0 disables the smoothed-competence cache
    int eval_every = 20;
    std::uint64_t seed = 0;  // master seed for per-round streams
};

// The orchestrator: owns the single mutable policy, drives each round
// through the bus, and records everything. Rounds are strictly sequential.
class Trainer {
public:
    Trainer(TrainerConfig config, const CorpusBundle* bundle, std::vector<Client>* clients,
            PolicyParams initial_params, EncoderConfig retrieval_encoder,
            EncoderConfig policy_encoder, MessageBus* bus);

    // One full protocol round: sample question, retrieve neighborhood,
    // probe all clients, select experts, sample the candidate group,
    // collect expert rewards, normalize, step the policy. The round seed
    // fully determines the round given the incoming state.
    RoundRecord run_round(int round_index, std::uint64_t round_seed);

    // Derived seed for round t: splitmix64(seed ^ kRoundSeedTag ^ t).
    static std::uint64_t round_seed_for(std::uint64_t master_seed, int round_index);

    struct TrainingResult {
        PolicyParams final_params;
        std::vector<RoundRecord> records;
        std::vector<EvalPoint> eval_curve;
    };

    // Runs config.rounds rounds; evaluates pass@1 at round 0, every
    // eval_every rounds and at the final round. The optional hook fires
    // after each round (checkpointing lives outside this class).
    TrainingResult run_training(
        const std::function<void(int, const PolicyParams&)>& after_round = nullptr);

    // Greedy pass@1 on the sealed-off test set, overall and per domain.
    EvalPoint evaluate(int round_index) const;

    const PolicyParams& params() const { return params_; }

private:
    EmbeddingVector policy_features(const std::string& question) const;

    TrainerConfig config_;
    const CorpusBundle* bundle_;
    std::vector<Client>* clients_;
    PolicyParams params_;
    EncoderConfig retrieval_encoder_;
    EncoderConfig policy_encoder_;
    MessageBus* bus_;
    // Pre-computed auxiliary embeddings (id, vector) plus exemplar texts.
    std::vector<std::pair<std::int64_t, EmbeddingVector>> aux_embeddings_;
    std::map<std::int64_t, std::pair<std::string, std::string>> aux_items_;
    std::map<int, double> competence_ema_;  // only used when config.competence_ema > 0
};

inline constexpr std::uint64_t kRoundSeedTag = 0x726f756e64ULL;

}  // namespace fedgrpo
