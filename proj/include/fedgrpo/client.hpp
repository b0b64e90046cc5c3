#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedgrpo/corpus.hpp"
#include "fedgrpo/embedding.hpp"

namespace fedgrpo {

enum class Pathway { AE, ME };

// One scoring request from the server: the question and the sampled
// candidate group. Carries no labels.
struct EvaluationRequest {
    std::int64_t request_id = 0;
    std::string question;
    std::vector<std::string> candidates;
};

struct CandidateScore {
    double correctness = 0.0;  // AE: exactly 0 or 1; ME: in [0, 1]
    int format = 0;            // 1 iff the candidate parses into the answer range
};

// The only thing a client ever uploads about a candidate group: scalars.
struct RewardSignal {
    int client_id = 0;
    std::int64_t request_id = 0;
    std::vector<CandidateScore> per_candidate;
    Pathway pathway = Pathway::ME;  // the gating value actually used
};

struct ClientConfig {
    int knn_neighbors = 5;
    bool force_model_eval = false;  // experiment mode without answer lookups
    long long answer_range = 0;     // task modulus; 0 disables the range check
    EncoderConfig encoder;          // evaluator embedding family (seed mixed per client)
};

// One simulated client. Owns its shard; after train_local_evaluator all
// scoring entry points are const and safe to call concurrently.
class Client {
public:
    Client(int client_id, std::vector<QAItem> shard, ClientConfig config);

    // Builds the evaluator's retrieval index from the shard only.
    // Deterministic for a fixed seed and idempotent; an empty shard leaves
    // the evaluator in the uninformative-prior state.
    void train_local_evaluator(std::uint64_t seed);

    // Fraction of exemplars the client answers correctly: shard lookup when
    // the question is in the shard, otherwise the evaluator's greedy
    // prediction. Empty neighborhoods are a caller error.
    double competence_on_neighborhood(
        const std::vector<std::pair<std::string, std::string>>& exemplars) const;

    // Exact-match check against the shard's stored answer, after
    // canonicalization on both sides. The question must be in the shard.
    double evaluate_answer_based(const std::string& question,
                                 const std::string& candidate) const;

    // k-NN consensus over the shard: the knn_neighbors most similar shard
    // questions vote with weight max(similarity, 0); the score is the
    // weighted fraction whose stored answer matches the candidate, clamped
    // to [0, 1]. All-zero weights fall back to the unweighted fraction.
    // Returns 0.5 when the shard is empty (see evaluator_uninformative()).
    double evaluate_model_based(const std::string& question,
                                const std::string& candidate) const;

    // AE iff the canonicalized question has a stored answer, unless
    // force_model_eval pins every question to ME.
    Pathway gate(const std::string& question) const;

    // Scores the whole candidate group along the gated pathway and attaches
    // format scores (integer parse + answer-range check).
    RewardSignal score_request(const EvaluationRequest& request) const;

    int id() const { return client_id_; }
    const std::vector<QAItem>& shard() const { return shard_; }
    bool evaluator_trained() const { return trained_; }
    bool evaluator_uninformative() const { return trained_ && index_.empty(); }

    // FNV-1a over the evaluator index bytes; equal hashes for retrains with
    // the same seed.
    std::uint64_t evaluator_state_hash() const;

private:
    struct IndexedItem {
        std::int64_t item_id;
        EmbeddingVector features;
        std::string canonical_answer;
    };

    // Shard lookup, else greedy evaluator prediction (highest-weight answer
    // among the nearest neighbors, ties by ascending answer string). Empty
    // string when nothing is known.
    std::string predict_answer(const std::string& question) const;

    std::vector<const IndexedItem*> nearest_neighbors(const EmbeddingVector& query) const;

    int client_id_;
    std::vector<QAItem> shard_;
    ClientConfig config_;
    std::map<std::string, std::string> answer_index_;  // canonical question -> canonical answer
    bool trained_ = false;
    std::uint64_t evaluator_seed_ = 0;
    EncoderConfig evaluator_encoder_;
    std::vector<IndexedItem> index_;
};

}  // namespace fedgrpo
