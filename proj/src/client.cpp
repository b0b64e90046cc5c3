#include "fedgrpo/client.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>

#include "fedgrpo/rng.hpp"
#include "fedgrpo/text.hpp"

namespace fedgrpo {

Client::Client(int client_id, std::vector<QAItem> shard, ClientConfig config)
    : client_id_(client_id), shard_(std::move(shard)), config_(std::move(config)) {
    if (config_.knn_neighbors < 1) {
        throw std::invalid_argument("client: knn_neighbors must be at least 1");
    }
    for (const QAItem& item : shard_) {
        answer_index_[canonicalize_question(item.question)] = canonicalize_answer(item.answer);
    }
}

void Client::train_local_evaluator(std::uint64_t seed) {
    evaluator_seed_ = seed;
    evaluator_encoder_ = config_.encoder;
    evaluator_encoder_.seed = splitmix64(config_.encoder.seed ^ seed);

    index_.clear();
    index_.reserve(shard_.size());
    for (const QAItem& item : shard_) {
        IndexedItem entry;
        entry.item_id = item.id;
        entry.features = embed(item.question, evaluator_encoder_);
        entry.canonical_answer = canonicalize_answer(item.answer);
        index_.push_back(std::move(entry));
    }
    trained_ = true;
}

std::vector<const Client::IndexedItem*> Client::nearest_neighbors(
    const EmbeddingVector& query) const {
    std::vector<std::pair<double, const IndexedItem*>> scored;
    scored.reserve(index_.size());
    for (const IndexedItem& entry : index_) {
        scored.emplace_back(cosine_similarity(query, entry.features), &entry);
    }
    auto better = [](const auto& lhs, const auto& rhs) {
        if (lhs.first != rhs.first) return lhs.first > rhs.first;
        return lhs.second->item_id < rhs.second->item_id;
    };
    std::size_t keep = std::min<std::size_t>(config_.knn_neighbors, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(), better);
    std::vector<const IndexedItem*> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].second);
    return out;
}

std::string Client::predict_answer(const std::string& question) const {
    auto it = answer_index_.find(canonicalize_question(question));
    if (it != answer_index_.end()) return it->second;
    if (!trained_ || index_.empty()) return "";

    EmbeddingVector query = embed(question, evaluator_encoder_);
    std::map<std::string, double> votes;
    for (const IndexedItem* entry : nearest_neighbors(query)) {
        double w = std::max(cosine_similarity(query, entry->features), 0.0);
        votes[entry->canonical_answer] += w;
    }
    std::string best;
    double best_weight = -1.0;
    for (const auto& [answer, weight] : votes) {
        if (weight > best_weight) {  // map order gives ascending-answer ties
            best_weight = weight;
            best = answer;
        }
    }
    return best;
}

double Client::competence_on_neighborhood(
    const std::vector<std::pair<std::string, std::string>>& exemplars) const {
    if (exemplars.empty()) {
        throw std::invalid_argument("competence_on_neighborhood: empty neighborhood");
    }
    std::size_t correct = 0;
    for (const auto& [question, answer] : exemplars) {
        if (canonicalize_answer(predict_answer(question)) == canonicalize_answer(answer)) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(exemplars.size());
}

double Client::evaluate_answer_based(const std::string& question,
                                     const std::string& candidate) const {
    auto it = answer_index_.find(canonicalize_question(question));
    if (it == answer_index_.end()) {
        throw std::logic_error("evaluate_answer_based: question not in shard; gate first");
    }
    return canonicalize_answer(candidate) == it->second ? 1.0 : 0.0;
}

double Client::evaluate_model_based(const std::string& question,
                                    const std::string& candidate) const {
    if (!trained_) {
        throw std::logic_error("evaluate_model_based: evaluator not trained");
    }
    if (index_.empty()) return 0.5;  // uninformative prior

    EmbeddingVector query = embed(question, evaluator_encoder_);
    std::vector<const IndexedItem*> neighbors = nearest_neighbors(query);
    std::string canon = canonicalize_answer(candidate);

    double weight_sum = 0.0;
    double match_sum = 0.0;
    std::size_t match_count = 0;
    for (const IndexedItem* entry : neighbors) {
        double w = std::max(cosine_similarity(query, entry->features), 0.0);
        weight_sum += w;
        if (entry->canonical_answer == canon) {
            match_sum += w;
            ++match_count;
        }
    }
    double score;
    if (weight_sum <= 1e-12) {
        score = static_cast<double>(match_count) / static_cast<double>(neighbors.size());
    } else {
        score = match_sum / weight_sum;
    }
    return std::clamp(score, 0.0, 1.0);
}

Pathway Client::gate(const std::string& question) const {
    if (config_.force_model_eval) return Pathway::ME;
    return answer_index_.count(canonicalize_question(question)) ? Pathway::AE : Pathway::ME;
}

RewardSignal Client::score_request(const EvaluationRequest& request) const {
    RewardSignal signal;
    signal.client_id = client_id_;
    signal.request_id = request.request_id;
    signal.pathway = gate(request.question);
    signal.per_candidate.reserve(request.candidates.size());
    for (const std::string& candidate : request.candidates) {
        CandidateScore score;
        score.correctness = (signal.pathway == Pathway::AE)
                                ? evaluate_answer_based(request.question, candidate)
                                : evaluate_model_based(request.question, candidate);
        auto parsed = parse_integer_answer(candidate);
        bool in_range = parsed.has_value();
        if (in_range && config_.answer_range > 0) {
            in_range = *parsed >= 0 && *parsed < config_.answer_range;
        }
        score.format = in_range ? 1 : 0;
        signal.per_candidate.push_back(score);
    }
    return signal;
}

std::uint64_t Client::evaluator_state_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* data, std::size_t len) {
        const unsigned char* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix_bytes(&evaluator_seed_, sizeof(evaluator_seed_));
    for (const IndexedItem& entry : index_) {
        mix_bytes(&entry.item_id, sizeof(entry.item_id));
        mix_bytes(entry.features.values.data(), entry.features.values.size() * sizeof(double));
        mix_bytes(entry.canonical_answer.data(), entry.canonical_answer.size());
    }
    return h;
}

}  // namespace fedgrpo
