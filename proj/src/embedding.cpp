#include "fedgrpo/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedgrpo/rng.hpp"
#include "fedgrpo/text.hpp"

namespace fedgrpo {

bool EmbeddingVector::is_zero() const {
    for (double v : values) {
        if (v != 0.0) return false;
    }
    return true;
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

void hash_feature(std::vector<double>& acc, const std::string& key, double weight,
                  const EncoderConfig& config) {
    std::uint64_t base = splitmix64(fnv1a64(key) ^ config.seed);
    double probe_weight = weight / std::sqrt(static_cast<double>(config.hash_probes));
    for (int j = 0; j < config.hash_probes; ++j) {
        std::uint64_t h = splitmix64(base + static_cast<std::uint64_t>(j));
        std::size_t bucket = static_cast<std::size_t>(h % acc.size());
        double sign = (h >> 63) ? -1.0 : 1.0;
        acc[bucket] += sign * probe_weight;
    }
}

}  // namespace

EmbeddingVector embed(const std::string& question, const EncoderConfig& config) {
    if (config.dim < 2) {
        throw std::invalid_argument("embed: dimension must be at least 2");
    }
    if (config.hash_probes < 1) {
        throw std::invalid_argument("embed: need at least one hash probe");
    }
    EmbeddingVector vec;
    vec.values.assign(config.dim, 0.0);

    std::vector<std::string> tokens = tokenize(question);
    if (tokens.empty()) {
        vec.empty_input = true;
        return vec;
    }
    if (config.include_token_features) {
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            hash_feature(vec.values, std::to_string(i) + ":" + tokens[i], 1.0, config);
        }
    }
    if (config.include_sequence_feature) {
        hash_feature(vec.values, "seq:" + canonicalize_question(question),
                     config.sequence_weight, config);
    }
    if (!config.include_token_features && !config.include_sequence_feature) {
        throw std::invalid_argument("embed: encoder has no feature sources enabled");
    }

    double norm_sq = 0.0;
    for (double v : vec.values) norm_sq += v * v;
    if (norm_sq > 0.0) {
        double inv = 1.0 / std::sqrt(norm_sq);
        for (double& v : vec.values) v *= inv;
    }
    return vec;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

Neighborhood retrieve_neighborhood(
    const EmbeddingVector& query,
    const std::vector<std::pair<std::int64_t, EmbeddingVector>>& aux_embeddings,
    std::size_t max_entries) {
    if (max_entries < 1) {
        throw std::invalid_argument("retrieve_neighborhood: need at least one entry");
    }
    Neighborhood result;
    result.entries.reserve(aux_embeddings.size());
    for (const auto& [id, vec] : aux_embeddings) {
        result.entries.emplace_back(id, cosine_similarity(query, vec));
    }
    auto better = [](const std::pair<std::int64_t, double>& lhs,
                     const std::pair<std::int64_t, double>& rhs) {
        if (lhs.second != rhs.second) return lhs.second > rhs.second;
        return lhs.first < rhs.first;
    };
    std::size_t keep = std::min(max_entries, result.entries.size());
    std::partial_sort(result.entries.begin(), result.entries.begin() + keep,
                      result.entries.end(), better);
    result.entries.resize(keep);
    return result;
}

}  // namespace fedgrpo
