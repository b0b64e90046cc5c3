#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace fedgrpo {

// Unit-norm feature vector, or the zero vector for degenerate input.
struct EmbeddingVector {
    std::vector<double> values;
    bool empty_input = false;  // set when encoding saw no tokens

    std::size_t dim() const { return values.size(); }
    bool is_zero() const;
};

// Seeded feature-hashing encoder. The recipe, which tests reimplement as an
// oracle:
//   tokens = tokenize(question); position-tagged keys "i:token";
//   each key is hashed hash_probes times: for probe j,
//     h = splitmix64(splitmix64(fnv1a64(key) ^ seed) + j);
//     bucket = h % dim; sign = +1 if top bit of h clear else -1;
//     accumulate sign * weight / sqrt(hash_probes) at bucket
//   (multiple probes spread each feature so two distinct keys almost never
//   overlap entirely);
//   optionally one extra feature for the whole canonical question under key
//   "seq:<canonical>" with weight sequence_weight (gives distinct questions
//   near-orthogonal components, which the linear policy needs to separate
//   questions whose token bags coincide additively);
//   L2-normalize.
struct EncoderConfig {
    std::size_t dim = 64;
    std::uint64_t seed = 0;
    int hash_probes = 4;
    bool include_token_features = true;
    bool include_sequence_feature = false;
    double sequence_weight = 2.0;
};

std::uint64_t fnv1a64(const std::string& text);

// Deterministic for fixed (question, config); unit-norm output; empty token
// sequences yield the zero vector with empty_input set. dim < 2 throws.
EmbeddingVector embed(const std::string& question, const EncoderConfig& config);

// Symmetric; 1.0 for identical unit vectors; 0.0 when either side is the
// zero vector. Dimension mismatch throws std::invalid_argument.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Retrieval result: entries sorted by similarity descending, ties by
// ascending id; at most L of them.
struct Neighborhood {
    std::vector<std::pair<std::int64_t, double>> entries;
};

// Exhaustive scan over the auxiliary embeddings; returns min(L, |aux|)
// entries. L < 1 throws; an empty auxiliary set yields an empty result.
Neighborhood retrieve_neighborhood(
    const EmbeddingVector& query,
    const std::vector<std::pair<std::int64_t, EmbeddingVector>>& aux_embeddings,
    std::size_t max_entries);

}  // namespace fedgrpo
