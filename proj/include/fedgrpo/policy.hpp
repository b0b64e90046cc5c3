#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgrpo/embedding.hpp"

namespace fedgrpo {

// Dense row-major matrix, just large enough for policy parameters.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
    double frobenius_norm() const;
    bool all_finite() const;
};

using GradientVector = Matrix;

// Linear-softmax policy over a finite answer space: one logit row per
// answer, conditioned on a question feature vector; softmax temperature
// applied consistently at sampling and scoring so gradients match the
// sampled distribution.
struct PolicyParams {
    Matrix theta;  // answer_space.size() x feature_dim
    double temperature = 0.7;
    std::vector<std::string> answer_space;
};

// Zero-initialized parameters: the uniform policy.
PolicyParams make_uniform_policy(std::vector<std::string> answer_space,
                                 std::size_t feature_dim, double temperature);

// One sampled answer with the exact log-probability it was drawn with.
struct Candidate {
    std::string answer;
    std::size_t answer_index = 0;
    double log_prob = 0.0;
    EmbeddingVector features;
};

// i.i.d. draws from softmax(theta . features / temperature). Deterministic
// for a fixed seed: candidate g consumes the g-th unit() draw of Rng(seed)
// and walks the cumulative distribution. Non-finite logits throw.
std::vector<Candidate> sample_candidates(const PolicyParams& params,
                                         const EmbeddingVector& question_features,
                                         std::size_t group_size, std::uint64_t seed);

// Exact log softmax at `answer` (stable log-sum-exp). Unknown answers throw.
double log_prob(const PolicyParams& params, const EmbeddingVector& question_features,
                const std::string& answer);

// Analytic score function: row a = (1[a == answer] - pi(a)) * features / T.
GradientVector grad_log_prob(const PolicyParams& params,
                             const EmbeddingVector& question_features,
                             const std::string& answer);

// theta' = theta + step * direction. Value semantics; non-finite results throw.
PolicyParams apply_update(const PolicyParams& params, const GradientVector& direction,
                          double step);

// Argmax-probability answer, ties broken by ascending answer index.
std::string greedy_decode(const PolicyParams& params,
                          const EmbeddingVector& question_features);

// Versioned JSON checkpoint; reload reproduces greedy_decode bit-exactly.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace fedgrpo
