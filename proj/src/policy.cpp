#include "fedgrpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "fedgrpo/rng.hpp"
#include "json.hpp"

namespace fedgrpo {

double Matrix::frobenius_norm() const {
    double sum = 0.0;
    for (double v : data) sum += v * v;
    return std::sqrt(sum);
}

bool Matrix::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

void validate_params(const PolicyParams& params) {
    if (params.answer_space.empty()) {
        throw std::invalid_argument("policy: empty answer space");
    }
    if (!(params.temperature > 0.0)) {
        throw std::invalid_argument("policy: temperature must be positive");
    }
    if (params.theta.rows != params.answer_space.size()) {
        throw std::invalid_argument("policy: theta rows must match answer space");
    }
}

std::size_t answer_index_of(const PolicyParams& params, const std::string& answer) {
    for (std::size_t i = 0; i < params.answer_space.size(); ++i) {
        if (params.answer_space[i] == answer) return i;
    }
    throw std::invalid_argument("policy: answer '" + answer + "' not in answer space");
}

// Logits theta . f / T; fails fast on non-finite values.
std::vector<double> logits_of(const PolicyParams& params, const EmbeddingVector& features) {
    validate_params(params);
    if (features.dim() != params.theta.cols) {
        throw std::invalid_argument("policy: feature dimension mismatch");
    }
    std::vector<double> logits(params.theta.rows, 0.0);
    for (std::size_t r = 0; r < params.theta.rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < params.theta.cols; ++c) {
            dot += params.theta.at(r, c) * features.values[c];
        }
        logits[r] = dot / params.temperature;
        if (!std::isfinite(logits[r])) {
            throw std::runtime_error("policy: non-finite logit");
        }
    }
    return logits;
}

std::vector<double> log_softmax_of(const std::vector<double>& logits) {
    double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - max_logit);
    double log_z = max_logit + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
    return out;
}

}  // namespace

PolicyParams make_uniform_policy(std::vector<std::string> answer_space,
                                 std::size_t feature_dim, double temperature) {
    std::set<std::string> unique(answer_space.begin(), answer_space.end());
    if (unique.size() != answer_space.size()) {
        throw std::invalid_argument("policy: duplicate answers in answer space");
    }
    PolicyParams params;
    params.theta = Matrix(answer_space.size(), feature_dim);
    params.temperature = temperature;
    params.answer_space = std::move(answer_space);
    validate_params(params);
    return params;
}

std::vector<Candidate> sample_candidates(const PolicyParams& params,
                                         const EmbeddingVector& question_features,
                                         std::size_t group_size, std::uint64_t seed) {
    if (group_size < 1) {
        throw std::invalid_argument("sample_candidates: group size must be at least 1");
    }
    std::vector<double> log_probs = log_softmax_of(logits_of(params, question_features));
    std::vector<double> probs(log_probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(log_probs[i]);

    Rng rng(seed);
    std::vector<Candidate> group;
    group.reserve(group_size);
    for (std::size_t g = 0; g < group_size; ++g) {
        double u = rng.unit();
        double cum = 0.0;
        std::size_t chosen = probs.size() - 1;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum) {
                chosen = i;
                break;
            }
        }
        Candidate cand;
        cand.answer = params.answer_space[chosen];
        cand.answer_index = chosen;
        cand.log_prob = log_probs[chosen];
        cand.features = question_features;
        group.push_back(std::move(cand));
    }
    return group;
}

double log_prob(const PolicyParams& params, const EmbeddingVector& question_features,
                const std::string& answer) {
    std::size_t idx = answer_index_of(params, answer);
    return log_softmax_of(logits_of(params, question_features))[idx];
}

GradientVector grad_log_prob(const PolicyParams& params,
                             const EmbeddingVector& question_features,
                             const std::string& answer) {
    std::size_t idx = answer_index_of(params, answer);
    std::vector<double> log_probs = log_softmax_of(logits_of(params, question_features));

    GradientVector grad(params.theta.rows, params.theta.cols);
    for (std::size_t r = 0; r < grad.rows; ++r) {
        double coeff = ((r == idx) ? 1.0 : 0.0) - std::exp(log_probs[r]);
        for (std::size_t c = 0; c < grad.cols; ++c) {
            grad.at(r, c) = coeff * question_features.values[c] / params.temperature;
        }
    }
    return grad;
}

PolicyParams apply_update(const PolicyParams& params, const GradientVector& direction,
                          double step) {
    validate_params(params);
    if (!params.theta.same_shape(direction)) {
        throw std::invalid_argument("apply_update: shape mismatch");
    }
    if (!std::isfinite(step)) {
        throw std::invalid_argument("apply_update: step must be finite");
    }
    PolicyParams next = params;
    for (std::size_t i = 0; i < next.theta.data.size(); ++i) {
        next.theta.data[i] += step * direction.data[i];
    }
    if (!next.theta.all_finite()) {
        throw std::runtime_error("apply_update: non-finite parameter");
    }
    return next;
}

std::string greedy_decode(const PolicyParams& params,
                          const EmbeddingVector& question_features) {
    std::vector<double> logits = logits_of(params, question_features);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return params.answer_space[best];
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["temperature"] = params.temperature;
    j["answer_space"] = params.answer_space;
    j["rows"] = params.theta.rows;
    j["cols"] = params.theta.cols;
    j["theta"] = params.theta.data;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("save_checkpoint: cannot open " + path);
    }
    out << j.dump(2) << "\n";
}

PolicyParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_checkpoint: cannot open " + path);
    }
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("version").get<int>() != 1) {
        throw std::runtime_error("load_checkpoint: unsupported version");
    }
    PolicyParams params;
    params.temperature = j.at("temperature").get<double>();
    params.answer_space = j.at("answer_space").get<std::vector<std::string>>();
    params.theta.rows = j.at("rows").get<std::size_t>();
    params.theta.cols = j.at("cols").get<std::size_t>();
    params.theta.data = j.at("theta").get<std::vector<double>>();
    if (params.theta.data.size() != params.theta.rows * params.theta.cols) {
        throw std::runtime_error("load_checkpoint: inconsistent theta shape");
    }
    validate_params(params);
    return params;
}

}  // namespace fedgrpo
