#include "fedgrpo/server.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedgrpo/rng.hpp"
#include "fedgrpo/text.hpp"

namespace fedgrpo {

std::vector<int> select_experts(const std::map<int, double>& competence, int num_experts) {
    if (num_experts < 1) {
        throw std::invalid_argument("select_experts: need at least one expert");
    }
    if (competence.empty()) {
        throw std::invalid_argument("select_experts: empty competence map");
    }
    std::vector<std::pair<int, double>> ranked(competence.begin(), competence.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& lhs, const auto& rhs) {
        if (lhs.second != rhs.second) return lhs.second > rhs.second;
        return lhs.first < rhs.first;
    });
    std::size_t keep = std::min<std::size_t>(num_experts, ranked.size());
    std::vector<int> members;
    members.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) members.push_back(ranked[i].first);
    return members;
}

double combine_rewards(double correctness, int format, double c_group, double c_format) {
    if (c_group < 0.0 || c_format < 0.0) {
        throw std::invalid_argument("combine_rewards: coefficients must be nonnegative");
    }
    return c_group * correctness + c_format * static_cast<double>(format);
}

namespace {

struct GroupStats {
    double mu;
    double sigma;  // population (1/N) standard deviation
};

GroupStats stats_of(const std::vector<double>& values) {
    double mu = 0.0;
    for (double v : values) mu += v;
    mu /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mu) * (v - mu);
    var /= static_cast<double>(values.size());
    return {mu, std::sqrt(var)};
}

}  // namespace

std::vector<double> group_relative_normalize(const std::vector<double>& raw, double epsilon) {
    if (raw.empty()) {
        throw std::invalid_argument("group_relative_normalize: empty group");
    }
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("group_relative_normalize: epsilon must be positive");
    }
    for (double v : raw) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("group_relative_normalize: non-finite reward");
        }
    }
    GroupStats s = stats_of(raw);
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = (raw[i] - s.mu) / (s.sigma + epsilon);
    }
    return out;
}

nlohmann::json round_record_to_json(const RoundRecord& record) {
    nlohmann::json experts = nlohmann::json::array();
    for (int id : record.expert_set.members) experts.push_back(id);
    nlohmann::json competence = nlohmann::json::object();
    for (const auto& [id, score] : record.expert_set.competence) {
        competence[std::to_string(id)] = score;
    }
    nlohmann::json j;
    j["round"] = record.round;
    j["round_seed"] = record.round_seed;
    j["question_id"] = record.question_id;
    j["experts"] = experts;
    j["competence"] = competence;
    j["raw_rewards"] = record.group.raw;
    j["mu"] = record.group.mu;
    j["sigma"] = record.group.sigma;
    j["normalized"] = record.group.normalized;
    if (record.group.axis == NormalizationAxis::expert) {
        j["normalized_matrix"] = record.group.normalized_matrix;
    }
    j["epsilon"] = record.group.epsilon;
    j["axis"] = record.group.axis == NormalizationAxis::candidate ? "candidate" : "expert";
    j["update_norm"] = record.update_norm;
    j["bytes_up"] = record.bytes_up;
    j["bytes_down"] = record.bytes_down;
    return j;
}

Trainer::Trainer(TrainerConfig config, const CorpusBundle* bundle,
                 std::vector<Client>* clients, PolicyParams initial_params,
                 EncoderConfig retrieval_encoder, EncoderConfig policy_encoder,
                 MessageBus* bus)
    : config_(std::move(config)),
      bundle_(bundle),
      clients_(clients),
      params_(std::move(initial_params)),
      retrieval_encoder_(retrieval_encoder),
      policy_encoder_(policy_encoder),
      bus_(bus) {
    if (clients_ == nullptr || clients_->empty()) {
        throw std::invalid_argument("trainer: need at least one client");
    }
    for (std::size_t i = 0; i < clients_->size(); ++i) {
        if ((*clients_)[i].id() != static_cast<int>(i) + 1) {
            throw std::invalid_argument("trainer: client ids must be contiguous from 1");
        }
    }
    if (config_.num_experts < 1 ||
        config_.num_experts > static_cast<int>(clients_->size())) {
        throw std::invalid_argument("trainer: num_experts must be in [1, num_clients]");
    }
    if (config_.neighborhood_size < 1 || config_.group_size < 1) {
        throw std::invalid_argument("trainer: neighborhood and group sizes must be positive");
    }
    // Embed the auxiliary pool once up front.
    for (const QAItem& item : bundle_->auxiliary) {
        aux_embeddings_.emplace_back(item.id, embed(item.question, retrieval_encoder_));
        aux_items_[item.id] = {item.question, item.answer};
    }
}

std::uint64_t Trainer::round_seed_for(std::uint64_t master_seed, int round_index) {
    return splitmix64(master_seed ^ kRoundSeedTag ^ static_cast<std::uint64_t>(round_index));
}

EmbeddingVector Trainer::policy_features(const std::string& question) const {
    return embed(question, policy_encoder_);
}

RoundRecord Trainer::run_round(int round_index, std::uint64_t round_seed) {
    if (bundle_->server_questions.empty()) {
        throw std::runtime_error("trainer: server question pool exhausted");
    }
    Rng rng(round_seed);
    const std::int64_t up_before = bus_->ledger().total_uplink();
    const std::int64_t down_before = bus_->ledger().total_downlink();

    // Sample the round's question.
    const ServerQuestion& question =
        bundle_->server_questions[rng.bounded(bundle_->server_questions.size())];

    // Retrieve the auxiliary neighborhood and probe every client with it.
    std::vector<std::pair<std::string, std::string>> exemplars;
    if (!aux_embeddings_.empty()) {
        EmbeddingVector query = embed(question.question, retrieval_encoder_);
        Neighborhood nbhd = retrieve_neighborhood(
            query, aux_embeddings_, static_cast<std::size_t>(config_.neighborhood_size));
        exemplars.reserve(nbhd.entries.size());
        for (const auto& [id, sim] : nbhd.entries) {
            exemplars.push_back(aux_items_.at(id));
        }
    }

    ExpertSet expert_set;
    expert_set.question_id = question.id;
    if (!exemplars.empty()) {
        for (const Client& client : *clients_) {
            bus_->send(make_neighborhood_broadcast(client.id(), round_index, exemplars));
        }
        for (const Client& client : *clients_) {
            double score = client.competence_on_neighborhood(exemplars);
            if (config_.competence_ema > 0.0) {
                auto [it, inserted] = competence_ema_.try_emplace(client.id(), score);
                if (!inserted) {
                    it->second = (1.0 - config_.competence_ema) * it->second +
                                 config_.competence_ema * score;
                }
                score = it->second;
            }
            expert_set.competence[client.id()] = score;
            bus_->send(make_competence_reply(client.id(), round_index, score));
        }
    }

    // Expert selection; an empty auxiliary pool or random mode degrades to
    // a uniform random M-subset (shuffled id list, first M, drawn from the
    // round stream).
    if (config_.selection == ExpertSelection::competence && !expert_set.competence.empty()) {
        expert_set.members = select_experts(expert_set.competence, config_.num_experts);
    } else {
        std::vector<int> ids;
        ids.reserve(clients_->size());
        for (const Client& client : *clients_) ids.push_back(client.id());
        rng.shuffle(ids);
        std::size_t keep = std::min<std::size_t>(config_.num_experts, ids.size());
        expert_set.members.assign(ids.begin(), ids.begin() + keep);
    }

    // Sample the candidate group.
    EmbeddingVector features = policy_features(question.question);
    std::uint64_t candidate_seed = rng.next_u64();
    std::vector<Candidate> candidates =
        sample_candidates(params_, features, static_cast<std::size_t>(config_.group_size),
                          candidate_seed);

    // Broadcast the group to the experts only, then collect their rewards,
    // both in ascending client id order.
    std::vector<int> experts_by_id = expert_set.members;
    std::sort(experts_by_id.begin(), experts_by_id.end());

    EvaluationRequest request;
    request.request_id = round_index;
    request.question = question.question;
    for (const Candidate& c : candidates) request.candidates.push_back(c.answer);

    for (int expert_id : experts_by_id) {
        bus_->send(make_candidate_broadcast(expert_id, round_index, request.question,
                                            request.candidates));
    }
    std::vector<RewardSignal> signals;
    for (int expert_id : experts_by_id) {
        const Client& client = clients_->at(static_cast<std::size_t>(expert_id) - 1);
        RewardSignal signal = client.score_request(request);
        bus_->send(make_reward_reply(round_index, signal));
        signals.push_back(std::move(signal));
    }

    // Combine raw rewards: [candidate][expert].
    const std::size_t G = candidates.size();
    const std::size_t M = signals.size();
    GroupRewards group;
    group.epsilon = config_.epsilon;
    group.axis = config_.axis;
    group.raw.assign(G, std::vector<double>(M, 0.0));
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t g = 0; g < G; ++g) {
            const CandidateScore& s = signals[m].per_candidate[g];
            group.raw[g][m] = combine_rewards(s.correctness, s.format, config_.reward_coeff,
                                              config_.format_coeff);
        }
    }

    // Normalize and accumulate the policy-gradient direction.
    std::vector<double> coefficients(G, 0.0);
    if (config_.axis == NormalizationAxis::candidate) {
        std::vector<double> per_candidate(G, 0.0);
        for (std::size_t g = 0; g < G; ++g) {
            double sum = 0.0;
            for (std::size_t m = 0; m < M; ++m) sum += group.raw[g][m];
            per_candidate[g] = sum / static_cast<double>(M);
        }
        group.normalized = group_relative_normalize(per_candidate, config_.epsilon);
        double mu = 0.0;
        for (double v : per_candidate) mu += v;
        group.mu = mu / static_cast<double>(G);
        double var = 0.0;
        for (double v : per_candidate) var += (v - group.mu) * (v - group.mu);
        group.sigma = std::sqrt(var / static_cast<double>(G));
        coefficients = group.normalized;
    } else {
        group.normalized_matrix.resize(G);
        double mu_sum = 0.0;
        double sigma_sum = 0.0;
        for (std::size_t g = 0; g < G; ++g) {
            group.normalized_matrix[g] = group_relative_normalize(group.raw[g], config_.epsilon);
            double mu = 0.0;
            for (double v : group.raw[g]) mu += v;
            mu /= static_cast<double>(M);
            double var = 0.0;
            for (double v : group.raw[g]) var += (v - mu) * (v - mu);
            mu_sum += mu;
            sigma_sum += std::sqrt(var / static_cast<double>(M));
            double coeff = 0.0;
            for (double v : group.normalized_matrix[g]) coeff += v;
            coefficients[g] = coeff / static_cast<double>(M);
        }
        group.mu = mu_sum / static_cast<double>(G);
        group.sigma = sigma_sum / static_cast<double>(G);
        // Per-candidate means of zero-mean rows; kept for the record.
        group.normalized = coefficients;
    }

    GradientVector direction(params_.theta.rows, params_.theta.cols);
    for (std::size_t g = 0; g < G; ++g) {
        if (coefficients[g] == 0.0) continue;
        GradientVector grad = grad_log_prob(params_, features, candidates[g].answer);
        for (std::size_t i = 0; i < direction.data.size(); ++i) {
            direction.data[i] += coefficients[g] * grad.data[i];
        }
    }
    for (double& v : direction.data) v /= static_cast<double>(G);

    params_ = apply_update(params_, direction, config_.learning_rate);

    RoundRecord record;
    record.round = round_index;
    record.round_seed = round_seed;
    record.question_id = question.id;
    record.expert_set = std::move(expert_set);
    record.group = std::move(group);
    record.update_norm = config_.learning_rate * direction.frobenius_norm();
    record.bytes_up = bus_->ledger().total_uplink() - up_before;
    record.bytes_down = bus_->ledger().total_downlink() - down_before;
    return record;
}

EvalPoint Trainer::evaluate(int round_index) const {
    EvalPoint point;
    point.round = round_index;
    point.pass1_per_domain.assign(bundle_->domain_names.size(), 0.0);
    std::vector<std::size_t> domain_counts(bundle_->domain_names.size(), 0);
    std::size_t correct = 0;
    for (const QAItem& item : bundle_->test) {
        std::string decoded = greedy_decode(params_, policy_features(item.question));
        bool hit = canonicalize_answer(decoded) == canonicalize_answer(item.answer);
        if (hit) ++correct;
        if (item.domain >= 0 && item.domain < static_cast<int>(domain_counts.size())) {
            domain_counts[item.domain] += 1;
            if (hit) point.pass1_per_domain[item.domain] += 1.0;
        }
    }
    if (!bundle_->test.empty()) {
        point.pass1_overall =
            static_cast<double>(correct) / static_cast<double>(bundle_->test.size());
    }
    for (std::size_t d = 0; d < domain_counts.size(); ++d) {
        if (domain_counts[d] > 0) {
            point.pass1_per_domain[d] /= static_cast<double>(domain_counts[d]);
        }
    }
    return point;
}

Trainer::TrainingResult Trainer::run_training(
    const std::function<void(int, const PolicyParams&)>& after_round) {
    TrainingResult result;
    result.eval_curve.push_back(evaluate(0));  // zero-shot baseline
    for (int t = 1; t <= config_.rounds; ++t) {
        RoundRecord record = run_round(t, round_seed_for(config_.seed, t));
        result.records.push_back(std::move(record));
        bool eval_now = (config_.eval_every > 0 && t % config_.eval_every == 0) ||
                        t == config_.rounds;
        if (eval_now) result.eval_curve.push_back(evaluate(t));
        if (after_round) after_round(t, params_);
    }
    result.final_params = params_;
    return result;
}

}  // namespace fedgrpo
