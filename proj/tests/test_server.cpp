#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedgrpo/experiment.hpp"
#include "fedgrpo/rng.hpp"
#include "fedgrpo/server.hpp"

using namespace fedgrpo;

namespace {

// Independent mean / population-std oracle.
std::pair<double, double> brute_stats(const std::vector<double>& values) {
    double mu = 0.0;
    for (double v : values) mu += v;
    mu /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mu) * (v - mu);
    var /= static_cast<double>(values.size());
    return {mu, std::sqrt(var)};
}

ExperimentConfig tiny_config(std::uint64_t seed) {
    ExperimentConfig config;
    config.modulus = 5;
    config.domains = {"add"};
    config.count_per_domain = 800;
    config.num_clients = 4;
    config.num_experts = 2;
    config.partition_mode = PartitionMode::iid;
    config.server_size = 200;
    config.test_size = 100;
    config.aux_size = 60;
    config.rounds = 40;
    config.seed = seed;
    return config;
}

struct LiveExperiment {
    ExperimentSetup setup;
    MessageBus bus;
    Trainer trainer;

    explicit LiveExperiment(const ExperimentConfig& config)
        : setup(build_experiment(config)),
          bus(config.num_clients),
          trainer(setup.trainer, &setup.bundle, &setup.clients, setup.initial_params,
                  setup.retrieval_encoder, setup.policy_encoder, &bus) {}
};

}  // namespace

TEST_CASE("select_experts is exact top-M with id tie-break") {
    std::map<int, double> competence = {{1, 0.9}, {2, 0.2}, {3, 0.5}, {4, 0.5}};
    CHECK(select_experts(competence, 2) == std::vector<int>{1, 3});

    std::map<int, double> eight;
    for (int k = 1; k <= 8; ++k) eight[k] = 0.1 * k;
    CHECK(select_experts(eight, 2).size() == 2);
    CHECK(select_experts(eight, 2) == std::vector<int>{8, 7});

    std::map<int, double> equal = {{1, 0.3}, {2, 0.3}, {3, 0.3}, {4, 0.3}, {5, 0.3}};
    CHECK(select_experts(equal, 3) == std::vector<int>{1, 2, 3});

    CHECK(select_experts(equal, 9) == std::vector<int>{1, 2, 3, 4, 5});  // K < M
    CHECK_THROWS_AS(select_experts({}, 2), std::invalid_argument);
    CHECK_THROWS_AS(select_experts(equal, 0), std::invalid_argument);
}

TEST_CASE("select_experts equals a brute-force sort on random instances") {
    Rng rng(31);
    for (int trial = 0; trial < 1000; ++trial) {
        std::map<int, double> competence;
        int K = 1 + static_cast<int>(rng.bounded(12));
        for (int k = 1; k <= K; ++k) {
            // quantized scores so ties occur often
            competence[k] = std::floor(rng.unit() * 4.0) / 4.0;
        }
        int M = 1 + static_cast<int>(rng.bounded(K + 2));
        std::vector<int> got = select_experts(competence, M);

        std::vector<std::pair<int, double>> ranked(competence.begin(), competence.end());
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        std::vector<int> expected;
        for (std::size_t i = 0; i < std::min<std::size_t>(M, ranked.size()); ++i) {
            expected.push_back(ranked[i].first);
        }
        CHECK(got == expected);
    }
}

TEST_CASE("combine_rewards applies the default coefficients") {
    CHECK(combine_rewards(1.0, 1, 8.0, 1.0) == 9.0);
    CHECK(combine_rewards(0.0, 1, 8.0, 1.0) == 1.0);
    CHECK(combine_rewards(0.0, 0, 8.0, 1.0) == 0.0);
    CHECK(combine_rewards(0.5, 1, 8.0, 1.0) == 5.0);
    CHECK_THROWS_AS(combine_rewards(1.0, 1, -1.0, 1.0), std::invalid_argument);
}

TEST_CASE("group-relative normalization hand values") {
    auto flat = group_relative_normalize({1.0, 1.0, 1.0}, 1e-4);
    for (double v : flat) CHECK(v == 0.0);

    auto pair = group_relative_normalize({1.0, 0.0}, 1e-4);
    CHECK(std::abs(pair[0] - 0.99980004) < 1e-8);
    CHECK(std::abs(pair[1] + 0.99980004) < 1e-8);
    CHECK(std::abs(pair[0] - 0.5 / 0.5001) < 1e-12);

    std::vector<double> group = {9, 1, 9, 1, 1, 1, 1, 1};
    auto normalized = group_relative_normalize(group, 1e-4);
    auto [mu, sigma] = brute_stats(group);
    for (std::size_t i = 0; i < group.size(); ++i) {
        CHECK(std::abs(normalized[i] - (group[i] - mu) / (sigma + 1e-4)) < 1e-9);
    }

    CHECK_THROWS_AS(group_relative_normalize({}, 1e-4), std::invalid_argument);
    CHECK_THROWS_AS(group_relative_normalize({1.0}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(group_relative_normalize({std::nan("")}, 1e-4), std::runtime_error);
}

TEST_CASE("normalization is zero-mean with std sigma/(sigma+eps)") {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 1 + rng.bounded(16);
        std::vector<double> raw(n);
        for (double& v : raw) v = rng.unit() * 20.0 - 10.0;
        double eps = 1e-4;
        auto normalized = group_relative_normalize(raw, eps);

        double sum = 0.0;
        for (double v : normalized) sum += v;
        CHECK(std::abs(sum) < 1e-9);

        auto [mu_raw, sigma_raw] = brute_stats(raw);
        auto [mu_norm, sigma_norm] = brute_stats(normalized);
        CHECK(std::abs(mu_norm) < 1e-9);
        CHECK(std::abs(sigma_norm - sigma_raw / (sigma_raw + eps)) < 1e-9);
        CHECK(sigma_norm <= 1.0 + 1e-12);
    }
}

TEST_CASE("normalization preserves ranking under positive affine maps") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 2 + rng.bounded(10);
        std::vector<double> raw(n), mapped(n);
        double a = 0.1 + rng.unit() * 5.0;
        double b = rng.unit() * 10.0 - 5.0;
        for (std::size_t i = 0; i < n; ++i) {
            raw[i] = rng.unit() * 8.0;
            mapped[i] = a * raw[i] + b;
        }
        auto norm_raw = group_relative_normalize(raw, 1e-4);
        auto norm_mapped = group_relative_normalize(mapped, 1e-4);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                CHECK((norm_raw[i] < norm_raw[j]) == (norm_mapped[i] < norm_mapped[j]));
            }
        }
    }
}

TEST_CASE("run_round message discipline matches the protocol shape") {
    ExperimentConfig config = tiny_config(5);
    config.num_clients = 8;
    config.num_experts = 2;
    LiveExperiment live(config);

    RoundRecord record = live.trainer.run_round(1, Trainer::round_seed_for(5, 1));

    int competence_replies = 0, reward_replies = 0, nbhd = 0, cand = 0, other = 0;
    for (const Message& msg : live.bus.log()) {
        switch (msg.kind) {
            case MessageKind::CompetenceReply: competence_replies++; break;
            case MessageKind::RewardReply: reward_replies++; break;
            case MessageKind::NeighborhoodBroadcast: nbhd++; break;
            case MessageKind::CandidateBroadcast: cand++; break;
            default: other++;
        }
        if (msg.to == kServerEndpoint) {
            CHECK((msg.kind == MessageKind::CompetenceReply ||
                   msg.kind == MessageKind::RewardReply));
        }
    }
    CHECK(competence_replies == 8);  // all clients probed
    CHECK(reward_replies == 2);      // experts only
    CHECK(nbhd == 8);
    CHECK(cand == 2);
    CHECK(other == 0);

    CHECK(record.expert_set.members.size() == 2);
    CHECK(record.group.raw.size() == 8);      // G candidates
    CHECK(record.group.raw[0].size() == 2);   // M experts
    CHECK(record.bytes_up == 8 * 24 + 2 * (16 + 16 * 8));
    CHECK(record.round_seed == Trainer::round_seed_for(5, 1));
}

TEST_CASE("identical raw rewards give an exactly zero update") {
    ExperimentConfig config = tiny_config(6);
    config.reward_coeff = 0.0;  // only the format bonus remains, equal for all
    LiveExperiment live(config);
    PolicyParams before = live.trainer.params();

    RoundRecord record = live.trainer.run_round(1, Trainer::round_seed_for(6, 1));
    CHECK(record.update_norm == 0.0);
    for (double v : record.group.normalized) CHECK(v == 0.0);
    CHECK(live.trainer.params().theta.data == before.theta.data);
}

TEST_CASE("round records are deterministic for a fixed seed") {
    ExperimentConfig config = tiny_config(7);
    config.rounds = 12;
    LiveExperiment a(config);
    LiveExperiment b(config);
    auto result_a = a.trainer.run_training();
    auto result_b = b.trainer.run_training();
    REQUIRE(result_a.records.size() == result_b.records.size());
    for (std::size_t i = 0; i < result_a.records.size(); ++i) {
        CHECK(round_record_to_json(result_a.records[i]).dump() ==
              round_record_to_json(result_b.records[i]).dump());
    }
    CHECK(result_a.final_params.theta.data == result_b.final_params.theta.data);
}

TEST_CASE("training replays from recorded round seeds") {
    ExperimentConfig config = tiny_config(8);
    config.rounds = 10;
    LiveExperiment original(config);
    auto result = original.trainer.run_training();

    LiveExperiment replay(config);
    for (const RoundRecord& record : result.records) {
        replay.trainer.run_round(record.round, record.round_seed);
    }
    CHECK(replay.trainer.params().theta.data == result.final_params.theta.data);
}

TEST_CASE("zero rounds leave the policy untouched") {
    ExperimentConfig config = tiny_config(9);
    config.rounds = 0;
    LiveExperiment live(config);
    auto result = live.trainer.run_training();
    CHECK(result.records.empty());
    CHECK(result.final_params.theta.data == live.setup.initial_params.theta.data);
    REQUIRE(result.eval_curve.size() == 1);  // the zero-shot row
    CHECK(result.eval_curve[0].round == 0);
}

TEST_CASE("an empty auxiliary pool degrades to random expert selection") {
    ExperimentConfig config = tiny_config(10);
    config.aux_size = 0;
    LiveExperiment live(config);
    RoundRecord record = live.trainer.run_round(1, Trainer::round_seed_for(10, 1));
    CHECK(record.expert_set.members.size() == 2);
    CHECK(record.expert_set.competence.empty());
    for (const Message& msg : live.bus.log()) {
        CHECK(msg.kind != MessageKind::NeighborhoodBroadcast);
        CHECK(msg.kind != MessageKind::CompetenceReply);
    }
}

TEST_CASE("an exhausted question pool refuses to train") {
    ExperimentConfig config = tiny_config(11);
    LiveExperiment live(config);
    live.setup.bundle.server_questions.clear();
    CHECK_THROWS_AS(live.trainer.run_round(1, 1), std::runtime_error);
}

TEST_CASE("expert-axis mode normalizes each candidate across experts") {
    ExperimentConfig config = tiny_config(12);
    config.normalization_axis = NormalizationAxis::expert;
    config.evaluation_mode = EvaluationMode::me_only;  // expert scores can differ
    LiveExperiment live(config);
    RoundRecord record = live.trainer.run_round(1, Trainer::round_seed_for(12, 1));
    REQUIRE(record.group.axis == NormalizationAxis::expert);
    REQUIRE(!record.group.normalized_matrix.empty());
    for (const auto& row : record.group.normalized_matrix) {
        double sum = 0.0;
        for (double v : row) sum += v;
        CHECK(std::abs(sum) < 1e-9);  // zero-mean across the expert group
    }
    // zero-mean rows make the aggregate update vanish analytically
    CHECK(record.update_norm < 1e-12);
}

TEST_CASE("competence smoothing blends consecutive probes") {
    ExperimentConfig config = tiny_config(13);
    config.competence_ema = 0.5;
    LiveExperiment smoothed(config);
    ExperimentConfig raw_config = tiny_config(13);
    LiveExperiment raw(raw_config);

    RoundRecord s1 = smoothed.trainer.run_round(1, Trainer::round_seed_for(13, 1));
    RoundRecord r1 = raw.trainer.run_round(1, Trainer::round_seed_for(13, 1));
    // first probe: nothing to blend yet
    for (const auto& [id, score] : s1.expert_set.competence) {
        CHECK(score == doctest::Approx(r1.expert_set.competence.at(id)));
    }
    RoundRecord s2 = smoothed.trainer.run_round(2, Trainer::round_seed_for(13, 2));
    RoundRecord r2 = raw.trainer.run_round(2, Trainer::round_seed_for(13, 2));
    for (const auto& [id, score] : s2.expert_set.competence) {
        double expected = 0.5 * r1.expert_set.competence.at(id) +
                          0.5 * r2.expert_set.competence.at(id);
        CHECK(score == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("training learns the addition task at small scale") {
    ExperimentConfig config = tiny_config(21);
    config.rounds = 150;
    config.server_size = 300;
    LiveExperiment live(config);
    auto result = live.trainer.run_training();
    double start = result.eval_curve.front().pass1_overall;
    double final = result.eval_curve.back().pass1_overall;
    CHECK(start < 0.4);  // near chance
    CHECK(final > 0.6);  // well above it after 150 rounds
}

TEST_CASE("evaluation curve rows follow the eval cadence") {
    ExperimentConfig config = tiny_config(22);
    config.rounds = 45;
    config.eval_every = 20;
    LiveExperiment live(config);
    auto result = live.trainer.run_training();
    // rounds 0, 20, 40, 45
    REQUIRE(result.eval_curve.size() == 4);
    CHECK(result.eval_curve[0].round == 0);
    CHECK(result.eval_curve[1].round == 20);
    CHECK(result.eval_curve[2].round == 40);
    CHECK(result.eval_curve[3].round == 45);
}

TEST_CASE("trainer rejects invalid wiring") {
    ExperimentConfig config = tiny_config(23);
    ExperimentSetup setup = build_experiment(config);
    MessageBus bus(config.num_clients);

    std::vector<Client> no_clients;
    CHECK_THROWS_AS(Trainer(setup.trainer, &setup.bundle, &no_clients, setup.initial_params,
                            setup.retrieval_encoder, setup.policy_encoder, &bus),
                    std::invalid_argument);

    TrainerConfig too_many = setup.trainer;
    too_many.num_experts = 99;
    CHECK_THROWS_AS(Trainer(too_many, &setup.bundle, &setup.clients, setup.initial_params,
                            setup.retrieval_encoder, setup.policy_encoder, &bus),
                    std::invalid_argument);
}
