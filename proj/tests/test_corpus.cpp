#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "fedgrpo/corpus.hpp"
#include "fedgrpo/rng.hpp"
#include "fedgrpo/text.hpp"

using namespace fedgrpo;

namespace {

// Independent brute-force evaluator: parses the question text and recomputes
// the answer from scratch. Never touches the generator's internals.
std::string brute_force_answer(const std::string& question) {
    std::vector<std::string> tokens = tokenize(question);
    REQUIRE(tokens.size() >= 5);
    REQUIRE(tokens[tokens.size() - 2] == "mod");
    long long p = std::stoll(tokens.back());
    long long value = 0;
    if (tokens.size() == 5) {
        long long a = std::stoll(tokens[0]);
        long long b = std::stoll(tokens[2]);
        if (tokens[1] == "+") value = a + b;
        else if (tokens[1] == "-") value = a - b;
        else if (tokens[1] == "*") value = a * b;
        else FAIL("unknown operator");
    } else {
        REQUIRE(tokens.size() == 7);  // a + b * c mod p
        long long a = std::stoll(tokens[0]);
        long long b = std::stoll(tokens[2]);
        long long c = std::stoll(tokens[4]);
        REQUIRE(tokens[1] == "+");
        REQUIRE(tokens[3] == "*");
        value = a + b * c;
    }
    long long r = value % p;
    if (r < 0) r += p;
    return std::to_string(r);
}

// Reference reimplementation of the documented partition recipe, written
// against the doc comment only. Returns shard id lists.
double ref_unit(std::mt19937_64& e) {
    return static_cast<double>(e() >> 11) * 0x1.0p-53;
}

double ref_normal(std::mt19937_64& e) {
    double u1 = 1.0 - ref_unit(e);
    double u2 = ref_unit(e);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double ref_gamma(std::mt19937_64& e, double alpha) {
    if (alpha < 1.0) {
        double g = ref_gamma(e, alpha + 1.0);
        double u = 1.0 - ref_unit(e);
        return g * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = ref_normal(e);
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = ref_unit(e);
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<std::vector<std::int64_t>> ref_dirichlet_partition(
    const std::vector<QAItem>& items, const PartitionSpec& spec) {
    std::mt19937_64 engine(spec.seed);
    const std::size_t K = static_cast<std::size_t>(spec.num_clients);
    std::map<int, std::vector<std::size_t>> by_domain;
    for (std::size_t i = 0; i < items.size(); ++i) by_domain[items[i].domain].push_back(i);

    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::vector<std::int64_t>> shards(K);
        for (const auto& [domain, indices] : by_domain) {
            std::vector<double> draws(K);
            double sum = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                draws[k] = ref_gamma(engine, spec.beta);
                sum += draws[k];
            }
            for (double& d : draws) d /= sum;

            std::vector<std::size_t> order = indices;
            for (std::size_t i = order.size() - 1; i > 0; --i) {
                std::size_t j = static_cast<std::size_t>(engine() % (i + 1));
                std::swap(order[i], order[j]);
            }

            std::size_t n = order.size();
            std::vector<std::size_t> counts(K);
            std::vector<std::pair<double, std::size_t>> frac(K);
            std::size_t assigned = 0;
            for (std::size_t k = 0; k < K; ++k) {
                double exact = draws[k] * static_cast<double>(n);
                counts[k] = static_cast<std::size_t>(exact);
                frac[k] = {exact - static_cast<double>(counts[k]), k};
                assigned += counts[k];
            }
            std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (std::size_t r = 0; assigned < n; ++r, ++assigned) counts[frac[r].second] += 1;

            std::size_t cursor = 0;
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t c = 0; c < counts[k]; ++c) {
                    shards[k].push_back(items[order[cursor++]].id);
                }
            }
        }
        bool any_empty = false;
        for (const auto& s : shards) {
            if (s.empty()) any_empty = true;
        }
        if (!any_empty) return shards;
    }
    FAIL("reference sampler hit the repair path; pick a tamer test setting");
    return {};
}

TaskConfig small_task(long long p = 7, int count = 40) {
    TaskConfig task;
    task.modulus = p;
    task.domains = {"add", "sub", "mul"};
    task.count_per_domain = count;
    return task;
}

}  // namespace

TEST_CASE("generator produces the arithmetic it claims") {
    TaskConfig task;
    task.modulus = 7;
    task.domains = {"add", "mul", "mix"};
    task.count_per_domain = 200;
    std::vector<QAItem> items = generate_corpus(task, 42);
    REQUIRE(items.size() == 600);
    for (const QAItem& item : items) {
        CHECK(item.answer == brute_force_answer(item.question));
        CHECK(item.answer == canonicalize_answer(item.answer));
    }
}

TEST_CASE("generator spot values") {
    // (3+5) mod 7 = 1 and (4*6) mod 7 = 3, via the independent evaluator
    CHECK(brute_force_answer("3+5 mod 7") == "1");
    CHECK(brute_force_answer("4*6 mod 7") == "3");
    // subtraction reduces into [0, p)
    CHECK(brute_force_answer("1-5 mod 7") == "3");
}

TEST_CASE("generator is deterministic and balanced per domain") {
    TaskConfig task = small_task();
    std::vector<QAItem> a = generate_corpus(task, 7);
    std::vector<QAItem> b = generate_corpus(task, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].question == b[i].question);
        CHECK(a[i].answer == b[i].answer);
        CHECK(a[i].domain == b[i].domain);
    }
    std::map<int, int> per_domain;
    for (const QAItem& item : a) per_domain[item.domain]++;
    for (const auto& [domain, count] : per_domain) CHECK(count == task.count_per_domain);

    std::vector<QAItem> c = generate_corpus(task, 8);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].question != c[i].question) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("generator rejects bad configs") {
    TaskConfig task = small_task();
    task.modulus = 1;
    CHECK_THROWS_AS(generate_corpus(task, 0), std::invalid_argument);
    task = small_task();
    task.domains = {};
    CHECK_THROWS_AS(generate_corpus(task, 0), std::invalid_argument);
    task = small_task();
    task.domains = {"add", "exp"};
    CHECK_THROWS_AS(generate_corpus(task, 0), std::invalid_argument);
    task = small_task();
    task.count_per_domain = 0;
    CHECK_THROWS_AS(generate_corpus(task, 0), std::invalid_argument);
}

TEST_CASE("iid partition deals evenly") {
    TaskConfig task = small_task(5, 34);  // 102 items
    std::vector<QAItem> items = generate_corpus(task, 3);
    items.resize(100);
    PartitionSpec spec;
    spec.num_clients = 4;
    spec.mode = PartitionMode::iid;
    spec.seed = 5;
    auto shards = partition(items, spec);
    REQUIRE(shards.size() == 4);
    for (const auto& shard : shards) CHECK(shard.size() == 25);
}

TEST_CASE("partition is exhaustive and exclusive") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        TaskConfig task = small_task(5, 10 + static_cast<int>(rng.bounded(30)));
        std::vector<QAItem> items = generate_corpus(task, rng.next_u64());
        PartitionSpec spec;
        spec.num_clients = 1 + static_cast<int>(rng.bounded(6));
        spec.mode = (trial % 2 == 0) ? PartitionMode::iid : PartitionMode::dirichlet;
        spec.beta = 0.5;
        spec.seed = rng.next_u64();
        auto shards = partition(items, spec);

        std::set<std::int64_t> seen;
        std::size_t total = 0;
        for (const auto& shard : shards) {
            total += shard.size();
            for (const QAItem& item : shard) {
                CHECK(seen.insert(item.id).second);  // exclusive
            }
        }
        CHECK(total == items.size());  // exhaustive
        CHECK(seen.size() == items.size());
    }
}

TEST_CASE("dirichlet with huge beta approaches the uniform split") {
    TaskConfig task = small_task(11, 400);
    std::vector<QAItem> items = generate_corpus(task, 21);
    PartitionSpec spec;
    spec.num_clients = 4;
    spec.mode = PartitionMode::dirichlet;
    spec.beta = 1e6;
    spec.seed = 17;
    auto shards = partition(items, spec);
    // per-domain shares each within 0.24..0.26 of that domain's total
    for (int domain = 0; domain < 3; ++domain) {
        double domain_total = 0.0;
        std::vector<double> per_client(4, 0.0);
        for (std::size_t k = 0; k < shards.size(); ++k) {
            for (const QAItem& item : shards[k]) {
                if (item.domain == domain) {
                    per_client[k] += 1.0;
                    domain_total += 1.0;
                }
            }
        }
        for (double count : per_client) {
            double share = count / domain_total;
            CHECK(share > 0.24);
            CHECK(share < 0.26);
        }
    }
}

TEST_CASE("dirichlet partition matches the reference sampler recipe") {
    TaskConfig task = small_task(7, 120);
    std::vector<QAItem> items = generate_corpus(task, 123);
    PartitionSpec spec;
    spec.num_clients = 8;
    spec.mode = PartitionMode::dirichlet;
    spec.beta = 0.1;
    spec.seed = 20240811;
    auto shards = partition(items, spec);
    auto reference = ref_dirichlet_partition(items, spec);
    REQUIRE(shards.size() == reference.size());
    for (std::size_t k = 0; k < shards.size(); ++k) {
        REQUIRE(shards[k].size() == reference[k].size());
        for (std::size_t i = 0; i < shards[k].size(); ++i) {
            CHECK(shards[k][i].id == reference[k][i]);
        }
    }
}

TEST_CASE("beta=0.1 produces measurably more domain skew than iid") {
    TaskConfig task = small_task(7, 200);
    double mean_max_share = 0.0;
    int counted = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::vector<QAItem> items = generate_corpus(task, seed);
        PartitionSpec spec;
        spec.num_clients = 8;
        spec.mode = PartitionMode::dirichlet;
        spec.beta = 0.1;
        spec.seed = seed * 31 + 7;
        auto shards = partition(items, spec);
        for (const auto& shard : shards) {
            std::map<int, double> counts;
            for (const QAItem& item : shard) counts[item.domain] += 1.0;
            double max_share = 0.0;
            for (const auto& [domain, count] : counts) {
                max_share = std::max(max_share, count / static_cast<double>(shard.size()));
            }
            mean_max_share += max_share;
            ++counted;
        }
    }
    mean_max_share /= counted;
    CHECK(mean_max_share > 0.5);
}

TEST_CASE("partition error and repair paths") {
    TaskConfig task = small_task(5, 2);
    std::vector<QAItem> items = generate_corpus(task, 1);  // 6 items
    PartitionSpec spec;
    spec.num_clients = 7;
    spec.mode = PartitionMode::iid;
    spec.seed = 1;
    CHECK_THROWS(partition(items, spec));  // more clients than items

    spec.num_clients = 0;
    CHECK_THROWS_AS(partition(items, spec), std::invalid_argument);
    spec.num_clients = 2;
    CHECK_THROWS_AS(partition({}, spec), std::invalid_argument);

    // Extreme skew: repair must still deliver non-empty, exhaustive shards.
    TaskConfig big = small_task(5, 20);
    std::vector<QAItem> many = generate_corpus(big, 3);  // 60 items
    PartitionSpec harsh;
    harsh.num_clients = 20;
    harsh.mode = PartitionMode::dirichlet;
    harsh.beta = 0.01;
    harsh.seed = 5;
    auto shards = partition(many, harsh);
    std::size_t total = 0;
    for (const auto& shard : shards) {
        CHECK(!shard.empty());
        total += shard.size();
    }
    CHECK(total == many.size());
}

TEST_CASE("bundle splits are disjoint and sized as requested") {
    TaskConfig task = small_task(7, 700);  // 2100 items
    std::vector<QAItem> items = generate_corpus(task, 9);
    items.resize(2000);
    PartitionSpec spec;
    spec.num_clients = 8;
    spec.mode = PartitionMode::dirichlet;
    spec.beta = 0.5;
    spec.seed = 77;
    CorpusBundle bundle = build_bundle(items, spec, 100, 1500, 200, task);

    CHECK(bundle.auxiliary.size() == 100);
    CHECK(bundle.server_questions.size() == 1500);
    CHECK(bundle.test.size() == 200);
    CHECK(bundle.sealed_answers.size() == 1500);

    // set-disjointness checker: every id exactly once across all four parts
    std::set<std::int64_t> seen;
    std::size_t total = 0;
    auto absorb = [&](std::int64_t id) {
        CHECK(seen.insert(id).second);
        ++total;
    };
    for (const auto& item : bundle.auxiliary) absorb(item.id);
    for (const auto& item : bundle.test) absorb(item.id);
    for (const auto& q : bundle.server_questions) absorb(q.id);
    for (const auto& shard : bundle.client_shards) {
        for (const auto& item : shard) absorb(item.id);
    }
    CHECK(total == 2000);

    // sealed answers agree with the generator rule but live outside the
    // server question type
    for (const ServerQuestion& q : bundle.server_questions) {
        const std::string* answer = bundle.sealed_answers.lookup(q.id);
        REQUIRE(answer != nullptr);
        CHECK(*answer == brute_force_answer(q.question));
    }
    CHECK(bundle.sealed_answers.lookup(-1) == nullptr);
}

TEST_CASE("bundle accepts an empty auxiliary pool") {
    TaskConfig task = small_task(5, 30);
    std::vector<QAItem> items = generate_corpus(task, 2);
    PartitionSpec spec;
    spec.num_clients = 3;
    spec.mode = PartitionMode::iid;
    spec.seed = 2;
    CorpusBundle bundle = build_bundle(items, spec, 0, 20, 10, task);
    CHECK(bundle.auxiliary.empty());
}

TEST_CASE("bundle rejects oversized splits") {
    TaskConfig task = small_task(5, 10);
    std::vector<QAItem> items = generate_corpus(task, 2);  // 30 items
    PartitionSpec spec;
    spec.num_clients = 2;
    CHECK_THROWS_AS(build_bundle(items, spec, 20, 20, 20, task), std::invalid_argument);
}

TEST_CASE("corpus jsonl round trip") {
    TaskConfig task = small_task(7, 25);
    std::vector<QAItem> items = generate_corpus(task, 5);
    std::string path = "test_corpus_roundtrip.jsonl";
    write_corpus_jsonl(path, items);
    std::vector<QAItem> loaded = read_corpus_jsonl(path);
    REQUIRE(loaded.size() == items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        CHECK(loaded[i].id == items[i].id);
        CHECK(loaded[i].question == items[i].question);
        CHECK(loaded[i].answer == items[i].answer);
        CHECK(loaded[i].domain == items[i].domain);
    }
    std::remove(path.c_str());
}

TEST_CASE("answer canonicalization") {
    CHECK(canonicalize_answer("01") == "1");
    CHECK(canonicalize_answer(" 1 ") == "1");
    CHECK(canonicalize_answer("-0") == "0");
    CHECK(canonicalize_answer("+5") == "5");
    CHECK(canonicalize_answer("banana") == "banana");
    CHECK(canonicalize_answer("007") == "7");
    CHECK(!parse_integer_answer("banana").has_value());
    CHECK(!parse_integer_answer("1.5").has_value());
    CHECK(!parse_integer_answer("").has_value());
    CHECK(parse_integer_answer("-3") == -3);
}

TEST_CASE("question canonicalization ignores whitespace layout") {
    CHECK(canonicalize_question("3+5 mod 7") == canonicalize_question(" 3 + 5  mod 7 "));
    CHECK(canonicalize_question("3+5 mod 7") != canonicalize_question("3+6 mod 7"));
    CHECK(tokenize("3+5 mod 7") == std::vector<std::string>{"3", "+", "5", "mod", "7"});
    CHECK(tokenize("1-2*3") == std::vector<std::string>{"1", "-", "2", "*", "3"});
    CHECK(tokenize("").empty());
}
