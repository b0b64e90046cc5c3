#include "fedgrpo/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "fedgrpo/rng.hpp"
#include "fedgrpo/text.hpp"
#include "json.hpp"

namespace fedgrpo {

namespace {

long long mod_reduce(long long v, long long p) {
    long long r = v % p;
    return r < 0 ? r + p : r;
}

struct DomainRule {
    int operand_count;
    std::string (*build_question)(long long a, long long b, long long c, long long p);
    long long (*answer)(long long a, long long b, long long c, long long p);
};

const std::map<std::string, DomainRule>& domain_rules() {
    static const std::map<std::string, DomainRule> rules = {
        {"add",
         {2,
          [](long long a, long long b, long long, long long p) {
              return std::to_string(a) + "+" + std::to_string(b) + " mod " + std::to_string(p);
          },
          [](long long a, long long b, long long, long long p) { return mod_reduce(a + b, p); }}},
        {"sub",
         {2,
          [](long long a, long long b, long long, long long p) {
              return std::to_string(a) + "-" + std::to_string(b) + " mod " + std::to_string(p);
          },
          [](long long a, long long b, long long, long long p) { return mod_reduce(a - b, p); }}},
        {"mul",
         {2,
          [](long long a, long long b, long long, long long p) {
              return std::to_string(a) + "*" + std::to_string(b) + " mod " + std::to_string(p);
          },
          [](long long a, long long b, long long, long long p) { return mod_reduce(a * b, p); }}},
        {"mix",
         {3,
          [](long long a, long long b, long long c, long long p) {
              return std::to_string(a) + "+" + std::to_string(b) + "*" + std::to_string(c) +
                     " mod " + std::to_string(p);
          },
          [](long long a, long long b, long long c, long long p) {
              return mod_reduce(a + b * c, p);
          }}},
    };
    return rules;
}

}  // namespace

std::vector<QAItem> generate_corpus(const TaskConfig& task, std::uint64_t seed) {
    if (task.modulus < 2) {
        throw std::invalid_argument("generate_corpus: modulus must be at least 2");
    }
    if (task.domains.empty()) {
        throw std::invalid_argument("generate_corpus: at least one domain required");
    }
    if (task.count_per_domain < 1) {
        throw std::invalid_argument("generate_corpus: count_per_domain must be at least 1");
    }
    const auto& rules = domain_rules();
    for (const std::string& d : task.domains) {
        if (rules.find(d) == rules.end()) {
            throw std::invalid_argument("generate_corpus: unknown domain '" + d + "'");
        }
    }

    Rng rng(seed);
    std::vector<QAItem> items;
    items.reserve(task.domains.size() * static_cast<std::size_t>(task.count_per_domain));
    std::int64_t next_id = 0;
    const long long p = task.modulus;
    for (std::size_t d = 0; d < task.domains.size(); ++d) {
        const DomainRule& rule = rules.at(task.domains[d]);
        for (int i = 0; i < task.count_per_domain; ++i) {
            long long a = static_cast<long long>(rng.bounded(static_cast<std::size_t>(p)));
            long long b = static_cast<long long>(rng.bounded(static_cast<std::size_t>(p)));
            long long c = 0;
            if (rule.operand_count == 3) {
                c = static_cast<long long>(rng.bounded(static_cast<std::size_t>(p)));
            }
            QAItem item;
            item.id = next_id++;
            item.question = rule.build_question(a, b, c, p);
            item.answer = std::to_string(rule.answer(a, b, c, p));
            item.domain = static_cast<int>(d);
            items.push_back(std::move(item));
        }
    }
    return items;
}

std::vector<std::vector<QAItem>> partition(const std::vector<QAItem>& items,
                                           const PartitionSpec& spec) {
    if (spec.num_clients < 1) {
        throw std::invalid_argument("partition: need at least one client");
    }
    if (items.empty()) {
        throw std::invalid_argument("partition: no items to partition");
    }
    const std::size_t K = static_cast<std::size_t>(spec.num_clients);
    if (K > items.size()) {
        throw std::runtime_error("partition: fewer items than clients");
    }
    if (spec.mode == PartitionMode::dirichlet && !(spec.beta > 0.0)) {
        throw std::invalid_argument("partition: beta must be positive");
    }

    Rng rng(spec.seed);

    if (spec.mode == PartitionMode::iid) {
        std::vector<std::size_t> order(items.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        std::vector<std::vector<QAItem>> shards(K);
        for (std::size_t i = 0; i < order.size(); ++i) {
            shards[i % K].push_back(items[order[i]]);
        }
        return shards;
    }

    // Group item indices by domain, domains ascending, input order within.
    std::map<int, std::vector<std::size_t>> by_domain;
    for (std::size_t i = 0; i < items.size(); ++i) {
        by_domain[items[i].domain].push_back(i);
    }

    constexpr int kMaxAttempts = 100;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        std::vector<std::vector<QAItem>> shards(K);
        for (const auto& [domain, indices] : by_domain) {
            std::vector<double> props = rng.dirichlet(spec.beta, K);
            std::vector<std::size_t> order = indices;
            rng.shuffle(order);

            const std::size_t n = order.size();
            std::vector<std::size_t> counts(K);
            std::vector<std::pair<double, std::size_t>> fractional(K);
            std::size_t assigned = 0;
            for (std::size_t k = 0; k < K; ++k) {
                double exact = props[k] * static_cast<double>(n);
                counts[k] = static_cast<std::size_t>(exact);
                fractional[k] = {exact - static_cast<double>(counts[k]), k};
                assigned += counts[k];
            }
            // Largest remainder, ties toward lower client index.
            std::sort(fractional.begin(), fractional.end(),
                      [](const auto& lhs, const auto& rhs) {
                          if (lhs.first != rhs.first) return lhs.first > rhs.first;
                          return lhs.second < rhs.second;
                      });
            for (std::size_t r = 0; assigned < n; ++r, ++assigned) {
                counts[fractional[r % K].second] += 1;
            }

            std::size_t cursor = 0;
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t c = 0; c < counts[k]; ++c) {
                    shards[k].push_back(items[order[cursor++]]);
                }
            }
        }
        bool any_empty = false;
        for (const auto& shard : shards) {
            if (shard.empty()) {
                any_empty = true;
                break;
            }
        }
        if (!any_empty) return shards;
        // Very skewed settings (small beta, many clients) can make an
        // all-non-empty draw vanishingly rare. After the final attempt,
        // repair deterministically instead of failing: the largest shard
        // (ties toward lower index) donates its last item to the
        // lowest-indexed empty shard until none remain.
        if (attempt == kMaxAttempts - 1) {
            for (;;) {
                std::size_t empty_idx = K;
                for (std::size_t k = 0; k < K; ++k) {
                    if (shards[k].empty()) {
                        empty_idx = k;
                        break;
                    }
                }
                if (empty_idx == K) break;
                std::size_t donor = 0;
                for (std::size_t k = 1; k < K; ++k) {
                    if (shards[k].size() > shards[donor].size()) donor = k;
                }
                shards[empty_idx].push_back(shards[donor].back());
                shards[donor].pop_back();
            }
            return shards;
        }
    }
    throw std::runtime_error("partition: unreachable");
}

CorpusBundle build_bundle(const std::vector<QAItem>& items, const PartitionSpec& spec,
                          std::size_t aux_size, std::size_t server_size,
                          std::size_t test_size, const TaskConfig& task) {
    if (aux_size + server_size + test_size > items.size()) {
        throw std::invalid_argument("build_bundle: not enough items for the requested split");
    }

    Rng rng(splitmix64(spec.seed ^ kBundleSplitTag));
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    CorpusBundle bundle;
    bundle.domain_names = task.domains;
    bundle.modulus = task.modulus;

    std::size_t cursor = 0;
    for (std::size_t i = 0; i < test_size; ++i) {
        bundle.test.push_back(items[order[cursor++]]);
    }
    for (std::size_t i = 0; i < aux_size; ++i) {
        bundle.auxiliary.push_back(items[order[cursor++]]);
    }
    std::map<std::int64_t, std::string> sealed;
    for (std::size_t i = 0; i < server_size; ++i) {
        const QAItem& item = items[order[cursor++]];
        bundle.server_questions.push_back({item.id, item.question, item.domain});
        sealed[item.id] = item.answer;
    }
    bundle.sealed_answers = SealedAnswerTable(std::move(sealed));

    std::vector<QAItem> client_items;
    client_items.reserve(items.size() - cursor);
    while (cursor < order.size()) {
        client_items.push_back(items[order[cursor++]]);
    }
    bundle.client_shards = partition(client_items, spec);
    return bundle;
}

void write_corpus_jsonl(const std::string& path, const std::vector<QAItem>& items) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("write_corpus_jsonl: cannot open " + path);
    }
    for (const QAItem& item : items) {
        nlohmann::json j;
        j["id"] = item.id;
        j["question"] = item.question;
        j["answer"] = item.answer;
        j["domain"] = item.domain;
        out << j.dump() << "\n";
    }
}

std::vector<QAItem> read_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("read_corpus_jsonl: cannot open " + path);
    }
    std::vector<QAItem> items;
    std::set<std::int64_t> seen;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        QAItem item;
        item.id = j.at("id").get<std::int64_t>();
        item.question = j.at("question").get<std::string>();
        item.answer = j.at("answer").get<std::string>();
        item.domain = j.at("domain").get<int>();
        if (!seen.insert(item.id).second) {
            throw std::runtime_error("read_corpus_jsonl: duplicate item id " +
                                     std::to_string(item.id));
        }
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace fedgrpo
