#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fedgrpo {

// One labeled question. `domain` indexes into the generating task's domain
// list. The answer is the canonical decimal string of the unique result of
// the question under the generator rule (no leading zeros, no whitespace).
struct QAItem {
    std::int64_t id = 0;
    std::string question;
    std::string answer;
    int domain = 0;
};

// Modular arithmetic task. Supported domains:
//   add:  "a+b mod p"     -> (a + b) mod p
//   sub:  "a-b mod p"     -> (a - b) mod p, reduced into [0, p)
//   mul:  "a*b mod p"     -> (a * b) mod p
//   mix:  "a+b*c mod p"   -> (a + b * c) mod p, '*' binds tighter
// Operands are drawn uniformly from [0, p) with replacement, so duplicate
// questions are expected; duplicates always carry the same answer.
struct TaskConfig {
    long long modulus = 7;
    std::vector<std::string> domains = {"add", "sub", "mul"};
    int count_per_domain = 800;
};

enum class PartitionMode { iid, dirichlet };

struct PartitionSpec {
    int num_clients = 8;
    PartitionMode mode = PartitionMode::dirichlet;
    double beta = 0.1;  // Dirichlet concentration; only read in dirichlet mode
    std::uint64_t seed = 0;
};

// A server question with the label stripped at the type level.
struct ServerQuestion {
    std::int64_t id = 0;
    std::string question;
    int domain = 0;
};

// Answers for the server question pool, kept out of reach of the training
// loop. Only diagnostic/scoring code may look things up here.
class SealedAnswerTable {
public:
    SealedAnswerTable() = default;
    explicit SealedAnswerTable(std::map<std::int64_t, std::string> answers)
        : answers_(std::move(answers)) {}

    const std::string* lookup(std::int64_t id) const {
        auto it = answers_.find(id);
        return it == answers_.end() ? nullptr : &it->second;
    }
    std::size_t size() const { return answers_.size(); }

private:
    std::map<std::int64_t, std::string> answers_;
};

// The full data layout of one experiment. All four parts are pairwise
// disjoint by item id.
struct CorpusBundle {
    std::vector<std::vector<QAItem>> client_shards;
    std::vector<QAItem> auxiliary;
    std::vector<ServerQuestion> server_questions;
    std::vector<QAItem> test;
    std::vector<std::string> domain_names;
    long long modulus = 0;
    SealedAnswerTable sealed_answers;
};

// Deterministic corpus generation: one Rng(seed), domains in config order,
// count_per_domain items each; per item the operands are consecutive
// bounded(p) draws (a, b for two-operand domains; a, b, c for mix).
// Throws std::invalid_argument on modulus < 2, empty/unknown domains or
// count_per_domain < 1.
std::vector<QAItem> generate_corpus(const TaskConfig& task, std::uint64_t seed);

// Splits items into num_clients shards. Exhaustive and exclusive: every
// item lands in exactly one shard.
//
// iid mode: Fisher-Yates shuffle of the item list with Rng(seed), then item
// i of the shuffled order goes to shard i % K.
//
// dirichlet mode, one attempt:
//   for each domain label in ascending order over the items present:
//     draw proportions ~ Dirichlet(beta) of length K,
//     Fisher-Yates shuffle that domain's items,
//     split counts by largest remainder (floor(p_k * n), leftovers to the
//     largest fractional parts, ties toward lower k),
//     hand out consecutive runs to shards 0..K-1.
// Attempts with an empty shard are redrawn (the Rng stream continues) up to
// 100 times; if the last attempt still has empty shards they are repaired
// deterministically (largest shard donates its last item, ties toward the
// lower index). K < 1, empty input or K > |items| raise immediately.
std::vector<std::vector<QAItem>> partition(const std::vector<QAItem>& items,
                                           const PartitionSpec& spec);

// Splits a corpus into the four bundle parts and partitions the remainder
// across clients. The split order is one Fisher-Yates shuffle with
// Rng(splitmix64(spec.seed ^ kBundleSplitTag)), then test | auxiliary |
// server questions | client items. Server questions lose their answers;
// the answers move into the sealed table.
// Throws std::invalid_argument when aux + server + test exceeds |items|.
inline constexpr std::uint64_t kBundleSplitTag = 0x62756e646c65ULL;
CorpusBundle build_bundle(const std::vector<QAItem>& items, const PartitionSpec& spec,
                          std::size_t aux_size, std::size_t server_size,
                          std::size_t test_size, const TaskConfig& task);

// Line-delimited JSON corpus exchange: {"id":..,"question":..,"answer":..,
// "domain":..} per line.
void write_corpus_jsonl(const std::string& path, const std::vector<QAItem>& items);
std::vector<QAItem> read_corpus_jsonl(const std::string& path);

}  // namespace fedgrpo
