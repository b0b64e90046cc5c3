#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedgrpo/client.hpp"

namespace fedgrpo {

// Wire schema (fixed so byte counts are bit-exact and platform-independent):
//   header: 16 bytes (kind+flags, from, to, round as four 32-bit ints)
//   scalar: 8-byte IEEE double
//   string: 4-byte length prefix + UTF-8 bytes
// Payload bytes per kind:
//   NeighborhoodBroadcast: sum over exemplars of (4+len(q)) + (4+len(a))
//   CompetenceReply:       8
//   CandidateBroadcast:    (4+len(question)) + sum of (4+len(candidate))
//   RewardReply:           16 per candidate (correctness + format doubles);
//                          the pathway flag rides in the header flag bits
enum class MessageKind { NeighborhoodBroadcast, CompetenceReply, CandidateBroadcast, RewardReply };

inline constexpr int kServerEndpoint = 0;
inline constexpr std::int64_t kHeaderBytes = 16;

const char* message_kind_name(MessageKind kind);

struct Message {
    MessageKind kind = MessageKind::CompetenceReply;
    int from = 0;
    int to = 0;
    int round = 0;
    std::int64_t payload_bytes = 0;  // includes the header
    std::string payload_json;        // canonical rendering of the content, for audits
};

// Builders compute payload_bytes from the schema above and render the
// payload for the privacy audit trail.
Message make_neighborhood_broadcast(int to, int round,
                                    const std::vector<std::pair<std::string, std::string>>& exemplars);
Message make_competence_reply(int from, int round, double score);
Message make_candidate_broadcast(int to, int round, const std::string& question,
                                 const std::vector<std::string>& candidates);
Message make_reward_reply(int round, const RewardSignal& signal);

enum class Direction { uplink, downlink };

struct LedgerRow {
    int round;
    MessageKind kind;
    Direction direction;
    std::int64_t bytes;
};

// Byte accounting for one run. Counters only ever grow; per-round rows are
// aggregated per (round, kind, direction) for export.
class TrafficLedger {
public:
    void record(int round, MessageKind kind, Direction direction, std::int64_t bytes);

    std::int64_t total_uplink() const { return total_uplink_; }
    std::int64_t total_downlink() const { return total_downlink_; }
    std::int64_t total_by_kind(MessageKind kind, Direction direction) const;
    const std::vector<LedgerRow>& rows() const { return rows_; }

    void export_csv(const std::string& path) const;

private:
    std::vector<LedgerRow> rows_;
    std::int64_t total_uplink_ = 0;
    std::int64_t total_downlink_ = 0;
    std::map<std::pair<int, int>, std::int64_t> by_kind_;  // (kind, direction) -> bytes
};

// Synchronous, lossless, zero-latency bus between the server (endpoint 0)
// and clients 1..K. Single writer; delivery order is the send order, which
// the orchestrator keeps at ascending client id within a round.
class MessageBus {
public:
    explicit MessageBus(int num_clients, bool keep_log = true);

    void send(const Message& message);

    const TrafficLedger& ledger() const { return ledger_; }
    const std::vector<Message>& log() const { return log_; }
    int num_clients() const { return num_clients_; }

private:
    int num_clients_;
    bool keep_log_;
    TrafficLedger ledger_;
    std::vector<Message> log_;
};

std::int64_t total_uplink(const TrafficLedger& ledger);
std::int64_t total_downlink(const TrafficLedger& ledger);

// Calibrated communication cost models for the baseline transfer methods.
// These are calibrated constants, not reimplementations of the methods:
// the reproducible claims are the ordering and the magnitude gap.
enum class BaselineMethod { fedgrpo, fedpetuning, dpsda };

struct CostModel {
    BaselineMethod method = BaselineMethod::dpsda;
    // fedpetuning: adapter upload per client per round, by model size label.
    std::map<std::string, std::int64_t> adapter_bytes_by_model;
    // dpsda: one-shot synthetic corpus upload, model-size independent.
    std::int64_t synthetic_sample_count = 0;
    std::int64_t synthetic_bytes_per_sample = 0;
};

struct RunShape {
    int rounds = 320;
    int num_clients = 8;
    std::string model_size_label = "7B";
};

inline constexpr std::int64_t kMiB = 1024 * 1024;

// fedpetuning: rounds * clients * adapter_bytes(label); anchored so the 7B
// label totals ~6.1 GiB over the 320x8 reference shape, other labels scaled
// by parameter count. dpsda: sample_count * bytes_per_sample = 102.5 MiB
// exactly. fedgrpo is measured from the ledger, never modeled: asking this
// function for it throws.
std::int64_t baseline_cost(const CostModel& model, const RunShape& shape);

CostModel default_fedpetuning_model();
CostModel default_dpsda_model();

}  // namespace fedgrpo
