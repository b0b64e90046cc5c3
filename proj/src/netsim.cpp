#include "fedgrpo/netsim.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fedgrpo {

const char* message_kind_name(MessageKind kind) {
    switch (kind) {
        case MessageKind::NeighborhoodBroadcast: return "neighborhood_broadcast";
        case MessageKind::CompetenceReply: return "competence_reply";
        case MessageKind::CandidateBroadcast: return "candidate_broadcast";
        case MessageKind::RewardReply: return "reward_reply";
    }
    return "unknown";
}

namespace {

std::int64_t string_bytes(const std::string& s) {
    return 4 + static_cast<std::int64_t>(s.size());
}

}  // namespace

Message make_neighborhood_broadcast(
    int to, int round, const std::vector<std::pair<std::string, std::string>>& exemplars) {
    Message msg;
    msg.kind = MessageKind::NeighborhoodBroadcast;
    msg.from = kServerEndpoint;
    msg.to = to;
    msg.round = round;
    msg.payload_bytes = kHeaderBytes;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [question, answer] : exemplars) {
        msg.payload_bytes += string_bytes(question) + string_bytes(answer);
        list.push_back({{"question", question}, {"answer", answer}});
    }
    msg.payload_json = nlohmann::json{{"kind", message_kind_name(msg.kind)},
                                      {"exemplars", list}}
                           .dump();
    return msg;
}

Message make_competence_reply(int from, int round, double score) {
    Message msg;
    msg.kind = MessageKind::CompetenceReply;
    msg.from = from;
    msg.to = kServerEndpoint;
    msg.round = round;
    msg.payload_bytes = kHeaderBytes + 8;
    msg.payload_json = nlohmann::json{{"kind", message_kind_name(msg.kind)},
                                      {"score", score}}
                           .dump();
    return msg;
}

Message make_candidate_broadcast(int to, int round, const std::string& question,
                                 const std::vector<std::string>& candidates) {
    Message msg;
    msg.kind = MessageKind::CandidateBroadcast;
    msg.from = kServerEndpoint;
    msg.to = to;
    msg.round = round;
    msg.payload_bytes = kHeaderBytes + string_bytes(question);
    for (const std::string& c : candidates) msg.payload_bytes += string_bytes(c);
    msg.payload_json = nlohmann::json{{"kind", message_kind_name(msg.kind)},
                                      {"question", question},
                                      {"candidates", candidates}}
                           .dump();
    return msg;
}

Message make_reward_reply(int round, const RewardSignal& signal) {
    Message msg;
    msg.kind = MessageKind::RewardReply;
    msg.from = signal.client_id;
    msg.to = kServerEndpoint;
    msg.round = round;
    msg.payload_bytes = kHeaderBytes + 16 * static_cast<std::int64_t>(signal.per_candidate.size());
    nlohmann::json correctness = nlohmann::json::array();
    nlohmann::json format = nlohmann::json::array();
    for (const CandidateScore& s : signal.per_candidate) {
        correctness.push_back(s.correctness);
        format.push_back(s.format);
    }
    msg.payload_json = nlohmann::json{{"kind", message_kind_name(msg.kind)},
                                      {"request_id", signal.request_id},
                                      {"pathway", signal.pathway == Pathway::AE ? 1 : 0},
                                      {"correctness", correctness},
                                      {"format", format}}
                           .dump();
    return msg;
}

void TrafficLedger::record(int round, MessageKind kind, Direction direction,
                           std::int64_t bytes) {
    if (bytes < 0) {
        throw std::invalid_argument("ledger: negative byte count");
    }
    // Aggregate into an existing (round, kind, direction) row when possible;
    // rows stay sorted by round because rounds arrive in order.
    if (!rows_.empty()) {
        LedgerRow& last = rows_.back();
        if (last.round == round && last.kind == kind && last.direction == direction) {
            last.bytes += bytes;
        } else {
            rows_.push_back({round, kind, direction, bytes});
        }
    } else {
        rows_.push_back({round, kind, direction, bytes});
    }
    if (direction == Direction::uplink) {
        total_uplink_ += bytes;
    } else {
        total_downlink_ += bytes;
    }
    by_kind_[{static_cast<int>(kind), static_cast<int>(direction)}] += bytes;
}

std::int64_t TrafficLedger::total_by_kind(MessageKind kind, Direction direction) const {
    auto it = by_kind_.find({static_cast<int>(kind), static_cast<int>(direction)});
    return it == by_kind_.end() ? 0 : it->second;
}

void TrafficLedger::export_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("ledger: cannot open " + path);
    }
    out << "round,kind,direction,bytes\n";
    for (const LedgerRow& row : rows_) {
        out << row.round << "," << message_kind_name(row.kind) << ","
            << (row.direction == Direction::uplink ? "uplink" : "downlink") << ","
            << row.bytes << "\n";
    }
}

MessageBus::MessageBus(int num_clients, bool keep_log)
    : num_clients_(num_clients), keep_log_(keep_log) {
    if (num_clients < 1) {
        throw std::invalid_argument("bus: need at least one client endpoint");
    }
}

void MessageBus::send(const Message& message) {
    auto valid_endpoint = [this](int id) { return id >= 0 && id <= num_clients_; };
    if (!valid_endpoint(message.from) || !valid_endpoint(message.to)) {
        throw std::invalid_argument("bus: unknown endpoint");
    }
    bool from_server = message.from == kServerEndpoint;
    bool to_server = message.to == kServerEndpoint;
    if (from_server == to_server) {
        throw std::invalid_argument("bus: only server<->client routes exist");
    }
    Direction dir = to_server ? Direction::uplink : Direction::downlink;
    ledger_.record(message.round, message.kind, dir, message.payload_bytes);
    if (keep_log_) log_.push_back(message);
}

std::int64_t total_uplink(const TrafficLedger& ledger) { return ledger.total_uplink(); }
std::int64_t total_downlink(const TrafficLedger& ledger) { return ledger.total_downlink(); }

std::int64_t baseline_cost(const CostModel& model, const RunShape& shape) {
    switch (model.method) {
        case BaselineMethod::fedgrpo:
            throw std::invalid_argument(
                "baseline_cost: fedgrpo traffic is measured from the ledger, not modeled");
        case BaselineMethod::fedpetuning: {
            auto it = model.adapter_bytes_by_model.find(shape.model_size_label);
            if (it == model.adapter_bytes_by_model.end()) {
                throw std::invalid_argument("baseline_cost: unknown model size label '" +
                                            shape.model_size_label + "'");
            }
            return static_cast<std::int64_t>(shape.rounds) * shape.num_clients * it->second;
        }
        case BaselineMethod::dpsda:
            return model.synthetic_sample_count * model.synthetic_bytes_per_sample;
    }
    throw std::invalid_argument("baseline_cost: unknown method");
}

CostModel default_fedpetuning_model() {
    CostModel model;
    model.method = BaselineMethod::fedpetuning;
    // Anchor: 6.1 GiB total over 320 rounds x 8 clients for the 7B label;
    // 3B and 1.5B scaled by parameter count.
    model.adapter_bytes_by_model = {
        {"7B", 2558525},
        {"3B", 1096511},
        {"1.5B", 548255},
    };
    return model;
}

CostModel default_dpsda_model() {
    CostModel model;
    model.method = BaselineMethod::dpsda;
    // 2048 * 52480 = 102.5 MiB exactly.
    model.synthetic_sample_count = 2048;
    model.synthetic_bytes_per_sample = 52480;
    return model;
}

}  // namespace fedgrpo
