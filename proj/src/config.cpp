#include "fedgrpo/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedgrpo/rng.hpp"

namespace fedgrpo {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string field;
    while (std::getline(ss, field, ',')) {
        field = trim(field);
        if (!field.empty()) out.push_back(field);
    }
    return out;
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" +
                                    value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key + "' expects a number, got '" +
                                    value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: key '" + key +
                                    "' expects an unsigned integer, got '" + value + "'");
    }
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"modulus", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.modulus = parse_int(k, v);
         }},
        {"domains", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.domains = split_csv(v);
             if (c.domains.empty()) {
                 throw std::invalid_argument("config: key '" + k + "' needs at least one domain");
             }
         }},
        {"count_per_domain", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.count_per_domain = static_cast<int>(parse_int(k, v));
         }},
        {"corpus_file", [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.corpus_file = v;
         }},
        {"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.seed = parse_u64(k, v);
         }},
        {"aux_size", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.aux_size = static_cast<int>(parse_int(k, v));
         }},
        {"server_size", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.server_size = static_cast<int>(parse_int(k, v));
         }},
        {"test_size", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.test_size = static_cast<int>(parse_int(k, v));
         }},
        {"num_clients", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.num_clients = static_cast<int>(parse_int(k, v));
         }},
        {"partition_mode", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "iid") {
                 c.partition_mode = PartitionMode::iid;
             } else if (v == "dirichlet") {
                 c.partition_mode = PartitionMode::dirichlet;
             } else {
                 throw std::invalid_argument("config: key '" + k + "' expects iid|dirichlet");
             }
         }},
        {"beta", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.beta = parse_double(k, v);
         }},
        {"neighborhood_size", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.neighborhood_size = static_cast<int>(parse_int(k, v));
         }},
        {"num_experts", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.num_experts = static_cast<int>(parse_int(k, v));
         }},
        {"group_size", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.group_size = static_cast<int>(parse_int(k, v));
         }},
        {"rounds", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.rounds = static_cast<int>(parse_int(k, v));
         }},
        {"epsilon", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.epsilon = parse_double(k, v);
         }},
        {"learning_rate", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.learning_rate = parse_double(k, v);
         }},
        {"temperature", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.temperature = parse_double(k, v);
         }},
        {"reward_coeff", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.reward_coeff = parse_double(k, v);
         }},
        {"format_coeff", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.format_coeff = parse_double(k, v);
         }},
        {"normalization_axis", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "candidate") {
                 c.normalization_axis = NormalizationAxis::candidate;
             } else if (v == "expert") {
                 c.normalization_axis = NormalizationAxis::expert;
             } else {
                 throw std::invalid_argument("config: key '" + k + "' expects candidate|expert");
             }
         }},
        {"expert_selection", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "competence") {
                 c.expert_selection = ExpertSelection::competence;
             } else if (v == "random") {
                 c.expert_selection = ExpertSelection::random;
             } else {
                 throw std::invalid_argument("config: key '" + k + "' expects competence|random");
             }
         }},
        {"competence_ema", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.competence_ema = parse_double(k, v);
         }},
        {"eval_every", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.eval_every = static_cast<int>(parse_int(k, v));
         }},
        {"evaluation_mode", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "mixed") {
                 c.evaluation_mode = EvaluationMode::mixed;
             } else if (v == "me_only") {
                 c.evaluation_mode = EvaluationMode::me_only;
             } else {
                 throw std::invalid_argument("config: key '" + k + "' expects mixed|me_only");
             }
         }},
        {"embed_dim", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.embed_dim = static_cast<int>(parse_int(k, v));
         }},
        {"knn_neighbors", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.knn_neighbors = static_cast<int>(parse_int(k, v));
         }},
        {"checkpoint_every", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.checkpoint_every = static_cast<int>(parse_int(k, v));
         }},
        {"output_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) {
             c.output_dir = v;
         }},
    };
    return table;
}

}  // namespace

void apply_config_entry(ExperimentConfig& config, const std::string& key,
                        const std::string& value) {
    auto it = setters().find(key);
    if (it == setters().end()) {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    it->second(config, key, value);
}

ExperimentConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides) {
    ExperimentConfig config;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) {
            throw std::runtime_error("config: cannot open '" + path + "'");
        }
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            std::size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                            " is not 'key = value'");
            }
            apply_config_entry(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    for (const std::string& entry : overrides) {
        std::size_t eq = entry.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: override '" + entry + "' is not key=value");
        }
        apply_config_entry(config, trim(entry.substr(0, eq)), trim(entry.substr(eq + 1)));
    }
    validate_config(config);
    return config;
}

void validate_config(const ExperimentConfig& config) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (config.modulus < 2) fail("modulus must be at least 2");
    if (config.domains.empty()) fail("at least one domain required");
    if (config.count_per_domain < 1) fail("count_per_domain must be at least 1");
    if (config.aux_size < 0 || config.server_size < 0 || config.test_size < 0) {
        fail("split sizes must be nonnegative");
    }
    if (config.corpus_file.empty()) {  // replayed corpora are sized downstream
        long long total =
            static_cast<long long>(config.domains.size()) * config.count_per_domain;
        if (config.aux_size + config.server_size + config.test_size >= total) {
            fail("aux_size + server_size + test_size leaves no client items");
        }
    }
    if (config.num_clients < 1) fail("num_clients must be at least 1");
    if (config.num_experts < 1) fail("num_experts must be at least 1");
    if (config.num_experts > config.num_clients) {
        fail("num_experts (" + std::to_string(config.num_experts) +
             ") must not exceed num_clients (" + std::to_string(config.num_clients) + ")");
    }
    if (config.neighborhood_size < 1) fail("neighborhood_size must be at least 1");
    if (config.group_size < 1) fail("group_size must be at least 1");
    if (config.rounds < 0) fail("rounds must be nonnegative");
    if (!(config.epsilon > 0.0)) fail("epsilon must be positive");
    if (!std::isfinite(config.learning_rate)) fail("learning_rate must be finite");
    if (!(config.temperature > 0.0)) fail("temperature must be positive");
    if (config.reward_coeff < 0.0 || config.format_coeff < 0.0) {
        fail("reward coefficients must be nonnegative");
    }
    if (config.partition_mode == PartitionMode::dirichlet && !(config.beta > 0.0)) {
        fail("beta must be positive in dirichlet mode");
    }
    if (config.competence_ema < 0.0 || config.competence_ema > 1.0) {
        fail("competence_ema must lie in [0, 1]");
    }
    if (config.eval_every < 0) fail("eval_every must be nonnegative");
    if (config.embed_dim < 2) fail("embed_dim must be at least 2");
    if (config.knn_neighbors < 1) fail("knn_neighbors must be at least 1");
    if (config.checkpoint_every < 0) fail("checkpoint_every must be nonnegative");
    if (config.output_dir.empty()) fail("output_dir must not be empty");
}

std::uint64_t corpus_seed(const ExperimentConfig& config) {
    return splitmix64(config.seed ^ 0x636f727075ULL);
}
std::uint64_t partition_seed(const ExperimentConfig& config) {
    return splitmix64(config.seed ^ 0x70617274ULL);
}
std::uint64_t retrieval_encoder_seed(const ExperimentConfig& config) {
    return splitmix64(config.seed ^ 0x656d626564ULL);
}
std::uint64_t policy_encoder_seed(const ExperimentConfig& config) {
    return splitmix64(config.seed ^ 0x706f6c69ULL);
}
std::uint64_t client_evaluator_seed(const ExperimentConfig& config, int client_id) {
    return splitmix64(config.seed ^ 0x636c69656e74ULL ^ static_cast<std::uint64_t>(client_id));
}

std::vector<std::pair<std::string, std::string>> config_to_map(const ExperimentConfig& c) {
    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    std::string domains;
    for (const std::string& d : c.domains) {
        if (!domains.empty()) domains += ",";
        domains += d;
    }
    return {
        {"modulus", std::to_string(c.modulus)},
        {"domains", domains},
        {"count_per_domain", std::to_string(c.count_per_domain)},
        {"corpus_file", c.corpus_file},
        {"seed", std::to_string(c.seed)},
        {"aux_size", std::to_string(c.aux_size)},
        {"server_size", std::to_string(c.server_size)},
        {"test_size", std::to_string(c.test_size)},
        {"num_clients", std::to_string(c.num_clients)},
        {"partition_mode", c.partition_mode == PartitionMode::iid ? "iid" : "dirichlet"},
        {"beta", fmt(c.beta)},
        {"neighborhood_size", std::to_string(c.neighborhood_size)},
        {"num_experts", std::to_string(c.num_experts)},
        {"group_size", std::to_string(c.group_size)},
        {"rounds", std::to_string(c.rounds)},
        {"epsilon", fmt(c.epsilon)},
        {"learning_rate", fmt(c.learning_rate)},
        {"temperature", fmt(c.temperature)},
        {"reward_coeff", fmt(c.reward_coeff)},
        {"format_coeff", fmt(c.format_coeff)},
        {"normalization_axis",
         c.normalization_axis == NormalizationAxis::candidate ? "candidate" : "expert"},
        {"expert_selection",
         c.expert_selection == ExpertSelection::competence ? "competence" : "random"},
        {"competence_ema", fmt(c.competence_ema)},
        {"eval_every", std::to_string(c.eval_every)},
        {"evaluation_mode", c.evaluation_mode == EvaluationMode::mixed ? "mixed" : "me_only"},
        {"embed_dim", std::to_string(c.embed_dim)},
        {"knn_neighbors", std::to_string(c.knn_neighbors)},
        {"checkpoint_every", std::to_string(c.checkpoint_every)},
        {"output_dir", c.output_dir},
    };
}

ExperimentConfig config_from_map(
    const std::vector<std::pair<std::string, std::string>>& entries) {
    ExperimentConfig config;
    for (const auto& [key, value] : entries) {
        apply_config_entry(config, key, value);
    }
    validate_config(config);
    return config;
}

}  // namespace fedgrpo
