#include "fedgrpo/experiment.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace fedgrpo {

namespace {

// Lockfile via exclusive create; removed when the guard leaves scope.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (fs::exists(path_)) {
            throw std::runtime_error("output directory is locked by another run: " +
                                     path_.string());
        }
        std::ofstream out(path_);
        if (!out) {
            throw std::runtime_error("cannot create lockfile " + path_.string());
        }
        out << "pid unknown\n";
    }
    ~DirectoryLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void write_eval_curve_csv(const fs::path& path, const std::vector<EvalPoint>& curve,
                          const std::vector<std::string>& domain_names) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "round,pass1_overall";
    for (const std::string& d : domain_names) out << ",pass1_" << d;
    out << "\n";
    for (const EvalPoint& point : curve) {
        out << point.round << "," << format_double(point.pass1_overall);
        for (double v : point.pass1_per_domain) out << "," << format_double(v);
        out << "\n";
    }
}

void write_summary_csv(const fs::path& path, const std::vector<RoundRecord>& records,
                       const std::vector<EvalPoint>& curve,
                       const std::vector<std::string>& domain_names) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "round,question_id,experts,mu,sigma,update_norm,bytes_up,bytes_down,pass1_overall";
    for (const std::string& d : domain_names) out << ",pass1_" << d;
    out << "\n";
    std::size_t eval_cursor = 0;
    for (const RoundRecord& record : records) {
        std::string experts;
        for (int id : record.expert_set.members) {
            if (!experts.empty()) experts += "|";
            experts += std::to_string(id);
        }
        out << record.round << "," << record.question_id << "," << experts << ","
            << format_double(record.group.mu) << "," << format_double(record.group.sigma) << ","
            << format_double(record.update_norm) << "," << record.bytes_up << ","
            << record.bytes_down;
        // Attach the eval that happened right after this round, if any.
        while (eval_cursor < curve.size() && curve[eval_cursor].round < record.round) {
            ++eval_cursor;
        }
        if (eval_cursor < curve.size() && curve[eval_cursor].round == record.round) {
            out << "," << format_double(curve[eval_cursor].pass1_overall);
            for (double v : curve[eval_cursor].pass1_per_domain) {
                out << "," << format_double(v);
            }
        } else {
            out << ",";
            for (std::size_t i = 0; i < domain_names.size(); ++i) out << ",";
        }
        out << "\n";
    }
}

}  // namespace

ExperimentSetup build_experiment(const ExperimentConfig& config) {
    validate_config(config);

    ExperimentSetup setup;
    setup.task.modulus = config.modulus;
    setup.task.domains = config.domains;
    setup.task.count_per_domain = config.count_per_domain;

    std::vector<QAItem> corpus = config.corpus_file.empty()
                                     ? generate_corpus(setup.task, corpus_seed(config))
                                     : read_corpus_jsonl(config.corpus_file);

    PartitionSpec spec;
    spec.num_clients = config.num_clients;
    spec.mode = config.partition_mode;
    spec.beta = config.beta;
    spec.seed = partition_seed(config);
    setup.bundle = build_bundle(corpus, spec, static_cast<std::size_t>(config.aux_size),
                                static_cast<std::size_t>(config.server_size),
                                static_cast<std::size_t>(config.test_size), setup.task);

    setup.retrieval_encoder.dim = static_cast<std::size_t>(config.embed_dim);
    setup.retrieval_encoder.seed = retrieval_encoder_seed(config);
    setup.retrieval_encoder.include_sequence_feature = false;

    // The policy conditions on question-identity features alone: a hashed
    // feature for the whole canonical question. Shared token features would
    // accumulate an additive cross-question approximation that outruns the
    // per-question signal and caps greedy accuracy; the retrieval encoder
    // keeps the token features because similarity is its entire job. The
    // wider space keeps distinct questions near-orthogonal, so updates for
    // one question barely perturb the rest.
    setup.policy_encoder.dim = 16 * static_cast<std::size_t>(config.embed_dim);
    setup.policy_encoder.seed = policy_encoder_seed(config);
    setup.policy_encoder.include_token_features = false;
    setup.policy_encoder.include_sequence_feature = true;
    setup.policy_encoder.sequence_weight = 1.0;

    for (int k = 1; k <= config.num_clients; ++k) {
        ClientConfig client_config;
        client_config.knn_neighbors = config.knn_neighbors;
        client_config.force_model_eval = config.evaluation_mode == EvaluationMode::me_only;
        client_config.answer_range = config.modulus;
        client_config.encoder.dim = static_cast<std::size_t>(config.embed_dim);
        client_config.encoder.seed = retrieval_encoder_seed(config);
        Client client(k, setup.bundle.client_shards[static_cast<std::size_t>(k) - 1],
                      client_config);
        client.train_local_evaluator(client_evaluator_seed(config, k));
        setup.clients.push_back(std::move(client));
    }

    std::vector<std::string> answer_space;
    answer_space.reserve(static_cast<std::size_t>(config.modulus));
    for (long long a = 0; a < config.modulus; ++a) {
        answer_space.push_back(std::to_string(a));
    }
    setup.initial_params = make_uniform_policy(std::move(answer_space),
                                               setup.policy_encoder.dim, config.temperature);

    setup.trainer.neighborhood_size = config.neighborhood_size;
    setup.trainer.num_experts = config.num_experts;
    setup.trainer.group_size = config.group_size;
    setup.trainer.rounds = config.rounds;
    setup.trainer.epsilon = config.epsilon;
    setup.trainer.learning_rate = config.learning_rate;
    setup.trainer.reward_coeff = config.reward_coeff;
    setup.trainer.format_coeff = config.format_coeff;
    setup.trainer.axis = config.normalization_axis;
    setup.trainer.selection = config.expert_selection;
    setup.trainer.competence_ema = config.competence_ema;
    setup.trainer.eval_every = config.eval_every;
    setup.trainer.seed = config.seed;
    return setup;
}

std::string resolve_output_dir(const std::string& dir) {
    fs::path path(dir);
    if (path.is_relative()) {
        if (const char* root = std::getenv(kOutputRootEnv)) {
            if (*root != '\0') return (fs::path(root) / path).string();
        }
    }
    return path.string();
}

RunResult run_experiment(const ExperimentConfig& config) {
    const fs::path out_dir(resolve_output_dir(config.output_dir));
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::exists(out_dir)) {
        throw std::runtime_error("cannot create output directory " + out_dir.string());
    }
    DirectoryLock lock(out_dir);

    ExperimentSetup setup = build_experiment(config);

    // Manifest first: a run is reproducible from this file alone.
    {
        nlohmann::json manifest;
        manifest["version"] = kVersion;
        nlohmann::json cfg = nlohmann::json::object();
        for (const auto& [key, value] : config_to_map(config)) cfg[key] = value;
        manifest["config"] = cfg;
        manifest["derived_seeds"] = {
            {"corpus", corpus_seed(config)},
            {"partition", partition_seed(config)},
            {"retrieval_encoder", retrieval_encoder_seed(config)},
            {"policy_encoder", policy_encoder_seed(config)},
        };
        std::ofstream out(out_dir / "manifest.json");
        if (!out) throw std::runtime_error("cannot write manifest.json");
        out << manifest.dump(2) << "\n";
    }

    MessageBus bus(config.num_clients);
    Trainer trainer(setup.trainer, &setup.bundle, &setup.clients, setup.initial_params,
                    setup.retrieval_encoder, setup.policy_encoder, &bus);

    auto checkpoint_hook = [&](int round, const PolicyParams& params) {
        if (config.checkpoint_every > 0 && round % config.checkpoint_every == 0) {
            std::ostringstream name;
            name << "checkpoint_" << std::setw(5) << std::setfill('0') << round << ".json";
            save_checkpoint(params, (out_dir / name.str()).string());
        }
    };
    Trainer::TrainingResult result = trainer.run_training(checkpoint_hook);

    // Artifacts.
    {
        std::ofstream out(out_dir / "rounds.jsonl");
        if (!out) throw std::runtime_error("cannot write rounds.jsonl");
        for (const RoundRecord& record : result.records) {
            out << round_record_to_json(record).dump() << "\n";
        }
    }
    write_summary_csv(out_dir / "summary.csv", result.records, result.eval_curve,
                      setup.bundle.domain_names);
    write_eval_curve_csv(out_dir / "eval_curve.csv", result.eval_curve,
                         setup.bundle.domain_names);
    bus.ledger().export_csv((out_dir / "traffic.csv").string());
    save_checkpoint(result.final_params, (out_dir / "checkpoint_final.json").string());

    {
        RunShape shape{config.rounds, config.num_clients, "7B"};
        CostModel petuning = default_fedpetuning_model();
        nlohmann::json summary;
        summary["fedgrpo_bytes_up"] = bus.ledger().total_uplink();
        summary["fedgrpo_bytes_down"] = bus.ledger().total_downlink();
        summary["fedgrpo_bytes_total"] =
            bus.ledger().total_uplink() + bus.ledger().total_downlink();
        summary["dpsda_bytes"] = baseline_cost(default_dpsda_model(), shape);
        nlohmann::json by_model = nlohmann::json::object();
        for (const auto& [label, bytes] : petuning.adapter_bytes_by_model) {
            RunShape labeled = shape;
            labeled.model_size_label = label;
            by_model[label] = baseline_cost(petuning, labeled);
        }
        summary["fedpetuning_bytes_by_model"] = by_model;
        std::ofstream out(out_dir / "comm_summary.json");
        if (!out) throw std::runtime_error("cannot write comm_summary.json");
        out << summary.dump(2) << "\n";
    }

    RunResult run;
    run.output_dir = out_dir.string();
    run.eval_curve = result.eval_curve;
    run.final_eval = result.eval_curve.back();
    run.bytes_up = bus.ledger().total_uplink();
    run.bytes_down = bus.ledger().total_downlink();
    for (const Message& msg : bus.log()) {
        if (msg.to == kServerEndpoint) run.uplink_log.push_back(msg);
    }
    return run;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const std::string& param,
                                      const std::vector<double>& values) {
    if (values.empty()) {
        throw std::invalid_argument("ablation: no sweep values");
    }
    auto apply = [&](ExperimentConfig& config, double value) {
        if (param == "K") {
            config.num_clients = static_cast<int>(value);
        } else if (param == "M") {
            config.num_experts = static_cast<int>(value);
        } else if (param == "G") {
            config.group_size = static_cast<int>(value);
        } else if (param == "beta") {
            config.beta = value;
        } else {
            throw std::invalid_argument("ablation: sweep param must be one of K, M, G, beta");
        }
    };

    const fs::path root(resolve_output_dir(base.output_dir));
    std::vector<AblationRow> rows;
    for (double value : values) {
        ExperimentConfig config = base;
        apply(config, value);
        std::ostringstream label;
        label << param << "_" << value;
        config.output_dir = (fs::path(base.output_dir) / label.str()).string();
        validate_config(config);
        RunResult result = run_experiment(config);
        AblationRow row;
        row.param = param;
        row.value = value;
        row.pass1_overall = result.final_eval.pass1_overall;
        row.pass1_per_domain = result.final_eval.pass1_per_domain;
        rows.push_back(std::move(row));
    }

    std::error_code ec;
    fs::create_directories(root, ec);
    std::ofstream out(root / "ablation.csv");
    if (!out) throw std::runtime_error("cannot write ablation.csv");
    out << "param,value,pass1_overall";
    for (const std::string& d : base.domains) out << ",pass1_" << d;
    out << "\n";
    for (const AblationRow& row : rows) {
        out << row.param << "," << format_double(row.value) << ","
            << format_double(row.pass1_overall);
        for (double v : row.pass1_per_domain) out << "," << format_double(v);
        out << "\n";
    }
    return rows;
}

int report_runs(const std::vector<std::string>& run_dirs, std::ostream& out) {
    if (run_dirs.empty()) {
        out << "no run directories given\n";
        return 1;
    }
    std::vector<double> finals;
    out << "run_dir,final_round,final_pass1,bytes_up,bytes_down\n";
    for (const std::string& dir : run_dirs) {
        const fs::path path(resolve_output_dir(dir));
        std::ifstream curve(path / "eval_curve.csv");
        if (!curve) {
            out << dir << ",missing eval_curve.csv,,,\n";
            continue;
        }
        std::string line, last;
        std::getline(curve, line);  // header
        while (std::getline(curve, line)) {
            if (!line.empty()) last = line;
        }
        if (last.empty()) continue;
        std::stringstream ss(last);
        std::string round_str, pass1_str;
        std::getline(ss, round_str, ',');
        std::getline(ss, pass1_str, ',');

        std::int64_t up = 0, down = 0;
        std::ifstream traffic(path / "traffic.csv");
        if (traffic) {
            std::getline(traffic, line);  // header
            while (std::getline(traffic, line)) {
                std::stringstream row(line);
                std::string round_col, kind, direction, bytes;
                std::getline(row, round_col, ',');
                std::getline(row, kind, ',');
                std::getline(row, direction, ',');
                std::getline(row, bytes, ',');
                if (direction == "uplink") {
                    up += std::stoll(bytes);
                } else if (direction == "downlink") {
                    down += std::stoll(bytes);
                }
            }
        }
        finals.push_back(std::stod(pass1_str));
        out << dir << "," << round_str << "," << pass1_str << "," << up << "," << down << "\n";
    }
    if (finals.empty()) {
        out << "no completed runs found\n";
        return 1;
    }
    double mean = 0.0;
    for (double v : finals) mean += v;
    mean /= static_cast<double>(finals.size());
    double var = 0.0;
    for (double v : finals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(finals.size());
    out << "aggregate_mean_pass1," << format_double(mean) << "\n";
    out << "aggregate_std_pass1," << format_double(std::sqrt(var)) << "\n";
    return 0;
}

}  // namespace fedgrpo
