#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedgrpo/config.hpp"
#include "fedgrpo/corpus.hpp"
#include "fedgrpo/experiment.hpp"

namespace {

std::vector<double> parse_sweep_values(const std::string& csv) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string field;
    while (std::getline(ss, field, ',')) {
        if (field.empty()) continue;
        values.push_back(std::stod(field));
    }
    return values;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedGRPO protocol simulator: reward-only federated policy optimization"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_dir;

    auto* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("--config", config_path, "Config file (key = value lines)");
    run->add_option("--set", overrides, "Override, e.g. --set rounds=100")->take_all();
    run->add_option("--output", output_dir, "Output directory (overrides config)");

    std::string sweep_spec;
    auto* ablate = app.add_subcommand("ablate", "Sweep one parameter (K, M, G or beta)");
    ablate->add_option("--config", config_path, "Config file (key = value lines)");
    ablate->add_option("--set", overrides, "Override, e.g. --set rounds=100")->take_all();
    ablate->add_option("--sweep", sweep_spec, "Sweep spec, e.g. K=4,8,12,16,20")->required();
    ablate->add_option("--output", output_dir, "Output directory (overrides config)");

    std::vector<std::string> report_dirs;
    auto* report = app.add_subcommand("report", "Summarize finished run directories");
    report->add_option("dirs", report_dirs, "Run directories")->required();

    std::string corpus_out;
    auto* corpus = app.add_subcommand("corpus", "Export the generated corpus as jsonl");
    corpus->add_option("--config", config_path, "Config file (key = value lines)");
    corpus->add_option("--set", overrides, "Override, e.g. --set modulus=11")->take_all();
    corpus->add_option("--out", corpus_out, "Output jsonl path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed() || ablate->parsed()) {
            fedgrpo::ExperimentConfig config = fedgrpo::parse_config(config_path, overrides);
            if (!output_dir.empty()) config.output_dir = output_dir;
            fedgrpo::validate_config(config);

            if (run->parsed()) {
                fedgrpo::RunResult result = fedgrpo::run_experiment(config);
                std::cout << "run complete: " << result.output_dir << "\n"
                          << "final pass@1 " << result.final_eval.pass1_overall
                          << " | uplink " << result.bytes_up << " B | downlink "
                          << result.bytes_down << " B\n";
            } else {
                std::size_t eq = sweep_spec.find('=');
                if (eq == std::string::npos) {
                    throw std::invalid_argument("--sweep expects PARAM=v1,v2,...");
                }
                std::string param = sweep_spec.substr(0, eq);
                std::vector<double> values = parse_sweep_values(sweep_spec.substr(eq + 1));
                auto rows = fedgrpo::run_ablation(config, param, values);
                std::cout << "ablation complete: " << rows.size() << " runs under "
                          << fedgrpo::resolve_output_dir(config.output_dir) << "\n";
                for (const auto& row : rows) {
                    std::cout << "  " << row.param << "=" << row.value << " -> pass@1 "
                              << row.pass1_overall << "\n";
                }
            }
        } else if (report->parsed()) {
            return fedgrpo::report_runs(report_dirs, std::cout);
        } else if (corpus->parsed()) {
            fedgrpo::ExperimentConfig config = fedgrpo::parse_config(config_path, overrides);
            fedgrpo::TaskConfig task;
            task.modulus = config.modulus;
            task.domains = config.domains;
            task.count_per_domain = config.count_per_domain;
            auto items = fedgrpo::generate_corpus(task, fedgrpo::corpus_seed(config));
            fedgrpo::write_corpus_jsonl(corpus_out, items);
            std::cout << "wrote " << items.size() << " items to " << corpus_out << "\n";
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
