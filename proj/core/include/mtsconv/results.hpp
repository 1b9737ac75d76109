#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtsconv/stats.hpp"
#include "mtsconv/trainer.hpp"

namespace mtsconv {

inline constexpr int kResultsVersion = 1;

std::string code_version();

/// One (dataset, arch, type, scale set, L2, fold) training outcome.
struct ResultRecord {
    std::string dataset;
    std::uint64_t master_seed = 0;
    std::string arch;
    std::string type;  // "Standard" or "MTS"
    std::string scales;
    double l2 = 0.0;
    bool selected = false;  // chosen by the grid search for its (dataset, arch, type)
    std::size_t fold = 0;
    double test_accuracy = 0.0;
    double validation_accuracy = 0.0;
    double validation_loss = 0.0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    double seconds_per_epoch = 0.0;
    std::vector<std::vector<double>> usage;  // per MTS layer
};

struct TimingRecord {
    std::string dataset;
    std::uint64_t master_seed = 0;
    TimingReport report;
};

struct ResultsDocument {
    std::string code_version;
    std::string config;  // resolved run configuration, verbatim
    std::vector<ResultRecord> records;
    std::vector<TimingRecord> timing;
};

void append_table(ResultsDocument& doc, const ExperimentTable& table, std::uint64_t master_seed);

std::string results_to_json(const ResultsDocument& doc);
ResultsDocument results_from_json(const std::string& text);
void write_results(const std::filesystem::path& path, const ResultsDocument& doc);
ResultsDocument read_results(const std::filesystem::path& path);
// Concatenates records; config text and version of the first document are kept.
ResultsDocument merge_results(const std::vector<ResultsDocument>& docs);

/// Selected configuration of one (dataset, seed, arch, type) cell.
struct ReportCell {
    std::string dataset;
    std::uint64_t master_seed = 0;
    std::string arch;
    std::string type;
    std::string scales;
    double l2 = 0.0;
    double mean_test_accuracy = 0.0;
    std::vector<double> fold_accuracies;
    std::vector<std::vector<double>> mean_usage;
};

enum class Pairing { Cell, Fold };

Pairing parse_pairing(const std::string& text);

std::vector<ReportCell> report_cells(const ResultsDocument& doc);
// Standard vs MTS pairs: one per (dataset, seed, arch) cell, or one per fold.
PairedResults paired_results(const ResultsDocument& doc, Pairing pairing = Pairing::Cell);

enum class ReportFormat { Text, Csv, Json };

ReportFormat parse_report_format(const std::string& text);

// Comparison layout (rows: type, columns: architectures) per dataset and seed,
// followed by the improvement summary, the significance line and timing.
std::string render_report(const ResultsDocument& doc, ReportFormat format, Pairing pairing = Pairing::Cell);

}  // namespace mtsconv
