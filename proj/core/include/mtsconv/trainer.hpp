#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtsconv/datasets.hpp"
#include "mtsconv/errors.hpp"
#include "mtsconv/model.hpp"

namespace mtsconv {

class TrainingError : public Error {
public:
    using Error::Error;
};

struct TrainConfig {
    std::size_t max_epochs = 500;
    std::size_t patience = 10;  // epochs without validation-loss improvement
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double validation_accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    bool early_stopped = false;

    double seconds_per_epoch() const;
    const EpochRecord& best() const { return epochs.at(best_epoch - 1); }
};

// Tracks the best validation loss; should_stop() once `patience` consecutive
// epochs fail to improve on it strictly.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

    // Returns true when the epoch improved on the best loss so far.
    bool observe(double validation_loss);
    bool should_stop() const noexcept { return stale_ >= patience_; }
    std::size_t best_epoch() const noexcept { return best_epoch_; }
    double best_loss() const noexcept { return best_loss_; }

private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t stale_ = 0;
    double best_loss_ = 0.0;
};

struct EvalResult {
    double loss = 0.0;      // mean per-sample cross entropy
    double accuracy = 0.0;  // per utterance, segment probabilities averaged
    std::size_t utterances = 0;
};

// Eval-phase pass; MTS usage counters accumulate (callers reset them).
EvalResult evaluate(Model& model, const BatchIterator& data);

// Adam + L2 with per-step weight averaging of MTS layers, early stopping on
// validation loss, and restoration of the best-validation parameters.
// Throws TrainingError on a non-finite loss.
TrainHistory train(Model& model, FoldData& fold, const TrainConfig& config);

struct FoldOutcome {
    std::size_t fold = 0;
    double test_accuracy = 0.0;
    double validation_accuracy = 0.0;
    double validation_loss = 0.0;
    std::size_t epochs = 0;
    std::size_t best_epoch = 0;
    double seconds_per_epoch = 0.0;
    std::vector<std::vector<double>> usage;  // per MTS layer, measured on the test split
    std::uint64_t seed = 0;
};

struct ExperimentResult {
    std::string dataset;
    ArchitectureSpec arch;
    double l2 = 0.0;
    std::vector<FoldOutcome> folds;

    double mean_test_accuracy() const;
    double mean_validation_accuracy() const;
    double mean_validation_loss() const;
    double mean_seconds_per_epoch() const;
    std::vector<std::vector<double>> mean_usage() const;
};

// Seed of the model/shuffle streams for one fold; independent of the
// architecture type so standard and MTS runs share initial conditions.
std::uint64_t fold_seed(std::uint64_t master_seed, std::size_t fold);

ExperimentResult cross_validate(const Corpus& corpus, const FoldPlan& plan, const ArchitectureSpec& arch,
                                const TrainConfig& config, const std::string& dataset, std::size_t workers = 1);

struct GridSpec {
    std::vector<double> l2_grid{1e-5, 1e-4, 1e-3, 1e-2};
    std::vector<ScaleSet> scale_sets = default_scale_sets();
    bool standard = true;
    bool mts = true;
};

struct GridSearchOutcome {
    std::vector<ExperimentResult> candidates;
    std::optional<std::size_t> best_standard;
    std::optional<std::size_t> best_mts;
};

// Highest mean validation accuracy; ties go to the lower mean validation loss,
// then to the earlier candidate.
std::size_t select_best(const std::vector<ExperimentResult>& candidates, const std::vector<std::size_t>& among);

// Every (L2, scale set) point is cross-validated over all folds; the same
// scale set is used by every MTS layer of a model.
GridSearchOutcome grid_search(ArchId arch, const Corpus& corpus, const FoldPlan& plan, const GridSpec& grid,
                              const TrainConfig& config, const std::string& dataset, std::size_t workers = 1);

struct TimingReport {
    double standard_seconds_per_epoch = 0.0;
    double mts3_seconds_per_epoch = 0.0;
    std::string architecture;  // architecture the ratio was measured on

    double ratio() const { return mts3_seconds_per_epoch / standard_seconds_per_epoch; }
};

struct ExperimentTable {
    std::string dataset;
    std::vector<ArchId> archs;
    std::vector<GridSearchOutcome> outcomes;  // parallel to archs
    std::optional<TimingReport> timing;
};

ExperimentTable run_experiment(const Corpus& corpus, const FoldPlan& plan, const std::vector<ArchId>& archs,
                               const GridSpec& grid, const TrainConfig& config, const std::string& dataset,
                               std::size_t workers = 1);

// Runs `jobs` callables on up to `workers` threads; rethrows the first failure.
void run_jobs(std::vector<std::function<void()>> jobs, std::size_t workers);

}  // namespace mtsconv
