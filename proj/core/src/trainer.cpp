#include "mtsconv/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "mtsconv/adam.hpp"
#include "mtsconv/layers.hpp"

namespace mtsconv {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::string diagnostics(Model& model, std::size_t epoch, std::size_t batch) {
    std::ostringstream os;
    os << "non-finite loss at epoch " << epoch << ", batch " << batch << "; parameter norms:";
    for (const auto& p : model.parameters()) {
        os << ' ' << p.name << '=' << l2_norm(*p.value);
    }
    return os.str();
}

template <typename F>
double mean_over(const std::vector<FoldOutcome>& folds, F&& field) {
    if (folds.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto& f : folds) {
        s += field(f);
    }
    return s / static_cast<double>(folds.size());
}

}  // namespace

double TrainHistory::seconds_per_epoch() const {
    if (epochs.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto& e : epochs) {
        s += e.seconds;
    }
    return s / static_cast<double>(epochs.size());
}

bool EarlyStopping::observe(double validation_loss) {
    ++epoch_;
    if (best_epoch_ == 0 || validation_loss < best_loss_) {
        best_loss_ = validation_loss;
        best_epoch_ = epoch_;
        stale_ = 0;
        return true;
    }
    ++stale_;
    return false;
}

EvalResult evaluate(Model& model, const BatchIterator& data) {
    EvalResult r;
    std::map<std::size_t, std::pair<std::vector<double>, int>> per_utterance;
    double loss_sum = 0.0;
    std::size_t samples = 0;
    for (std::size_t b = 0; b < data.batch_count(); ++b) {
        const Batch batch = data.batch(b);
        const Tensor probs = softmax(model.forward(batch.inputs, Phase::Eval));
        const std::size_t n = batch.labels.size();
        const std::size_t classes = probs.extent(1);
        loss_sum += cross_entropy(probs, batch.labels) * static_cast<double>(n);
        samples += n;
        for (std::size_t i = 0; i < n; ++i) {
            auto& [acc, label] = per_utterance[batch.utterances[i]];
            acc.resize(classes, 0.0);
            for (std::size_t c = 0; c < classes; ++c) {
                acc[c] += probs[i * classes + c];
            }
            label = batch.labels[i];
        }
    }
    std::size_t correct = 0;
    for (const auto& [utt, entry] : per_utterance) {
        const auto& [acc, label] = entry;
        const auto predicted = static_cast<int>(std::max_element(acc.begin(), acc.end()) - acc.begin());
        correct += predicted == label ? 1 : 0;
    }
    r.utterances = per_utterance.size();
    r.loss = samples ? loss_sum / static_cast<double>(samples) : 0.0;
    r.accuracy = r.utterances ? static_cast<double>(correct) / static_cast<double>(r.utterances) : 0.0;
    return r;
}

TrainHistory train(Model& model, FoldData& fold, const TrainConfig& config) {
    if (fold.train.empty() || fold.validation.empty()) {
        throw DataError("training needs non-empty train and validation splits");
    }
    if (config.max_epochs == 0) {
        throw ParameterError("max_epochs must be >= 1");
    }
    AdamState adam(AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8, config.l2});
    auto params = model.parameters();
    std::vector<Tensor*> values;
    std::vector<const Tensor*> grads;
    for (auto& p : params) {
        values.push_back(p.value);
        grads.push_back(p.grad);
    }

    TrainHistory history;
    EarlyStopping stopper(config.patience);
    std::vector<Tensor> best = model.snapshot();
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const auto start = Clock::now();
        model.reset_usage();
        fold.train.start_epoch();
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < fold.train.batch_count(); ++b) {
            const Batch batch = fold.train.batch(b);
            const Tensor probs = softmax(model.forward(batch.inputs, Phase::Train));
            const double loss = cross_entropy(probs, batch.labels);
            if (!std::isfinite(loss)) {
                throw TrainingError(diagnostics(model, epoch, b));
            }
            loss_sum += loss * static_cast<double>(batch.labels.size());
            seen += batch.labels.size();
            model.backward(softmax_cross_entropy_grad(probs, batch.labels));
            adam_step(values, grads, adam);
            model.after_update();
        }
        const EvalResult val = evaluate(model, fold.validation);
        const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
        history.epochs.push_back({epoch, loss_sum / static_cast<double>(seen), val.loss, val.accuracy, seconds});
        if (stopper.observe(val.loss)) {
            best = model.snapshot();
        }
        if (stopper.should_stop()) {
            history.early_stopped = true;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    model.restore(best);
    return history;
}

double ExperimentResult::mean_test_accuracy() const {
    return mean_over(folds, [](const FoldOutcome& f) { return f.test_accuracy; });
}

double ExperimentResult::mean_validation_accuracy() const {
    return mean_over(folds, [](const FoldOutcome& f) { return f.validation_accuracy; });
}

double ExperimentResult::mean_validation_loss() const {
    return mean_over(folds, [](const FoldOutcome& f) { return f.validation_loss; });
}

double ExperimentResult::mean_seconds_per_epoch() const {
    return mean_over(folds, [](const FoldOutcome& f) { return f.seconds_per_epoch; });
}

std::vector<std::vector<double>> ExperimentResult::mean_usage() const {
    std::vector<std::vector<double>> mean;
    if (folds.empty()) {
        return mean;
    }
    mean = folds.front().usage;
    for (std::size_t k = 1; k < folds.size(); ++k) {
        for (std::size_t l = 0; l < mean.size(); ++l) {
            for (std::size_t s = 0; s < mean[l].size(); ++s) {
                mean[l][s] += folds[k].usage[l][s];
            }
        }
    }
    for (auto& layer : mean) {
        for (double& v : layer) {
            v /= static_cast<double>(folds.size());
        }
    }
    return mean;
}

std::uint64_t fold_seed(std::uint64_t master_seed, std::size_t fold) {
    return splitmix64(splitmix64(master_seed) ^ (0xF01Dull + fold));
}

void run_jobs(std::vector<std::function<void()>> jobs, std::size_t workers) {
    if (workers <= 1 || jobs.size() <= 1) {
        for (auto& job : jobs) {
            job();
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    const std::size_t count = std::min(workers, jobs.size());
    for (std::size_t w = 0; w < count; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < jobs.size(); i = next++) {
                try {
                    jobs[i]();
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

namespace {

FoldOutcome run_fold(const Corpus& corpus, const FoldPlan& plan, const ArchitectureSpec& arch,
                     const TrainConfig& config, std::size_t fold) {
    const std::uint64_t seed = fold_seed(config.seed, fold);
    FoldData data = load_fold(corpus, plan, fold, config.batch_size, seed);
    Model model = build_model(arch, corpus.time_frames(), corpus.bins(), corpus.manifest.class_count(), seed);
    const TrainHistory history = train(model, data, config);

    FoldOutcome out;
    out.fold = fold;
    out.seed = seed;
    out.epochs = history.epochs.size();
    out.best_epoch = history.best_epoch;
    out.validation_loss = history.best().validation_loss;
    out.validation_accuracy = history.best().validation_accuracy;
    out.seconds_per_epoch = history.seconds_per_epoch();
    model.reset_usage();
    out.test_accuracy = evaluate(model, data.test).accuracy;
    for (MtsLayer* layer : model.mts_layers()) {
        out.usage.push_back(branch_usage(layer->mts()));
    }
    return out;
}

}  // namespace

ExperimentResult cross_validate(const Corpus& corpus, const FoldPlan& plan, const ArchitectureSpec& arch,
                                const TrainConfig& config, const std::string& dataset, std::size_t workers) {
    ExperimentResult result{dataset, arch, config.l2, std::vector<FoldOutcome>(plan.folds.size())};
    std::vector<std::function<void()>> jobs;
    for (std::size_t k = 0; k < plan.folds.size(); ++k) {
        jobs.emplace_back([&, k] { result.folds[k] = run_fold(corpus, plan, arch, config, k); });
    }
    run_jobs(std::move(jobs), workers);
    return result;
}

std::size_t select_best(const std::vector<ExperimentResult>& candidates, const std::vector<std::size_t>& among) {
    if (among.empty()) {
        throw ParameterError("no candidates to select from");
    }
    std::size_t best = among.front();
    for (std::size_t i : among) {
        const auto& c = candidates.at(i);
        const auto& b = candidates.at(best);
        const double acc = c.mean_validation_accuracy();
        const double best_acc = b.mean_validation_accuracy();
        if (acc > best_acc || (acc == best_acc && c.mean_validation_loss() < b.mean_validation_loss())) {
            best = i;
        }
    }
    return best;
}

GridSearchOutcome grid_search(ArchId arch, const Corpus& corpus, const FoldPlan& plan, const GridSpec& grid,
                              const TrainConfig& config, const std::string& dataset, std::size_t workers) {
    if (grid.l2_grid.empty() || (grid.mts && grid.scale_sets.empty())) {
        throw ParameterError("grid search needs a non-empty L2 grid and scale-set list");
    }
    struct Point {
        ArchitectureSpec spec;
        double l2;
    };
    std::vector<Point> points;
    for (double l2 : grid.l2_grid) {
        if (grid.standard) {
            points.push_back({ArchitectureSpec{arch, false, ScaleSet()}, l2});
        }
        if (grid.mts) {
            for (const auto& scales : grid.scale_sets) {
                points.push_back({ArchitectureSpec{arch, true, scales}, l2});
            }
        }
    }

    GridSearchOutcome out;
    out.candidates.resize(points.size());
    std::vector<std::function<void()>> jobs;
    for (std::size_t p = 0; p < points.size(); ++p) {
        out.candidates[p] = ExperimentResult{dataset, points[p].spec, points[p].l2,
                                             std::vector<FoldOutcome>(plan.folds.size())};
        for (std::size_t k = 0; k < plan.folds.size(); ++k) {
            jobs.emplace_back([&, p, k] {
                TrainConfig c = config;
                c.l2 = points[p].l2;
                out.candidates[p].folds[k] = run_fold(corpus, plan, points[p].spec, c, k);
            });
        }
    }
    run_jobs(std::move(jobs), workers);

    std::vector<std::size_t> standard, mts;
    for (std::size_t p = 0; p < points.size(); ++p) {
        (points[p].spec.mts ? mts : standard).push_back(p);
    }
    if (!standard.empty()) {
        out.best_standard = select_best(out.candidates, standard);
    }
    if (!mts.empty()) {
        out.best_mts = select_best(out.candidates, mts);
    }
    return out;
}

ExperimentTable run_experiment(const Corpus& corpus, const FoldPlan& plan, const std::vector<ArchId>& archs,
                               const GridSpec& grid, const TrainConfig& config, const std::string& dataset,
                               std::size_t workers) {
    ExperimentTable table;
    table.dataset = dataset;
    table.archs = archs;
    for (ArchId arch : archs) {
        table.outcomes.push_back(grid_search(arch, corpus, plan, grid, config, dataset, workers));
    }

    // Epoch-time ratio on A2 when present, else on the first architecture.
    std::size_t pick = 0;
    for (std::size_t i = 0; i < archs.size(); ++i) {
        if (archs[i] == ArchId::A2) {
            pick = i;
        }
    }
    if (!archs.empty()) {
        double standard = 0.0, mts3 = 0.0;
        std::size_t n_standard = 0, n_mts3 = 0;
        for (const auto& c : table.outcomes[pick].candidates) {
            if (!c.arch.mts) {
                standard += c.mean_seconds_per_epoch();
                ++n_standard;
            } else if (c.arch.scales.size() == 3) {
                mts3 += c.mean_seconds_per_epoch();
                ++n_mts3;
            }
        }
        if (n_standard > 0 && n_mts3 > 0) {
            table.timing = TimingReport{standard / static_cast<double>(n_standard),
                                        mts3 / static_cast<double>(n_mts3), to_string(archs[pick])};
        }
    }
    return table;
}

}  // namespace mtsconv
