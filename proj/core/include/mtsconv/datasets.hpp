#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mtsconv/audio.hpp"
#include "mtsconv/tensor.hpp"

namespace mtsconv {

struct ManifestEntry {
    std::string id;
    std::string path;
    int label = 0;
    std::string speaker;
};

/// Utterance records with labels mapped onto 0..C-1.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> label_names;  // label_names[class id]

    std::size_t class_count() const noexcept { return label_names.size(); }
    std::vector<std::string> speakers() const;  // sorted, unique
};

// Comma-separated text with header `id,path,label,speaker`. Labels may be any
// token; they are mapped to contiguous ids (numeric order when all labels are
// integers, lexicographic otherwise).
DatasetManifest read_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

enum class Split { Train, Validation, Test, None };

struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;

    Split split_of(const std::string& speaker) const;
};

struct SplitFractions {
    double train = 0.7;
    double validation = 0.2;
    double test = 0.1;
};

struct FoldPlan {
    std::vector<Fold> folds;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

// Speaker-disjoint folds. Speakers are shuffled by `seed` and walked
// cyclically; each fold takes a test block, then the following validation
// block, greedily adding speakers while that moves the split's utterance count
// closer to its target fraction. Test blocks advance between folds so no
// speaker is tested twice while enough speakers remain.
FoldPlan build_folds(const DatasetManifest& manifest, std::uint64_t seed, std::size_t fold_count = 4,
                     SplitFractions fractions = {});

// --- spectrogram cache ------------------------------------------------------

inline constexpr const char* kStatsVersion = "raw-v1";

// Writes <dir>/<id>.seg<k>.tensor for every segment plus a <id>.meta sidecar.
void write_cache_entry(const std::filesystem::path& dir, const ManifestEntry& entry,
                       std::span<const Spectrogram> segments);
std::vector<Tensor> read_cache_entry(const std::filesystem::path& dir, const ManifestEntry& entry);

struct Sample {
    Tensor frames;  // [T, F]
    int label = 0;
    std::size_t utterance = 0;  // index into the manifest
};

struct Corpus {
    DatasetManifest manifest;
    std::vector<Sample> samples;

    std::size_t time_frames() const { return samples.front().frames.extent(0); }
    std::size_t bins() const { return samples.front().frames.extent(1); }
};

// Throws DataError naming the first utterance whose cache is missing, and
// when spectrogram sizes disagree.
Corpus load_corpus(const DatasetManifest& manifest, const std::filesystem::path& cache_dir);

// --- batching ---------------------------------------------------------------

struct Batch {
    Tensor inputs;  // [b, 1, T, F]
    std::vector<int> labels;
    std::vector<std::size_t> utterances;
};

class BatchIterator {
public:
    BatchIterator() = default;
    BatchIterator(std::shared_ptr<const std::vector<Sample>> samples, std::vector<std::size_t> indices,
                  std::size_t batch_size, bool shuffle, std::uint64_t seed);

    // Reshuffles the visiting order (no-op for fixed-order iterators).
    void start_epoch();
    std::size_t batch_count() const noexcept;
    Batch batch(std::size_t i) const;

    std::size_t size() const noexcept { return order_.size(); }
    bool empty() const noexcept { return order_.empty(); }
    const std::vector<std::size_t>& order() const noexcept { return order_; }

private:
    std::shared_ptr<const std::vector<Sample>> samples_;
    std::vector<std::size_t> order_;
    std::size_t batch_size_ = 32;
    bool shuffle_ = false;
    std::mt19937_64 rng_;
};

struct FoldData {
    BatchIterator train;
    BatchIterator validation;
    BatchIterator test;
    NormalizationStats stats;
};

// Normalizes every sample with statistics of the fold's training split and
// wraps the three splits in iterators (train shuffled per epoch).
FoldData load_fold(const Corpus& corpus, const FoldPlan& plan, std::size_t fold, std::size_t batch_size,
                   std::uint64_t seed);

// --- synthetic corpus -------------------------------------------------------

struct SynthConfig {
    std::size_t classes = 4;
    std::vector<double> factors{0.5, 1.0, 2.0};
    std::size_t samples_per_class = 200;
    double noise = 0.5;
    std::uint64_t seed = 0;
    std::size_t time_frames = 32;
    std::size_t freq_bins = 8;
    std::size_t template_frames = 10;
    std::size_t speakers = 10;
    // When set, every speaker uses one stretch factor (speaker k uses
    // factors[k % n]); otherwise each sample draws its factor independently.
    bool speaker_rates = false;
};

struct SynthSampleInfo {
    double factor = 1.0;
    std::size_t onset = 0;
    std::size_t length = 0;
};

struct SynthDataset {
    SynthConfig config;
    DatasetManifest manifest;
    std::vector<Tensor> spectrograms;  // [T, F] per manifest entry
    std::vector<SynthSampleInfo> info;
};

// Class template rendered over `frames` time steps: a narrow spectral ridge
// following a class-specific frequency trajectory (rising, falling, rise-fall,
// fall-rise, ...). Rendering at k*L frames is the time-stretch by k.
Tensor synth_template(std::size_t cls, std::size_t frames, std::size_t bins);

SynthDataset synth_generate(const SynthConfig& config);

// Writes manifest.csv and cache/ under `out_dir`, in the preprocessing formats.
void write_synth(const SynthDataset& dataset, const std::filesystem::path& out_dir);
Corpus corpus_from_synth(const SynthDataset& dataset);

}  // namespace mtsconv
