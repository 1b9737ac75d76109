#include "mtsconv/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mtsconv/errors.hpp"
#include "mtsconv/interp.hpp"

namespace mtsconv {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(trim(field));
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

bool is_integer(const std::string& s) {
    if (s.empty()) {
        return false;
    }
    std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
    return i < s.size() && std::all_of(s.begin() + static_cast<long>(i), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void check_id(const std::string& id) {
    if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..") {
        throw DataError("utterance id '" + id + "' is not usable as a cache file name");
    }
}

std::size_t count_utterances(const std::map<std::string, std::size_t>& counts, const std::vector<std::string>& speakers) {
    std::size_t n = 0;
    for (const auto& s : speakers) {
        n += counts.at(s);
    }
    return n;
}

fs::path segment_path(const fs::path& dir, const std::string& id, std::size_t k) {
    return dir / (id + ".seg" + std::to_string(k) + ".tensor");
}

}  // namespace

std::vector<std::string> DatasetManifest::speakers() const {
    std::set<std::string> unique;
    for (const auto& e : entries) {
        unique.insert(e.speaker);
    }
    return {unique.begin(), unique.end()};
}

DatasetManifest parse_manifest(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("manifest is empty");
    }
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"id", "path", "label", "speaker"}) {
        throw DataError("manifest header must be 'id,path,label,speaker', got '" + trim(line) + "'");
    }

    struct Raw {
        std::string id, path, label, speaker;
    };
    std::vector<Raw> rows;
    std::set<std::string> ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto f = split_csv_line(line);
        if (f.size() != 4) {
            throw DataError("manifest line " + std::to_string(line_no) + ": expected 4 fields, got " +
                            std::to_string(f.size()));
        }
        if (f[3].empty()) {
            throw DataError("manifest line " + std::to_string(line_no) + ": empty speaker id");
        }
        if (f[2].empty()) {
            throw DataError("manifest line " + std::to_string(line_no) + ": empty label");
        }
        check_id(f[0]);
        if (!ids.insert(f[0]).second) {
            throw DataError("manifest line " + std::to_string(line_no) + ": duplicate id '" + f[0] + "'");
        }
        rows.push_back({f[0], f[1], f[2], f[3]});
    }
    if (rows.empty()) {
        throw DataError("manifest has no entries");
    }

    std::vector<std::string> labels;
    for (const auto& r : rows) {
        labels.push_back(r.label);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    if (std::all_of(labels.begin(), labels.end(), is_integer)) {
        std::sort(labels.begin(), labels.end(),
                  [](const std::string& a, const std::string& b) { return std::stoll(a) < std::stoll(b); });
    }

    DatasetManifest m;
    m.label_names = labels;
    for (auto& r : rows) {
        const auto id = std::find(labels.begin(), labels.end(), r.label) - labels.begin();
        m.entries.push_back({std::move(r.id), std::move(r.path), static_cast<int>(id), std::move(r.speaker)});
    }
    return m;
}

DatasetManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open manifest " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_manifest(buffer.str());
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write manifest " + path.string());
    }
    out << "id,path,label,speaker\n";
    for (const auto& e : manifest.entries) {
        out << e.id << ',' << e.path << ',' << manifest.label_names.at(static_cast<std::size_t>(e.label)) << ','
            << e.speaker << '\n';
    }
}

Split Fold::split_of(const std::string& speaker) const {
    auto contains = [&](const std::vector<std::string>& v) { return std::find(v.begin(), v.end(), speaker) != v.end(); };
    if (contains(train)) {
        return Split::Train;
    }
    if (contains(validation)) {
        return Split::Validation;
    }
    if (contains(test)) {
        return Split::Test;
    }
    return Split::None;
}

FoldPlan build_folds(const DatasetManifest& manifest, std::uint64_t seed, std::size_t fold_count,
                     SplitFractions fractions) {
    std::map<std::string, std::size_t> counts;
    for (const auto& e : manifest.entries) {
        ++counts[e.speaker];
    }
    std::vector<std::string> speakers;
    for (const auto& [s, n] : counts) {
        speakers.push_back(s);
    }
    if (speakers.size() < 4) {
        throw DataError("speaker-independent folds need at least 4 speakers, manifest has " +
                        std::to_string(speakers.size()));
    }
    if (fold_count == 0) {
        throw ParameterError("fold count must be >= 1");
    }
    std::mt19937_64 rng(seed);
    std::shuffle(speakers.begin(), speakers.end(), rng);

    const double total = static_cast<double>(manifest.entries.size());
    const double test_target = fractions.test * total;
    const double val_target = fractions.validation * total;
    const std::size_t n = speakers.size();

    FoldPlan plan;
    plan.seed = seed;
    std::size_t cursor = 0;
    std::size_t tested = 0;
    for (std::size_t k = 0; k < fold_count; ++k) {
        if (tested >= n) {
            plan.warnings.push_back("fold " + std::to_string(k) + ": every speaker was already tested; test speakers repeat");
        }
        // Greedy take from the cycle while it brings the count closer to the target.
        auto take = [&](std::size_t start, double target, std::size_t max_take) {
            std::vector<std::string> block{speakers[start % n]};
            double count = static_cast<double>(counts[block.back()]);
            while (block.size() < max_take) {
                const auto& next = speakers[(start + block.size()) % n];
                const double with = count + static_cast<double>(counts[next]);
                if (std::abs(with - target) < std::abs(count - target)) {
                    block.push_back(next);
                    count = with;
                } else {
                    break;
                }
            }
            return block;
        };

        Fold fold;
        fold.test = take(cursor, test_target, n - 2);
        fold.validation = take(cursor + fold.test.size(), val_target, n - fold.test.size() - 1);
        for (std::size_t i = fold.test.size() + fold.validation.size(); i < n; ++i) {
            fold.train.push_back(speakers[(cursor + i) % n]);
        }
        cursor += fold.test.size();
        tested += fold.test.size();

        const double train_share = static_cast<double>(count_utterances(counts, fold.train)) / total;
        if (std::abs(train_share - fractions.train) > 0.15) {
            plan.warnings.push_back("fold " + std::to_string(k) + ": train share " + std::to_string(train_share) +
                                    " far from target; speaker sizes are too uneven");
        }
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

void write_cache_entry(const fs::path& dir, const ManifestEntry& entry, std::span<const Spectrogram> segments) {
    check_id(entry.id);
    if (segments.empty()) {
        throw DataError("no spectrogram segments for utterance '" + entry.id + "'");
    }
    fs::create_directories(dir);
    for (std::size_t k = 0; k < segments.size(); ++k) {
        save_tensor(segment_path(dir, entry.id, k), segments[k].frames);
    }
    std::ofstream meta(dir / (entry.id + ".meta"));
    if (!meta) {
        throw FormatError("cannot write cache sidecar for '" + entry.id + "'");
    }
    meta << "utterance_id=" << entry.id << '\n'
         << "label=" << entry.label << '\n'
         << "speaker=" << entry.speaker << '\n'
         << "segments=" << segments.size() << '\n'
         << "frames=" << segments.front().time_frames() << '\n'
         << "bins=" << segments.front().bins() << '\n'
         << "hop_seconds=" << segments.front().hop_seconds << '\n'
         << "stats_version=" << kStatsVersion << '\n';
}

std::vector<Tensor> read_cache_entry(const fs::path& dir, const ManifestEntry& entry) {
    const fs::path meta_path = dir / (entry.id + ".meta");
    std::ifstream meta(meta_path);
    if (!meta) {
        throw DataError("missing spectrogram cache for utterance '" + entry.id + "' (" + meta_path.string() + ")");
    }
    std::size_t segments = 0;
    std::string line;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos && line.substr(0, eq) == "segments") {
            segments = std::stoul(line.substr(eq + 1));
        }
    }
    if (segments == 0) {
        throw DataError("cache sidecar for utterance '" + entry.id + "' declares no segments");
    }
    std::vector<Tensor> out;
    for (std::size_t k = 0; k < segments; ++k) {
        const fs::path p = segment_path(dir, entry.id, k);
        if (!fs::exists(p)) {
            throw DataError("missing spectrogram cache for utterance '" + entry.id + "' (" + p.string() + ")");
        }
        out.push_back(load_tensor(p));
    }
    return out;
}

Corpus load_corpus(const DatasetManifest& manifest, const fs::path& cache_dir) {
    Corpus corpus;
    corpus.manifest = manifest;
    for (std::size_t u = 0; u < manifest.entries.size(); ++u) {
        const auto& entry = manifest.entries[u];
        for (Tensor& frames : read_cache_entry(cache_dir, entry)) {
            if (frames.rank() != 2) {
                throw DataError("cache for utterance '" + entry.id + "' is not a [T, F] spectrogram");
            }
            if (!corpus.samples.empty() && frames.shape() != corpus.samples.front().frames.shape()) {
                throw DataError("cache for utterance '" + entry.id + "' has shape " + shape_to_string(frames.shape()) +
                                ", expected " + shape_to_string(corpus.samples.front().frames.shape()));
            }
            corpus.samples.push_back(Sample{std::move(frames), entry.label, u});
        }
    }
    if (corpus.samples.empty()) {
        throw DataError("corpus is empty");
    }
    return corpus;
}

BatchIterator::BatchIterator(std::shared_ptr<const std::vector<Sample>> samples, std::vector<std::size_t> indices,
                             std::size_t batch_size, bool shuffle, std::uint64_t seed)
    : samples_(std::move(samples)), order_(std::move(indices)), batch_size_(batch_size), shuffle_(shuffle), rng_(seed) {
    if (batch_size_ == 0) {
        throw ParameterError("batch size must be >= 1");
    }
}

void BatchIterator::start_epoch() {
    if (shuffle_) {
        std::shuffle(order_.begin(), order_.end(), rng_);
    }
}

std::size_t BatchIterator::batch_count() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

Batch BatchIterator::batch(std::size_t i) const {
    if (i >= batch_count()) {
        throw ParameterError("batch index out of range");
    }
    const std::size_t begin = i * batch_size_;
    const std::size_t end = std::min(order_.size(), begin + batch_size_);
    const Shape& frame_shape = (*samples_)[order_[begin]].frames.shape();
    const std::size_t plane = shape_size(frame_shape);
    Batch b;
    b.inputs = Tensor({end - begin, 1, frame_shape[0], frame_shape[1]});
    for (std::size_t k = begin; k < end; ++k) {
        const Sample& s = (*samples_)[order_[k]];
        std::copy(s.frames.data(), s.frames.data() + plane, b.inputs.data() + (k - begin) * plane);
        b.labels.push_back(s.label);
        b.utterances.push_back(s.utterance);
    }
    return b;
}

FoldData load_fold(const Corpus& corpus, const FoldPlan& plan, std::size_t fold, std::size_t batch_size,
                   std::uint64_t seed) {
    if (fold >= plan.folds.size()) {
        throw ParameterError("fold index " + std::to_string(fold) + " out of range (plan has " +
                             std::to_string(plan.folds.size()) + " folds)");
    }
    const Fold& f = plan.folds[fold];
    std::vector<std::size_t> train, validation, test;
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
        const auto& speaker = corpus.manifest.entries[corpus.samples[i].utterance].speaker;
        switch (f.split_of(speaker)) {
            case Split::Train: train.push_back(i); break;
            case Split::Validation: validation.push_back(i); break;
            case Split::Test: test.push_back(i); break;
            case Split::None: break;
        }
    }
    if (train.empty() || validation.empty() || test.empty()) {
        throw DataError("fold " + std::to_string(fold) + " has an empty split");
    }
    std::vector<Tensor> training_frames;
    training_frames.reserve(train.size());
    for (std::size_t i : train) {
        training_frames.push_back(corpus.samples[i].frames);
    }
    const NormalizationStats stats = compute_stats(training_frames);
    auto normalized = std::make_shared<std::vector<Sample>>(corpus.samples);
    for (Sample& s : *normalized) {
        normalize_in_place(s.frames, stats);
    }
    return FoldData{BatchIterator(normalized, std::move(train), batch_size, true, seed),
                    BatchIterator(normalized, std::move(validation), batch_size, false, seed),
                    BatchIterator(normalized, std::move(test), batch_size, false, seed), stats};
}

Tensor synth_template(std::size_t cls, std::size_t frames, std::size_t bins) {
    if (frames == 0 || bins < 2) {
        throw ParameterError("synthetic template needs >= 1 frame and >= 2 bins");
    }
    constexpr double kLow = 0.1;
    constexpr double kSpan = 0.8;
    constexpr double kWidth = 0.06;
    Tensor t({frames, bins});
    for (std::size_t i = 0; i < frames; ++i) {
        const double x = frames == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(frames - 1);
        const double tent = 1.0 - std::abs(2.0 * x - 1.0);
        const double saw = 2.0 * x - std::floor(2.0 * x);
        double centre = 0.0;
        switch (cls) {
            case 0: centre = kLow + kSpan * x; break;
            case 1: centre = kLow + kSpan * (1.0 - x); break;
            case 2: centre = kLow + kSpan * tent; break;
            case 3: centre = kLow + kSpan * (1.0 - tent); break;
            case 4: centre = kLow + kSpan * saw; break;
            case 5: centre = kLow + kSpan * (1.0 - saw); break;
            case 6: centre = kLow + 0.4 * kSpan * x; break;
            case 7: centre = kLow + kSpan * (0.6 + 0.4 * x); break;
            default: throw ParameterError("synthetic generator supports at most 8 classes");
        }
        for (std::size_t j = 0; j < bins; ++j) {
            const double f = static_cast<double>(j) / static_cast<double>(bins - 1);
            const double d = f - centre;
            t[i * bins + j] = std::exp(-d * d / (2.0 * kWidth * kWidth));
        }
    }
    return t;
}

SynthDataset synth_generate(const SynthConfig& config) {
    if (config.classes < 2) {
        throw ParameterError("synthetic generator needs at least 2 classes");
    }
    if (config.factors.empty() || config.speakers == 0 || config.samples_per_class == 0) {
        throw ParameterError("synthetic generator needs factors, speakers and samples");
    }
    if (config.noise < 0.0) {
        throw ParameterError("noise level must be non-negative");
    }
    std::size_t longest = 0;
    for (double f : config.factors) {
        longest = std::max(longest, scaled_length(config.template_frames, f));
    }
    if (longest > config.time_frames) {
        throw ParameterError("stretched template (" + std::to_string(longest) + " frames) exceeds the " +
                             std::to_string(config.time_frames) + "-frame grid");
    }

    SynthDataset ds;
    ds.config = config;
    for (std::size_t c = 0; c < config.classes; ++c) {
        ds.manifest.label_names.push_back("class" + std::to_string(c));
    }
    std::vector<std::vector<Tensor>> templates(config.classes);
    for (std::size_t c = 0; c < config.classes; ++c) {
        for (double f : config.factors) {
            templates[c].push_back(synth_template(c, scaled_length(config.template_frames, f), config.freq_bins));
        }
    }

    std::mt19937_64 rng(config.seed);
    std::uniform_int_distribution<std::size_t> pick_speaker(0, config.speakers - 1);
    std::uniform_int_distribution<std::size_t> pick_factor(0, config.factors.size() - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const std::size_t total = config.classes * config.samples_per_class;
    const std::size_t width = std::to_string(total).size();
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t cls = i % config.classes;
        const std::size_t speaker = pick_speaker(rng);
        const std::size_t factor_index =
            config.speaker_rates ? speaker % config.factors.size() : pick_factor(rng);
        const Tensor& tmpl = templates[cls][factor_index];
        const std::size_t length = tmpl.extent(0);
        std::uniform_int_distribution<std::size_t> pick_onset(0, config.time_frames - length);
        const std::size_t onset = pick_onset(rng);

        Tensor spec({config.time_frames, config.freq_bins});
        std::copy(tmpl.data(), tmpl.data() + tmpl.size(), spec.data() + onset * config.freq_bins);
        if (config.noise > 0.0) {
            for (double& v : spec.values()) {
                v += config.noise * gauss(rng);
            }
        }

        std::string id = std::to_string(i);
        id = "syn" + std::string(width - id.size(), '0') + id;
        std::string spk = std::to_string(speaker);
        spk = "spk" + std::string(std::to_string(config.speakers - 1).size() - spk.size(), '0') + spk;
        ds.manifest.entries.push_back({id, "cache/" + id + ".seg0.tensor", static_cast<int>(cls), spk});
        ds.spectrograms.push_back(std::move(spec));
        ds.info.push_back({config.factors[factor_index], onset, length});
    }
    return ds;
}

void write_synth(const SynthDataset& dataset, const fs::path& out_dir) {
    fs::create_directories(out_dir / "cache");
    write_manifest(out_dir / "manifest.csv", dataset.manifest);
    for (std::size_t i = 0; i < dataset.spectrograms.size(); ++i) {
        Spectrogram s;
        s.frames = dataset.spectrograms[i];
        write_cache_entry(out_dir / "cache", dataset.manifest.entries[i], std::span<const Spectrogram>(&s, 1));
    }
}

Corpus corpus_from_synth(const SynthDataset& dataset) {
    Corpus corpus;
    corpus.manifest = dataset.manifest;
    for (std::size_t i = 0; i < dataset.spectrograms.size(); ++i) {
        corpus.samples.push_back(Sample{dataset.spectrograms[i], dataset.manifest.entries[i].label, i});
    }
    return corpus;
}

}  // namespace mtsconv
