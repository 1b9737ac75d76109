#include "mtsconv/harness.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mtsconv/audio.hpp"
#include "mtsconv/datasets.hpp"
#include "mtsconv/errors.hpp"
#include "mtsconv/results.hpp"
#include "mtsconv/selftest.hpp"
#include "mtsconv/trainer.hpp"

namespace fs = std::filesystem;

namespace mtsconv {

namespace {

struct SynthOptions {
    std::size_t classes = 4;
    std::size_t samples_per_class = 200;
    double noise = 0.5;
    std::string factors = "0.5,1,2";
    std::size_t frames = 32;
    std::size_t bins = 8;
    std::size_t template_frames = 10;
    std::size_t speakers = 10;
    bool speaker_rates = false;

    void attach(CLI::App& app) {
        app.add_option("--classes", classes, "number of classes")->check(CLI::Range(2, 8));
        app.add_option("--samples-per-class", samples_per_class, "samples per class")->check(CLI::PositiveNumber);
        app.add_option("--noise", noise, "additive Gaussian noise std")->check(CLI::NonNegativeNumber);
        app.add_option("--factors", factors, "time-stretch factors, comma separated");
        app.add_option("--frames", frames, "time frames per spectrogram");
        app.add_option("--bins", bins, "frequency bins");
        app.add_option("--template-frames", template_frames, "template length at factor 1");
        app.add_option("--speakers", speakers, "number of synthetic speakers");
        app.add_flag("--speaker-rates", speaker_rates, "one stretch factor per speaker");
    }

    SynthConfig config(std::uint64_t seed) const {
        SynthConfig c;
        c.classes = classes;
        c.samples_per_class = samples_per_class;
        c.noise = noise;
        c.factors = ScaleSet::parse(factors).factors();
        c.time_frames = frames;
        c.freq_bins = bins;
        c.template_frames = template_frames;
        c.speakers = speakers;
        c.speaker_rates = speaker_rates;
        c.seed = seed;
        return c;
    }
};

struct TrainOptions {
    std::size_t epochs = 500;
    std::size_t patience = 10;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::size_t folds = 4;

    void attach(CLI::App& app) {
        app.add_option("--epochs", epochs, "maximum epochs")->check(CLI::PositiveNumber);
        app.add_option("--patience", patience, "early-stopping patience (epochs)")->check(CLI::PositiveNumber);
        app.add_option("--batch", batch, "batch size")->check(CLI::PositiveNumber);
        app.add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
        app.add_option("--folds", folds, "cross-validation folds")->check(CLI::Range(1, 64));
    }

    TrainConfig config(double l2, std::uint64_t seed) const {
        if (patience >= epochs && epochs > 1) {
            throw UsageError("--patience must be smaller than --epochs");
        }
        TrainConfig c;
        c.max_epochs = epochs;
        c.patience = patience;
        c.batch_size = batch;
        c.learning_rate = lr;
        c.l2 = l2;
        c.seed = seed;
        return c;
    }
};

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
    std::vector<double> out;
    for (const auto& item : split(text, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw UsageError("bad number '" + item + "' in " + what);
        }
    }
    if (out.empty()) {
        throw UsageError(what + " is empty");
    }
    return out;
}

std::vector<ScaleSet> parse_scale_sets(const std::string& text) {
    if (text == "default") {
        return default_scale_sets();
    }
    std::vector<ScaleSet> sets;
    for (const auto& item : split(text, ';')) {
        try {
            sets.push_back(ScaleSet::parse(item));
        } catch (const Error& e) {
            throw UsageError(std::string("bad scale set: ") + e.what());
        }
    }
    if (sets.empty()) {
        throw UsageError("no scale sets given");
    }
    return sets;
}

std::vector<ArchId> parse_archs(const std::string& text) {
    std::vector<ArchId> out;
    for (const auto& item : split(text, ',')) {
        try {
            out.push_back(parse_arch(item));
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    if (out.empty()) {
        throw UsageError("no architectures given");
    }
    return out;
}

void prepare_output(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) {
            throw UsageError("output path " + dir.string() + " is not a directory");
        }
        if (!fs::is_empty(dir) && !force) {
            throw UsageError("output directory " + dir.string() + " is not empty (use --force)");
        }
    }
    fs::create_directories(dir);
}

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::is_regular_file(path)) {
        throw UsageError(what + " not found: " + path.string());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
}

// Resolved options of the subcommand that ran, in the --config file format.
std::string resolved_config(const CLI::App& sub) {
    return "# mtsconv " + code_version() + "\n[" + sub.get_name() + "]\n" + sub.config_to_str(true, false);
}

Corpus load_prepared(const fs::path& dir) {
    require_file(dir / "manifest.csv", "manifest");
    if (!fs::is_directory(dir / "cache")) {
        throw UsageError("cache directory not found: " + (dir / "cache").string());
    }
    return load_corpus(read_manifest(dir / "manifest.csv"), dir / "cache");
}

struct Context {
    std::ostream& out;
    std::ostream& err;
};

// --- preprocess -------------------------------------------------------------

struct PreprocessCommand {
    std::string manifest;
    std::string out_dir;
    std::string mode = "pad";
    std::size_t pad_frames = 0;
    std::size_t workers = 1;
    bool force = false;

    void attach(CLI::App& app) {
        app.add_option("--manifest", manifest, "manifest (id,path,label,speaker)")->required();
        app.add_option("--out", out_dir, "output directory")->required()->configurable(false);
        app.add_option("--mode", mode, "pad or segment")->check(CLI::IsMember({"pad", "segment"}));
        app.add_option("--pad-frames", pad_frames, "pad target in frames (0: longest utterance)");
        app.add_option("--workers", workers, "parallel file workers")->check(CLI::PositiveNumber);
        app.add_flag("--force", force, "allow a non-empty output directory")->configurable(false);
    }

    void run(const CLI::App& sub, Context& ctx) const {
        require_file(manifest, "manifest");
        const DatasetManifest m = read_manifest(manifest);
        const fs::path base = fs::path(manifest).parent_path();
        for (const auto& e : m.entries) {
            const fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
            require_file(p, "audio file for '" + e.id + "'");
        }
        prepare_output(out_dir, force);

        std::vector<Spectrogram> specs(m.entries.size());
        std::vector<std::function<void()>> jobs;
        for (std::size_t i = 0; i < m.entries.size(); ++i) {
            jobs.emplace_back([&, i] {
                const auto& e = m.entries[i];
                const fs::path p = fs::path(e.path).is_absolute() ? fs::path(e.path) : base / e.path;
                specs[i] = stft_magnitude(resample_audio(read_wav(p)));
            });
        }
        run_jobs(std::move(jobs), workers);

        FramingMode framing = SegmentMode{};
        if (mode == "pad") {
            std::size_t target = pad_frames;
            for (const auto& s : specs) {
                target = pad_frames ? target : std::max(target, s.time_frames());
            }
            framing = PadMode{target};
        }
        const fs::path cache = fs::path(out_dir) / "cache";
        fs::create_directories(cache);
        std::size_t written = 0;
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto segments = pad_or_segment(specs[i], framing);
            write_cache_entry(cache, m.entries[i], segments);
            written += segments.size();
        }
        write_manifest(fs::path(out_dir) / "manifest.csv", m);
        write_text(fs::path(out_dir) / "config.ini", resolved_config(sub));
        ctx.out << "preprocessed " << m.entries.size() << " utterances into " << written << " spectrograms ("
                << mode << ") -> " << out_dir << '\n';
    }
};

// --- synth ------------------------------------------------------------------

struct SynthCommand {
    SynthOptions synth;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool force = false;

    void attach(CLI::App& app) {
        synth.attach(app);
        app.add_option("--seed", seed, "generator seed");
        app.add_option("--out", out_dir, "output directory")->required()->configurable(false);
        app.add_flag("--force", force, "allow a non-empty output directory")->configurable(false);
    }

    void run(const CLI::App& sub, Context& ctx) const {
        const SynthConfig config = synth.config(seed);
        prepare_output(out_dir, force);
        const SynthDataset data = synth_generate(config);
        write_synth(data, out_dir);
        write_text(fs::path(out_dir) / "config.ini", resolved_config(sub));
        ctx.out << "generated " << data.manifest.entries.size() << " samples (" << config.classes << " classes, "
                << config.time_frames << "x" << config.freq_bins << ") -> " << out_dir << '\n';
    }
};

// --- train ------------------------------------------------------------------

struct TrainCommand {
    TrainOptions train;
    std::string data_dir;
    std::string arch = "A2";
    bool mts = false;
    std::string scales = "0.5,1,2";
    std::size_t fold = 0;
    std::uint64_t seed = 0;
    double l2 = 1e-4;
    std::string out_dir;
    bool force = false;

    void attach(CLI::App& app) {
        train.attach(app);
        app.add_option("--data", data_dir, "prepared dataset directory (manifest.csv + cache/)")->required();
        app.add_option("--arch", arch, "architecture A1..A4");
        app.add_flag("--mts", mts, "enable multi-time-scale convolutions");
        app.add_option("--scales", scales, "scale factors for MTS layers");
        app.add_option("--fold", fold, "fold index");
        app.add_option("--seed", seed, "master seed");
        app.add_option("--l2", l2, "L2 weight")->check(CLI::NonNegativeNumber);
        app.add_option("--out", out_dir, "output directory")->required()->configurable(false);
        app.add_flag("--force", force, "allow a non-empty output directory")->configurable(false);
    }

    void run(const CLI::App& sub, Context& ctx) const {
        ArchitectureSpec spec{parse_archs(arch).front(), mts, ScaleSet()};
        if (mts) {
            spec.scales = parse_scale_sets(scales).front();
        }
        if (fold >= train.folds) {
            throw UsageError("--fold must be below --folds");
        }
        const TrainConfig config = train.config(l2, seed);
        const Corpus corpus = load_prepared(data_dir);
        prepare_output(out_dir, force);

        const FoldPlan plan = build_folds(corpus.manifest, seed, train.folds);
        for (const auto& w : plan.warnings) {
            ctx.err << "warning: " << w << '\n';
        }
        const std::uint64_t fseed = fold_seed(seed, fold);
        FoldData data = load_fold(corpus, plan, fold, config.batch_size, fseed);
        Model model = build_model(spec, corpus.time_frames(), corpus.bins(), corpus.manifest.class_count(), fseed);
        const TrainHistory history = mtsconv::train(model, data, config);
        model.reset_usage();
        const EvalResult test = evaluate(model, data.test);

        std::ostringstream csv;
        csv << "epoch,train_loss,validation_loss,validation_accuracy,seconds\n";
        for (const auto& e : history.epochs) {
            csv << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << ',' << e.validation_accuracy << ','
                << e.seconds << '\n';
        }
        write_text(fs::path(out_dir) / "history.csv", csv.str());
        save_checkpoint(fs::path(out_dir) / "model.ckpt", model);

        ResultsDocument doc{code_version(), resolved_config(sub), {}, {}};
        ResultRecord r;
        r.dataset = fs::path(data_dir).filename().string();
        r.master_seed = seed;
        r.arch = to_string(spec.id);
        r.type = spec.type_name();
        r.scales = spec.mts ? spec.scales.to_string() : "-";
        r.l2 = l2;
        r.selected = true;
        r.fold = fold;
        r.test_accuracy = test.accuracy;
        r.validation_accuracy = history.best().validation_accuracy;
        r.validation_loss = history.best().validation_loss;
        r.epochs = history.epochs.size();
        r.best_epoch = history.best_epoch;
        r.seconds_per_epoch = history.seconds_per_epoch();
        for (MtsLayer* layer : model.mts_layers()) {
            r.usage.push_back(branch_usage(layer->mts()));
        }
        doc.records.push_back(r);
        write_results(fs::path(out_dir) / "results.json", doc);
        write_text(fs::path(out_dir) / "config.ini", doc.config);
        ctx.out << r.arch << ' ' << r.type << " fold " << fold << ": " << r.epochs << " epochs (best "
                << r.best_epoch << "), validation accuracy " << r.validation_accuracy << ", test accuracy "
                << r.test_accuracy << '\n';
    }
};

// --- experiment -------------------------------------------------------------

struct ExperimentCommand {
    TrainOptions train;
    SynthOptions synth;
    std::string dataset = "synth";
    std::string archs = "A1,A2,A3,A4";
    std::size_t seeds = 1;
    std::uint64_t seed = 0;
    std::string l2_grid = "1e-5,1e-4,1e-3,1e-2";
    std::string scale_sets = "default";
    std::size_t workers = 1;
    std::string out_dir;
    bool force = false;

    void attach(CLI::App& app) {
        train.attach(app);
        synth.attach(app);
        app.add_option("--dataset", dataset, "'synth' or a prepared dataset directory");
        app.add_option("--archs", archs, "architectures, comma separated");
        app.add_option("--seeds", seeds, "number of master seeds (seed, seed+1, ...)")->check(CLI::PositiveNumber);
        app.add_option("--seed", seed, "first master seed");
        app.add_option("--l2-grid", l2_grid, "L2 values, comma separated");
        app.add_option("--scale-sets", scale_sets, "'default' or sets like '0.5,1,2;0.25,1,4'");
        app.add_option("--workers", workers, "parallel training jobs")->check(CLI::PositiveNumber);
        app.add_option("--out", out_dir, "output directory")->required()->configurable(false);
        app.add_flag("--force", force, "allow a non-empty output directory")->configurable(false);
    }

    void run(const CLI::App& sub, Context& ctx) const {
        const auto arch_list = parse_archs(archs);
        GridSpec grid;
        grid.l2_grid = parse_doubles(l2_grid, "--l2-grid");
        grid.scale_sets = parse_scale_sets(scale_sets);
        const bool synthetic = dataset == "synth";
        Corpus prepared;
        if (!synthetic) {
            prepared = load_prepared(dataset);
        }
        (void)train.config(0.0, 0);  // validates epochs/patience before any output is written
        prepare_output(out_dir, force);

        ResultsDocument doc{code_version(), resolved_config(sub), {}, {}};
        for (std::size_t i = 0; i < seeds; ++i) {
            const std::uint64_t master = seed + i;
            const Corpus corpus = synthetic ? corpus_from_synth(synth_generate(synth.config(master))) : prepared;
            const std::string name = synthetic ? "synth" : fs::path(dataset).filename().string();
            const FoldPlan plan = build_folds(corpus.manifest, master, train.folds);
            for (const auto& w : plan.warnings) {
                ctx.err << "warning: " << w << '\n';
            }
            const ExperimentTable table =
                run_experiment(corpus, plan, arch_list, grid, train.config(0.0, master), name, workers);
            append_table(doc, table, master);
            ctx.out << "seed " << master << " done\n" << std::flush;
        }
        write_results(fs::path(out_dir) / "results.json", doc);
        write_text(fs::path(out_dir) / "config.ini", doc.config);
        const std::string report = render_report(doc, ReportFormat::Text);
        write_text(fs::path(out_dir) / "report.txt", report);
        ctx.out << report;
    }
};

// --- report -----------------------------------------------------------------

struct ReportCommand {
    std::vector<std::string> inputs;
    std::string format = "text";
    std::string pairing = "cell";

    void attach(CLI::App& app) {
        app.add_option("--in", inputs, "results.json files or directories containing one")->required();
        app.add_option("--format", format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
        app.add_option("--pairing", pairing, "Wilcoxon pairing unit: cell or fold")
            ->check(CLI::IsMember({"cell", "fold"}));
    }

    void run(const CLI::App&, Context& ctx) const {
        std::vector<ResultsDocument> docs;
        for (const auto& in : inputs) {
            const fs::path p = fs::is_directory(in) ? fs::path(in) / "results.json" : fs::path(in);
            require_file(p, "results file");
            docs.push_back(read_results(p));
        }
        ctx.out << render_report(merge_results(docs), parse_report_format(format), parse_pairing(pairing));
    }
};

// --- selftest ---------------------------------------------------------------

struct SelftestCommand {
    std::size_t seeds = 20;

    void attach(CLI::App& app) {
        app.add_option("--seeds", seeds, "gradient-check instances per layer")->check(CLI::PositiveNumber);
    }

    bool run(const CLI::App&, Context& ctx) const {
        auto checks = gradient_checks(seeds);
        for (auto& c : degenerate_equivalence_checks()) {
            checks.push_back(std::move(c));
        }
        bool all = true;
        for (const auto& c : checks) {
            ctx.out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
            all = all && c.passed;
        }
        return all;
    }
};

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"multi-time-scale convolution experiments", "mtsconv"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "configuration file (command-line values take precedence)");
    app.set_version_flag("--version", code_version());
    app.require_subcommand(1);

    PreprocessCommand preprocess;
    SynthCommand synth;
    TrainCommand train;
    ExperimentCommand experiment;
    ReportCommand report;
    SelftestCommand selftest;
    auto* preprocess_app = app.add_subcommand("preprocess", "WAV manifest -> spectrogram cache");
    auto* synth_app = app.add_subcommand("synth", "generate the time-stretched synthetic corpus");
    auto* train_app = app.add_subcommand("train", "train one model on one fold");
    auto* experiment_app = app.add_subcommand("experiment", "grid search + cross-validation over architectures");
    auto* report_app = app.add_subcommand("report", "render results files as a comparison table");
    auto* selftest_app = app.add_subcommand("selftest", "gradient checks and degenerate-equivalence checks");
    preprocess.attach(*preprocess_app);
    synth.attach(*synth_app);
    train.attach(*train_app);
    experiment.attach(*experiment_app);
    report.attach(*report_app);
    selftest.attach(*selftest_app);

    std::vector<const char*> argv{"mtsconv"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    Context ctx{out, err};
    try {
        if (*preprocess_app) {
            preprocess.run(*preprocess_app, ctx);
        } else if (*synth_app) {
            synth.run(*synth_app, ctx);
        } else if (*train_app) {
            train.run(*train_app, ctx);
        } else if (*experiment_app) {
            experiment.run(*experiment_app, ctx);
        } else if (*report_app) {
            report.run(*report_app, ctx);
        } else if (*selftest_app) {
            return selftest.run(*selftest_app, ctx) ? kExitOk : kExitRuntime;
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

int cli_dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace mtsconv
