#include "mtsconv/results.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "mtsconv/errors.hpp"

#ifndef MTSCONV_VERSION
#define MTSCONV_VERSION "0.0.0"
#endif

namespace mtsconv {

namespace {

using nlohmann::json;

constexpr const char* kFormatName = "mtsconv-results";

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string usage_text(const std::vector<std::vector<double>>& usage) {
    std::string out;
    for (std::size_t l = 0; l < usage.size(); ++l) {
        if (l > 0) {
            out += " / ";
        }
        for (std::size_t s = 0; s < usage[l].size(); ++s) {
            out += (s ? ":" : "") + fixed(usage[l][s], 2);
        }
    }
    return out.empty() ? "-" : out;
}

using CellKey = std::tuple<std::string, std::uint64_t, std::string>;  // dataset, seed, arch

int arch_rank(const std::string& arch) {
    try {
        return static_cast<int>(parse_arch(arch));
    } catch (const Error&) {
        return 100;
    }
}

bool cell_less(const ReportCell& a, const ReportCell& b) {
    return std::tuple(a.dataset, a.master_seed, arch_rank(a.arch), a.arch, a.type != "Standard") <
           std::tuple(b.dataset, b.master_seed, arch_rank(b.arch), b.arch, b.type != "Standard");
}

}  // namespace

std::string code_version() { return MTSCONV_VERSION; }

void append_table(ResultsDocument& doc, const ExperimentTable& table, std::uint64_t master_seed) {
    for (std::size_t a = 0; a < table.archs.size(); ++a) {
        const auto& outcome = table.outcomes[a];
        for (std::size_t c = 0; c < outcome.candidates.size(); ++c) {
            const auto& cand = outcome.candidates[c];
            const bool selected = outcome.best_standard == c || outcome.best_mts == c;
            for (const auto& f : cand.folds) {
                ResultRecord r;
                r.dataset = table.dataset;
                r.master_seed = master_seed;
                r.arch = to_string(cand.arch.id);
                r.type = cand.arch.type_name();
                r.scales = cand.arch.mts ? cand.arch.scales.to_string() : "-";
                r.l2 = cand.l2;
                r.selected = selected;
                r.fold = f.fold;
                r.test_accuracy = f.test_accuracy;
                r.validation_accuracy = f.validation_accuracy;
                r.validation_loss = f.validation_loss;
                r.epochs = f.epochs;
                r.best_epoch = f.best_epoch;
                r.seconds_per_epoch = f.seconds_per_epoch;
                r.usage = f.usage;
                doc.records.push_back(std::move(r));
            }
        }
    }
    if (table.timing) {
        doc.timing.push_back({table.dataset, master_seed, *table.timing});
    }
}

std::string results_to_json(const ResultsDocument& doc) {
    json j;
    j["format"] = kFormatName;
    j["version"] = kResultsVersion;
    j["code_version"] = doc.code_version;
    j["config"] = doc.config;
    j["records"] = json::array();
    for (const auto& r : doc.records) {
        j["records"].push_back({{"dataset", r.dataset},
                                {"master_seed", r.master_seed},
                                {"arch", r.arch},
                                {"type", r.type},
                                {"scales", r.scales},
                                {"l2", r.l2},
                                {"selected", r.selected},
                                {"fold", r.fold},
                                {"test_accuracy", r.test_accuracy},
                                {"validation_accuracy", r.validation_accuracy},
                                {"validation_loss", r.validation_loss},
                                {"epochs", r.epochs},
                                {"best_epoch", r.best_epoch},
                                {"seconds_per_epoch", r.seconds_per_epoch},
                                {"usage", r.usage}});
    }
    j["timing"] = json::array();
    for (const auto& t : doc.timing) {
        j["timing"].push_back({{"dataset", t.dataset},
                               {"master_seed", t.master_seed},
                               {"architecture", t.report.architecture},
                               {"standard_seconds_per_epoch", t.report.standard_seconds_per_epoch},
                               {"mts3_seconds_per_epoch", t.report.mts3_seconds_per_epoch},
                               {"ratio", t.report.ratio()}});
    }
    return j.dump(2) + "\n";
}

ResultsDocument results_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (j.value("format", "") != kFormatName) {
            throw FormatError("not a results file (format tag missing)");
        }
        if (j.at("version").get<int>() != kResultsVersion) {
            throw FormatError("unsupported results version " + j.at("version").dump());
        }
        ResultsDocument doc;
        doc.code_version = j.at("code_version").get<std::string>();
        doc.config = j.at("config").get<std::string>();
        for (const auto& e : j.at("records")) {
            ResultRecord r;
            r.dataset = e.at("dataset").get<std::string>();
            r.master_seed = e.at("master_seed").get<std::uint64_t>();
            r.arch = e.at("arch").get<std::string>();
            r.type = e.at("type").get<std::string>();
            r.scales = e.at("scales").get<std::string>();
            r.l2 = e.at("l2").get<double>();
            r.selected = e.at("selected").get<bool>();
            r.fold = e.at("fold").get<std::size_t>();
            r.test_accuracy = e.at("test_accuracy").get<double>();
            r.validation_accuracy = e.at("validation_accuracy").get<double>();
            r.validation_loss = e.at("validation_loss").get<double>();
            r.epochs = e.at("epochs").get<std::size_t>();
            r.best_epoch = e.at("best_epoch").get<std::size_t>();
            r.seconds_per_epoch = e.at("seconds_per_epoch").get<double>();
            r.usage = e.at("usage").get<std::vector<std::vector<double>>>();
            doc.records.push_back(std::move(r));
        }
        for (const auto& e : j.at("timing")) {
            TimingRecord t;
            t.dataset = e.at("dataset").get<std::string>();
            t.master_seed = e.at("master_seed").get<std::uint64_t>();
            t.report.architecture = e.at("architecture").get<std::string>();
            t.report.standard_seconds_per_epoch = e.at("standard_seconds_per_epoch").get<double>();
            t.report.mts3_seconds_per_epoch = e.at("mts3_seconds_per_epoch").get<double>();
            doc.timing.push_back(std::move(t));
        }
        return doc;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed results file: ") + e.what());
    }
}

void write_results(const std::filesystem::path& path, const ResultsDocument& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << results_to_json(doc);
}

ResultsDocument read_results(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read results file " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return results_from_json(buf.str());
}

ResultsDocument merge_results(const std::vector<ResultsDocument>& docs) {
    ResultsDocument out;
    for (const auto& d : docs) {
        if (out.code_version.empty()) {
            out.code_version = d.code_version;
            out.config = d.config;
        }
        out.records.insert(out.records.end(), d.records.begin(), d.records.end());
        out.timing.insert(out.timing.end(), d.timing.begin(), d.timing.end());
    }
    return out;
}

Pairing parse_pairing(const std::string& text) {
    if (text == "cell") {
        return Pairing::Cell;
    }
    if (text == "fold") {
        return Pairing::Fold;
    }
    throw UsageError("pairing must be 'cell' or 'fold', got '" + text + "'");
}

ReportFormat parse_report_format(const std::string& text) {
    if (text == "text") {
        return ReportFormat::Text;
    }
    if (text == "csv") {
        return ReportFormat::Csv;
    }
    if (text == "json") {
        return ReportFormat::Json;
    }
    throw UsageError("format must be text, csv or json, got '" + text + "'");
}

std::vector<ReportCell> report_cells(const ResultsDocument& doc) {
    std::map<std::tuple<std::string, std::uint64_t, std::string, std::string>, ReportCell> cells;
    std::map<std::tuple<std::string, std::uint64_t, std::string, std::string>, std::vector<const ResultRecord*>>
        folds;
    for (const auto& r : doc.records) {
        if (!r.selected) {
            continue;
        }
        folds[{r.dataset, r.master_seed, r.arch, r.type}].push_back(&r);
    }
    std::vector<ReportCell> out;
    for (auto& [key, recs] : folds) {
        std::sort(recs.begin(), recs.end(), [](auto* a, auto* b) { return a->fold < b->fold; });
        ReportCell c;
        std::tie(c.dataset, c.master_seed, c.arch, c.type) = key;
        c.scales = recs.front()->scales;
        c.l2 = recs.front()->l2;
        double sum = 0.0;
        for (const auto* r : recs) {
            c.fold_accuracies.push_back(r->test_accuracy);
            sum += r->test_accuracy;
            if (c.mean_usage.empty()) {
                c.mean_usage = r->usage;
            } else {
                for (std::size_t l = 0; l < c.mean_usage.size(); ++l) {
                    for (std::size_t s = 0; s < c.mean_usage[l].size(); ++s) {
                        c.mean_usage[l][s] += r->usage.at(l).at(s);
                    }
                }
            }
        }
        const auto n = static_cast<double>(recs.size());
        c.mean_test_accuracy = sum / n;
        for (auto& layer : c.mean_usage) {
            for (double& v : layer) {
                v /= n;
            }
        }
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), cell_less);
    return out;
}

PairedResults paired_results(const ResultsDocument& doc, Pairing pairing) {
    std::map<CellKey, const ReportCell*> standard, mts;
    const auto cells = report_cells(doc);
    for (const auto& c : cells) {
        (c.type == "MTS" ? mts : standard)[{c.dataset, c.master_seed, c.arch}] = &c;
    }
    PairedResults out;
    for (const auto& [key, s] : standard) {
        const auto it = mts.find(key);
        if (it == mts.end()) {
            continue;
        }
        const ReportCell* m = it->second;
        if (pairing == Pairing::Cell) {
            out.push_back({s->mean_test_accuracy, m->mean_test_accuracy, s->dataset, s->arch});
        } else {
            if (s->fold_accuracies.size() != m->fold_accuracies.size()) {
                throw DataError("fold counts differ for " + s->dataset + "/" + s->arch);
            }
            for (std::size_t k = 0; k < s->fold_accuracies.size(); ++k) {
                out.push_back({s->fold_accuracies[k], m->fold_accuracies[k], s->dataset, s->arch});
            }
        }
    }
    return out;
}

std::string render_report(const ResultsDocument& doc, ReportFormat format, Pairing pairing) {
    const auto cells = report_cells(doc);
    const PairedResults pairs = paired_results(doc, pairing);
    std::optional<WilcoxonResult> test;
    std::optional<ImprovementSummary> summary;
    if (!pairs.empty()) {
        test = wilcoxon_signed_rank(pairs);
        summary = improvement_summary(pairs);
    }

    if (format == ReportFormat::Json) {
        json j;
        j["code_version"] = doc.code_version;
        j["cells"] = json::array();
        for (const auto& c : cells) {
            j["cells"].push_back({{"dataset", c.dataset},
                                  {"master_seed", c.master_seed},
                                  {"arch", c.arch},
                                  {"type", c.type},
                                  {"scales", c.scales},
                                  {"l2", c.l2},
                                  {"mean_test_accuracy", c.mean_test_accuracy},
                                  {"fold_accuracies", c.fold_accuracies},
                                  {"usage", c.mean_usage}});
        }
        if (test) {
            j["significance"] = {{"pairing", pairing == Pairing::Cell ? "cell" : "fold"},
                                 {"n", test->n},
                                 {"statistic", test->statistic},
                                 {"p_value", test->p_value},
                                 {"exact", test->exact},
                                 {"degenerate", test->degenerate}};
            j["improvement"] = {{"mean", summary->mean},
                                {"std", summary->stddev},
                                {"max", summary->max},
                                {"per_dataset_mean", summary->per_dataset_mean}};
        }
        j["timing"] = json::array();
        for (const auto& t : doc.timing) {
            j["timing"].push_back({{"dataset", t.dataset},
                                   {"master_seed", t.master_seed},
                                   {"architecture", t.report.architecture},
                                   {"ratio", t.report.ratio()}});
        }
        return j.dump(2) + "\n";
    }

    std::ostringstream os;
    if (format == ReportFormat::Csv) {
        os << "dataset,seed,arch,type,scales,l2,mean_test_accuracy,usage\n";
        for (const auto& c : cells) {
            os << c.dataset << ',' << c.master_seed << ',' << c.arch << ',' << c.type << ",\"" << c.scales << "\","
               << c.l2 << ',' << fixed(c.mean_test_accuracy, 6) << ",\"" << usage_text(c.mean_usage) << "\"\n";
        }
    } else {
        // One block per (dataset, seed): rows are types, columns architectures.
        std::map<std::pair<std::string, std::uint64_t>, std::vector<const ReportCell*>> blocks;
        for (const auto& c : cells) {
            blocks[{c.dataset, c.master_seed}].push_back(&c);
        }
        for (const auto& [key, block] : blocks) {
            std::vector<std::string> archs;
            for (const auto* c : block) {
                if (std::find(archs.begin(), archs.end(), c->arch) == archs.end()) {
                    archs.push_back(c->arch);
                }
            }
            os << "dataset " << key.first << " (seed " << key.second << ")\n";
            os << std::left << std::setw(26) << "";
            for (const auto& a : archs) {
                os << std::setw(22) << a;
            }
            os << '\n';
            for (const char* type : {"Standard", "MTS"}) {
                auto find = [&](const std::string& arch) -> const ReportCell* {
                    for (const auto* c : block) {
                        if (c->arch == arch && c->type == type) {
                            return c;
                        }
                    }
                    return nullptr;
                };
                os << std::setw(26) << (std::string(type) + " accuracy (%)");
                for (const auto& a : archs) {
                    const auto* c = find(a);
                    os << std::setw(22) << (c ? fixed(100.0 * c->mean_test_accuracy, 2) : "-");
                }
                os << '\n';
                if (std::string(type) == "MTS") {
                    os << std::setw(26) << "Best scale factors";
                    for (const auto& a : archs) {
                        const auto* c = find(a);
                        os << std::setw(22) << (c ? "(" + c->scales + ")" : "-");
                    }
                    os << '\n' << std::setw(26) << "Use of parallel branches";
                    for (const auto& a : archs) {
                        const auto* c = find(a);
                        os << std::setw(22) << (c ? usage_text(c->mean_usage) : "-");
                    }
                    os << '\n';
                }
            }
            os << '\n';
        }
    }
    if (test) {
        os << "improvement (pp, MTS - standard): mean " << fixed(summary->mean, 2) << ", std "
           << fixed(summary->stddev, 2) << ", max " << fixed(summary->max, 2) << '\n';
        os << "wilcoxon signed-rank (" << (pairing == Pairing::Cell ? "cell" : "fold") << " pairing, n=" << test->n
           << "): W=" << fixed(test->statistic, 1) << ", p=" << fixed(test->p_value, 4)
           << (test->exact ? " (exact)" : " (normal approx.)") << (test->degenerate ? " [all differences zero]" : "")
           << '\n';
    } else {
        os << "no standard/MTS pairs to compare\n";
    }
    for (const auto& t : doc.timing) {
        os << "epoch time " << t.dataset << " seed " << t.master_seed << " " << t.report.architecture
           << ": standard " << fixed(t.report.standard_seconds_per_epoch, 3) << " s, MTS(3) "
           << fixed(t.report.mts3_seconds_per_epoch, 3) << " s, ratio " << fixed(t.report.ratio(), 2) << '\n';
    }
    return os.str();
}

}  // namespace mtsconv
