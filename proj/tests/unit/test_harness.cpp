#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mtsconv/harness.hpp"
#include "mtsconv/results.hpp"
#include "test_util.hpp"

using namespace mtsconv;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli_dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            files[fs::relative(e.path(), root).string()] = slurp(e.path());
        }
    }
    return files;
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"synth", "--out", "/tmp/x", "--bogus"}).code == kExitUsage);
    const Run missing = run({"preprocess", "--manifest", "/nonexistent/m.csv", "--out", "/tmp/mtsconv-never"});
    CHECK(missing.code == kExitUsage);
    CHECK(missing.err.find("not found") != std::string::npos);
    CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("synth output trees are byte-identical across runs") {
    testutil::TempDir dir("synth");
    const std::vector<std::string> common{"--classes", "4", "--seed", "7", "--samples-per-class", "10"};
    auto a = common, b = common;
    a.insert(a.begin(), "synth");
    b.insert(b.begin(), "synth");
    a.insert(a.end(), {"--out", (dir / "a").string()});
    b.insert(b.end(), {"--out", (dir / "b").string()});
    REQUIRE(run(a).code == 0);
    REQUIRE(run(b).code == 0);
    const auto ta = tree(dir / "a"), tb = tree(dir / "b");
    CHECK(ta.size() == 2 + 40 * 2);  // manifest, config, tensor + meta per sample
    CHECK(ta == tb);

    // A non-empty output directory is refused.
    CHECK(run(a).code == kExitUsage);
}

TEST_CASE("config file values apply unless overridden on the command line") {
    testutil::TempDir dir("config");
    std::ofstream(dir / "run.ini") << "[synth]\nclasses = 3\nsamples-per-class = 4\nseed = 5\n";
    REQUIRE(run({"--config", (dir / "run.ini").string(), "synth", "--seed", "6", "--out", (dir / "o").string()})
                .code == 0);
    const std::string cfg = slurp(dir / "o" / "config.ini");
    CHECK(cfg.find("classes=3") != std::string::npos);
    CHECK(cfg.find("seed=6") != std::string::npos);
    const std::string manifest = slurp(dir / "o" / "manifest.csv");
    CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 1 + 12);

    // The resolved config reproduces the run.
    REQUIRE(run({"--config", (dir / "o" / "config.ini").string(), "synth", "--out", (dir / "p").string()}).code == 0);
    CHECK(tree(dir / "o") == tree(dir / "p"));
}

TEST_CASE("train and report on a small synthetic corpus") {
    testutil::TempDir dir("train");
    REQUIRE(run({"synth", "--samples-per-class", "12", "--out", (dir / "data").string()}).code == 0);
    const Run t = run({"train", "--data", (dir / "data").string(), "--arch", "A1", "--mts", "--scales", "0.5,1,2",
                       "--epochs", "3", "--patience", "2", "--out", (dir / "model").string()});
    REQUIRE(t.code == 0);
    CHECK(fs::exists(dir / "model" / "model.ckpt"));
    CHECK(fs::exists(dir / "model" / "history.csv"));
    const ResultsDocument doc = read_results(dir / "model" / "results.json");
    CHECK(doc.code_version == code_version());
    CHECK(doc.config.find("[train]") != std::string::npos);
    REQUIRE(doc.records.size() == 1);
    CHECK(doc.records[0].usage.size() == 1);

    CHECK(run({"train", "--data", (dir / "nope").string(), "--out", (dir / "m2").string()}).code == kExitUsage);
    CHECK(run({"report", "--in", (dir / "model").string()}).code == 0);
}

TEST_CASE("experiment writes a per-architecture comparison report") {
    testutil::TempDir dir("exp");
    const Run r = run({"experiment", "--dataset", "synth", "--archs", "A1", "--samples-per-class", "10",
                       "--l2-grid", "1e-4", "--scale-sets", "0.5,1,2", "--epochs", "2", "--patience", "1",
                       "--out", (dir / "exp").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("Best scale factors") != std::string::npos);
    CHECK(r.out.find("Use of parallel branches") != std::string::npos);
    CHECK(r.out.find("wilcoxon signed-rank") != std::string::npos);
    CHECK(r.out.find("epoch time") != std::string::npos);

    const Run csv = run({"report", "--in", (dir / "exp").string(), "--format", "csv", "--pairing", "fold"});
    REQUIRE(csv.code == 0);
    CHECK(csv.out.rfind("dataset,seed,arch,type", 0) == 0);
    CHECK(csv.out.find("fold pairing, n=") != std::string::npos);
    CHECK(run({"report", "--in", (dir / "exp").string(), "--format", "xml"}).code == kExitUsage);
}

TEST_CASE("results documents round-trip") {
    ResultsDocument doc{"1.2.3", "[x]\na=1\n", {}, {}};
    ResultRecord r;
    r.dataset = "d";
    r.arch = "A2";
    r.type = "MTS";
    r.scales = "0.5,1,2";
    r.usage = {{0.25, 0.25, 0.5}};
    r.selected = true;
    doc.records.push_back(r);
    doc.timing.push_back({"d", 0, TimingReport{1.0, 1.3, "A2"}});
    const ResultsDocument back = results_from_json(results_to_json(doc));
    CHECK(results_to_json(back) == results_to_json(doc));
    CHECK_THROWS_AS(results_from_json("{\"format\": \"other\"}"), FormatError);
    CHECK_THROWS_AS(results_from_json("not json"), FormatError);
}
