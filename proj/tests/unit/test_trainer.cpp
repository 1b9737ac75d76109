#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mtsconv/errors.hpp"
#include "mtsconv/model.hpp"
#include "mtsconv/trainer.hpp"
#include "test_util.hpp"

using namespace mtsconv;

TEST_CASE("early stopping triggers after the patience window") {
    EarlyStopping stop(10);
    CHECK(stop.observe(1.0));
    std::size_t epoch = 1;
    while (!stop.should_stop()) {
        CHECK_FALSE(stop.observe(1.0));
        ++epoch;
    }
    CHECK(epoch == 11);
    CHECK(stop.best_epoch() == 1);

    EarlyStopping improving(2);
    improving.observe(3.0);
    improving.observe(3.5);
    improving.observe(2.0);
    CHECK_FALSE(improving.should_stop());
    CHECK(improving.best_epoch() == 3);
}

TEST_CASE("architectures: parameter parity, MTS layer counts, shape errors") {
    for (ArchId id : {ArchId::A1, ArchId::A2, ArchId::A3, ArchId::A4}) {
        const Model standard = build_model({id, false, ScaleSet()}, 99, 64, 4, 1);
        Model mts = build_model({id, true, ScaleSet({0.5, 1.0, 2.0})}, 99, 64, 4, 1);
        CHECK(standard.parameter_count() == mts.parameter_count());
        CHECK(mts.mts_layers().size() == (id == ArchId::A1 || id == ArchId::A2 ? 1u : 2u));
    }
    CHECK_THROWS_AS(build_model({ArchId::A3, false, ScaleSet()}, 20, 20, 4, 1), ShapeError);
    CHECK_THROWS_AS(build_model({ArchId::A1, true, ScaleSet({1.0, 4.0})}, 30, 20, 4, 1), ShapeError);
}

TEST_CASE("A2 on a 99x161 input with seven classes") {
    const Model m = build_model({ArchId::A2, false, ScaleSet()}, 99, 161, 7, 1);
    const std::size_t expected = (10 * 10 * 5 + 10) + (141300 * 200 + 200) + (200 * 7 + 7);
    CHECK(m.parameter_count() == expected);
}

TEST_CASE("select_best equals an exhaustive scan with tie-breaks") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ExperimentResult> cands(6);
        for (auto& c : cands) {
            FoldOutcome f;
            f.validation_accuracy = static_cast<double>(testutil::draw(rng, 0, 3)) / 4.0;
            f.validation_loss = static_cast<double>(testutil::draw(rng, 0, 2));
            c.folds = {f};
        }
        std::vector<std::size_t> among{0, 1, 2, 3, 4, 5};
        std::size_t oracle = 0;
        for (std::size_t i = 1; i < 6; ++i) {
            const auto& a = cands[i].folds[0];
            const auto& b = cands[oracle].folds[0];
            if (a.validation_accuracy > b.validation_accuracy ||
                (a.validation_accuracy == b.validation_accuracy && a.validation_loss < b.validation_loss)) {
                oracle = i;
            }
        }
        CHECK(select_best(cands, among) == oracle);
    }
}

TEST_CASE("training reaches full accuracy on separable data") {
    // Class 0 has a bright upper half, class 1 a bright lower half.
    Corpus corpus;
    std::mt19937_64 rng(52);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::ostringstream manifest;
    manifest << "id,path,label,speaker\n";
    for (std::size_t i = 0; i < 80; ++i) {
        manifest << "u" << i << ",x," << (i % 2) << ",s" << (i % 8) << "\n";
    }
    corpus.manifest = parse_manifest(manifest.str());
    for (std::size_t i = 0; i < 80; ++i) {
        Tensor t({12, 6});
        for (std::size_t r = 0; r < 12; ++r) {
            for (std::size_t c = 0; c < 6; ++c) {
                t.at({r, c}) = ((r < 6) == (i % 2 == 0) ? 1.0 : 0.0) + noise(rng);
            }
        }
        corpus.samples.push_back({t, static_cast<int>(i % 2), i});
    }
    const FoldPlan plan = build_folds(corpus.manifest, 1);
    FoldData data = load_fold(corpus, plan, 0, 8, 1);
    Model model = build_model({ArchId::A1, true, ScaleSet({0.5, 1.0})}, 12, 6, 2, 1);
    TrainConfig cfg;
    cfg.max_epochs = 50;
    cfg.patience = 49;
    const TrainHistory h = train(model, data, cfg);
    CHECK(h.epochs.size() <= 50);
    CHECK(h.best().validation_accuracy == 1.0);
    model.reset_usage();
    CHECK(evaluate(model, data.test).accuracy == 1.0);
}

TEST_CASE("checkpoints restore identical predictions") {
    testutil::TempDir dir("ckpt");
    Model m = build_model({ArchId::A3, true, ScaleSet({0.5, 1.0, 2.0})}, 60, 16, 3, 9);
    std::mt19937_64 rng(53);
    const Tensor x = testutil::random_tensor({2, 1, 60, 16}, rng);
    const Tensor before = m.forward(x, Phase::Eval);
    save_checkpoint(dir / "m.ckpt", m);
    Model loaded = load_checkpoint(dir / "m.ckpt");
    CHECK(loaded.topology() == m.topology());
    CHECK(loaded.forward(x, Phase::Eval) == before);

    std::ofstream(dir / "bad.ckpt") << "not a checkpoint\n";
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), FormatError);
}

TEST_CASE("fold seeds do not depend on the architecture type") {
    CHECK(fold_seed(3, 0) == fold_seed(3, 0));
    CHECK(fold_seed(3, 0) != fold_seed(3, 1));
    CHECK(fold_seed(3, 0) != fold_seed(4, 0));
}

TEST_CASE("run_jobs propagates failures") {
    std::vector<std::function<void()>> jobs;
    std::atomic<int> done{0};
    for (int i = 0; i < 5; ++i) {
        jobs.emplace_back([&, i] {
            if (i == 3) {
                throw DataError("boom");
            }
            ++done;
        });
    }
    CHECK_THROWS_AS(run_jobs(jobs, 2), DataError);
    CHECK(done == 4);
}
