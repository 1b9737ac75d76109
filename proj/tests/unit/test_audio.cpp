#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mtsconv/audio.hpp"
#include "mtsconv/errors.hpp"
#include "test_util.hpp"

using namespace mtsconv;

namespace {

AudioClip sine(double freq, std::size_t n, double rate = 16000.0) {
    AudioClip c;
    c.sample_rate = rate;
    c.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate);
    }
    return c;
}

}  // namespace

TEST_CASE("stft frame count follows floor((N - 320) / 160) + 1") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = testutil::draw(rng, 320, 5000);
        const std::size_t expect = (n - 320) / 160 + 1;
        CHECK(stft_frame_count(n) == expect);
        AudioClip c;
        c.sample_rate = 16000.0;
        c.samples.assign(n, 0.1);
        const Spectrogram s = stft_magnitude(c);
        CHECK(s.time_frames() == expect);
        CHECK(s.bins() == 161);
    }
    CHECK_THROWS_AS(stft_magnitude(sine(1000.0, 100)), DataError);
}

TEST_CASE("a 1 kHz sine peaks at bin 20") {
    const Spectrogram s = stft_magnitude(sine(1000.0, 16000));
    for (std::size_t t = 0; t < s.time_frames(); ++t) {
        std::size_t best = 0;
        for (std::size_t f = 1; f < s.bins(); ++f) {
            if (s.frames.at({t, f}) > s.frames.at({t, best})) {
                best = f;
            }
        }
        CHECK(best == 20);
    }
}

TEST_CASE("magnitudes are non-negative") {
    std::mt19937_64 rng(42);
    AudioClip c;
    c.sample_rate = 16000.0;
    const Tensor noise = testutil::random_tensor({2000}, rng);
    c.samples.assign(noise.values().begin(), noise.values().end());
    const Spectrogram s = stft_magnitude(c);
    for (double v : s.frames.values()) {
        CHECK(v >= 0.0);
    }
}

TEST_CASE("segment count closed form") {
    const SegmentMode m{};
    CHECK(segment_count(100, m) == 1);
    CHECK(segment_count(399, m) == 1);
    CHECK(segment_count(400, m) == 2);
    CHECK(segment_count(599, m) == 2);
    CHECK(segment_count(899, m) == 4);  // a 9 s utterance
    Spectrogram s;
    s.frames = Tensor::filled({899, 161}, 1.0);
    const auto segs = pad_or_segment(s, m);
    REQUIRE(segs.size() == 4);
    for (const auto& seg : segs) {
        CHECK(seg.time_frames() == 399);
    }
    CHECK(segs[3].frames.at({298, 0}) == 1.0);  // frames 600..898
    CHECK(segs[3].frames.at({299, 0}) == 0.0);  // zero tail
}

TEST_CASE("pad mode appends zero frames") {
    Spectrogram s;
    s.frames = Tensor::filled({5, 3}, 2.0);
    const auto padded = pad_or_segment(s, PadMode{8});
    REQUIRE(padded.size() == 1);
    CHECK(padded[0].time_frames() == 8);
    CHECK(padded[0].frames.at({4, 2}) == 2.0);
    CHECK(padded[0].frames.at({7, 2}) == 0.0);
    CHECK_THROWS(pad_or_segment(s, PadMode{3}));
}

TEST_CASE("normalization uses scalar training statistics") {
    std::mt19937_64 rng(43);
    std::vector<Tensor> train;
    for (int i = 0; i < 5; ++i) {
        Tensor t = testutil::random_tensor({7, 4}, rng, 3.0);
        t += Tensor::filled({7, 4}, 10.0);
        train.push_back(t);
    }
    const NormalizationStats stats = compute_stats(train);
    double s = 0.0, sq = 0.0, n = 0.0;
    for (const auto& t : train) {
        const Tensor z = normalize(t, stats);
        for (double v : z.values()) {
            s += v;
            sq += v * v;
            n += 1.0;
        }
    }
    CHECK(std::abs(s / n) < 1e-9);
    CHECK(std::abs(std::sqrt(sq / n - (s / n) * (s / n)) - 1.0) < 1e-9);
    CHECK(normalize(Tensor({1}, {6.0}), NormalizationStats{2.0, 2.0}).values()[0] == 2.0);
    std::vector<Tensor> flat{Tensor::filled({3, 3}, 1.0)};
    CHECK_THROWS_AS(compute_stats(flat), DataError);
}

TEST_CASE("wav encode/decode round trip and resampling") {
    AudioClip c = sine(440.0, 800, 8000.0);
    const auto bytes = encode_wav_pcm16(c);
    const AudioClip d = decode_wav(bytes);
    CHECK(d.sample_rate == 8000.0);
    REQUIRE(d.samples.size() == 800);
    for (std::size_t i = 0; i < 800; ++i) {
        CHECK(std::abs(d.samples[i] - c.samples[i]) < 1.0 / 32767.0);
    }
    const AudioClip up = resample_audio(d);
    CHECK(up.sample_rate == 16000.0);
    CHECK(up.samples.size() == 1600);

    std::vector<std::uint8_t> junk(bytes.begin(), bytes.begin() + 20);
    CHECK_THROWS_AS(decode_wav(junk), FormatError);
}
