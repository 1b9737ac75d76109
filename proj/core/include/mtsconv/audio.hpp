#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "mtsconv/tensor.hpp"

namespace mtsconv {

struct AudioClip {
    std::vector<double> samples;  // mono, in [-1, 1]
    double sample_rate = 0.0;     // Hz

    double duration_seconds() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
};

// RIFF/WAVE with 16-bit PCM or 32-bit float data; multi-channel input is
// averaged to mono. Throws FormatError on anything else.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::filesystem::path& path);

// 16-bit PCM mono encoder (fixtures and synthetic corpora).
std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip);

inline constexpr double kTargetSampleRate = 16000.0;

// Endpoint-aligned linear interpolation onto round(N * target / rate) samples.
AudioClip resample_audio(const AudioClip& clip, double target_rate = kTargetSampleRate);

struct StftConfig {
    std::size_t window = 320;  // 20 ms at 16 kHz
    std::size_t hop = 160;     // 10 ms at 16 kHz
};

/// STFT magnitude grid [frames, bins] with timing metadata.
struct Spectrogram {
    Tensor frames;
    double hop_seconds = 0.01;
    double window_seconds = 0.02;
    bool normalized = false;

    std::size_t time_frames() const { return frames.extent(0); }
    std::size_t bins() const { return frames.extent(1); }
};

std::size_t stft_frame_count(std::size_t samples, const StftConfig& config = {});

// Hann-windowed frames, DFT size equal to the window, linear magnitude of
// bins 0..window/2. Throws DataError when the clip is shorter than a window.
Spectrogram stft_magnitude(const AudioClip& clip, const StftConfig& config = {});

struct PadMode {
    std::size_t target_frames = 0;
};

struct SegmentMode {
    std::size_t segment_frames = 399;  // 4 s at a 10 ms hop
    std::size_t hop_frames = 200;      // 2 s
};

using FramingMode = std::variant<PadMode, SegmentMode>;

std::size_t segment_count(std::size_t frames, const SegmentMode& mode);

// Pad mode appends zero frames up to the target; segment mode emits
// overlapping windows, zero-padding the last one.
std::vector<Spectrogram> pad_or_segment(const Spectrogram& spec, const FramingMode& mode);

struct NormalizationStats {
    double mean = 0.0;
    double stddev = 1.0;
};

// Scalar mean and population standard deviation over every entry.
NormalizationStats compute_stats(std::span<const Tensor> training);
Tensor normalize(const Tensor& frames, const NormalizationStats& stats);
void normalize_in_place(Tensor& frames, const NormalizationStats& stats) noexcept;
std::vector<Spectrogram> normalize(std::span<const Spectrogram> specs, const NormalizationStats& stats);

}  // namespace mtsconv
