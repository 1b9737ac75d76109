#include "mtsconv/audio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "mtsconv/errors.hpp"
#include "mtsconv/interp.hpp"

namespace mtsconv {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
    return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
        throw FormatError("not a RIFF/WAVE file");
    }
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t bits = 0;
    bool have_fmt = false;
    std::span<const std::uint8_t> data;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t chunk_size = le32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        if (chunk_size > bytes.size() - body) {
            throw FormatError("WAV chunk extends past end of file");
        }
        if (tag_is(bytes, pos, "fmt ")) {
            if (chunk_size < 16) {
                throw FormatError("WAV fmt chunk too short");
            }
            format = le16(bytes, body);
            channels = le16(bytes, body + 2);
            rate = le32(bytes, body + 4);
            bits = le16(bytes, body + 14);
            if (format == kFormatExtensible) {
                if (chunk_size < 40) {
                    throw FormatError("WAV extensible fmt chunk too short");
                }
                format = le16(bytes, body + 24);
            }
            have_fmt = true;
        } else if (tag_is(bytes, pos, "data")) {
            data = bytes.subspan(body, chunk_size);
            have_data = true;
        }
        pos = body + chunk_size + (chunk_size & 1u);
    }
    if (!have_fmt || !have_data) {
        throw FormatError("WAV file lacks fmt or data chunk");
    }
    if (channels == 0 || rate == 0) {
        throw FormatError("WAV header declares zero channels or zero sample rate");
    }

    std::size_t sample_bytes = 0;
    if (format == kFormatPcm && bits == 16) {
        sample_bytes = 2;
    } else if (format == kFormatFloat && bits == 32) {
        sample_bytes = 4;
    } else {
        throw FormatError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                          std::to_string(bits) + " bits)");
    }
    const std::size_t frame_bytes = sample_bytes * channels;
    const std::size_t frames = data.size() / frame_bytes;
    if (frames == 0) {
        throw FormatError("WAV data chunk holds no complete frames");
    }

    AudioClip clip;
    clip.sample_rate = static_cast<double>(rate);
    clip.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t at = i * frame_bytes + c * sample_bytes;
            if (sample_bytes == 2) {
                acc += static_cast<double>(static_cast<std::int16_t>(le16(data, at))) / 32768.0;
            } else {
                acc += static_cast<double>(std::bit_cast<float>(le32(data, at)));
            }
        }
        clip.samples[i] = acc / static_cast<double>(channels);
    }
    return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot open audio file " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_wav(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip) {
    const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
    const auto rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put32(out, 36 + data_bytes);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put32(out, 16);
    put16(out, kFormatPcm);
    put16(out, 1);
    put32(out, rate);
    put32(out, rate * 2);
    put16(out, 2);
    put16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put32(out, data_bytes);
    for (double s : clip.samples) {
        const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
        const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put16(out, static_cast<std::uint16_t>(v));
    }
    return out;
}

AudioClip resample_audio(const AudioClip& clip, double target_rate) {
    if (!(target_rate > 0.0)) {
        throw ParameterError("target sample rate must be positive");
    }
    if (clip.samples.empty() || !(clip.sample_rate > 0.0)) {
        throw DataError("cannot resample an empty clip");
    }
    if (clip.sample_rate == target_rate) {
        return clip;
    }
    const std::size_t target_len =
        scaled_length(clip.samples.size(), target_rate / clip.sample_rate);
    Tensor wave({clip.samples.size()}, clip.samples);
    Tensor out = resample_to_length(wave, target_len, 0);
    return AudioClip{std::vector<double>(out.values().begin(), out.values().end()), target_rate};
}

std::size_t stft_frame_count(std::size_t samples, const StftConfig& config) {
    if (samples < config.window) {
        return 0;
    }
    return (samples - config.window) / config.hop + 1;
}

Spectrogram stft_magnitude(const AudioClip& clip, const StftConfig& config) {
    const std::size_t n = config.window;
    if (n < 2 || config.hop == 0) {
        throw ParameterError("STFT window must be >= 2 samples and hop >= 1");
    }
    const std::size_t frames = stft_frame_count(clip.samples.size(), config);
    if (frames == 0) {
        throw DataError("clip of " + std::to_string(clip.samples.size()) + " samples is shorter than one " +
                        std::to_string(n) + "-sample window");
    }
    const std::size_t bins = n / 2 + 1;

    // Periodic Hann window and DFT twiddles, tabulated once.
    std::vector<double> window(n);
    for (std::size_t i = 0; i < n; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    std::vector<double> cos_table(n);
    std::vector<double> sin_table(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
        cos_table[i] = std::cos(angle);
        sin_table[i] = std::sin(angle);
    }

    Spectrogram spec;
    spec.frames = Tensor({frames, bins});
    spec.window_seconds = static_cast<double>(n) / clip.sample_rate;
    spec.hop_seconds = static_cast<double>(config.hop) / clip.sample_rate;
    std::vector<double> frame(n);
    for (std::size_t t = 0; t < frames; ++t) {
        const double* src = clip.samples.data() + t * config.hop;
        for (std::size_t i = 0; i < n; ++i) {
            frame[i] = src[i] * window[i];
        }
        double* row = spec.frames.data() + t * bins;
        for (std::size_t k = 0; k < bins; ++k) {
            double re = 0.0;
            double im = 0.0;
            std::size_t phase = 0;
            for (std::size_t i = 0; i < n; ++i) {
                re += frame[i] * cos_table[phase];
                im -= frame[i] * sin_table[phase];
                phase += k;
                if (phase >= n) {
                    phase -= n;
                }
            }
            row[k] = std::hypot(re, im);
        }
    }
    return spec;
}

std::size_t segment_count(std::size_t frames, const SegmentMode& mode) {
    if (mode.segment_frames == 0 || mode.hop_frames == 0) {
        throw ParameterError("segment length and hop must be >= 1");
    }
    if (frames <= mode.segment_frames) {
        return 1;
    }
    return 1 + (frames - mode.segment_frames + mode.hop_frames - 1) / mode.hop_frames;
}

std::vector<Spectrogram> pad_or_segment(const Spectrogram& spec, const FramingMode& mode) {
    const std::size_t frames = spec.time_frames();
    const std::size_t bins = spec.bins();
    auto window_at = [&](std::size_t start, std::size_t length) {
        Spectrogram out = spec;
        out.frames = Tensor({length, bins});
        const std::size_t available = start < frames ? std::min(length, frames - start) : 0;
        std::copy(spec.frames.data() + start * bins, spec.frames.data() + (start + available) * bins,
                  out.frames.data());
        return out;
    };

    if (const auto* pad = std::get_if<PadMode>(&mode)) {
        if (pad->target_frames < frames) {
            throw DataError("pad target of " + std::to_string(pad->target_frames) + " frames is shorter than the " +
                            std::to_string(frames) + "-frame spectrogram");
        }
        return {window_at(0, pad->target_frames)};
    }
    const auto& seg = std::get<SegmentMode>(mode);
    const std::size_t count = segment_count(frames, seg);
    std::vector<Spectrogram> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        out.push_back(window_at(k * seg.hop_frames, seg.segment_frames));
    }
    return out;
}

NormalizationStats compute_stats(std::span<const Tensor> training) {
    double count = 0.0;
    double total = 0.0;
    for (const Tensor& t : training) {
        total += sum(t);
        count += static_cast<double>(t.size());
    }
    if (count == 0.0) {
        throw DataError("cannot compute normalization statistics of an empty training set");
    }
    const double mean = total / count;
    double squares = 0.0;
    for (const Tensor& t : training) {
        for (double v : t.values()) {
            squares += (v - mean) * (v - mean);
        }
    }
    const double stddev = std::sqrt(squares / count);
    if (!(stddev > 0.0)) {
        throw DataError("training set has zero variance; cannot normalize");
    }
    return NormalizationStats{mean, stddev};
}

void normalize_in_place(Tensor& frames, const NormalizationStats& stats) noexcept {
    for (double& v : frames.values()) {
        v = (v - stats.mean) / stats.stddev;
    }
}

Tensor normalize(const Tensor& frames, const NormalizationStats& stats) {
    Tensor out = frames;
    normalize_in_place(out, stats);
    return out;
}

std::vector<Spectrogram> normalize(std::span<const Spectrogram> specs, const NormalizationStats& stats) {
    std::vector<Spectrogram> out(specs.begin(), specs.end());
    for (Spectrogram& s : out) {
        normalize_in_place(s.frames, stats);
        s.normalized = true;
    }
    return out;
}

}  // namespace mtsconv
