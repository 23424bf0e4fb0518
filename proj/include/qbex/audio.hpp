#pragma once

// Mono PCM audio to dynamic-MFCC frame sequences.

#include "qbex/common.hpp"
#include "qbex/io.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace qbex::audio {

struct AudioClip {
    std::vector<double> samples;
    double sample_rate = 22050.0;
};

/// Frame and filterbank settings. The defaults are the pipeline's fixed
/// configuration: 512-sample Hann frames with hop 256 at 22050 Hz, 40
/// triangular mel filters over 0-11025 Hz on the magnitude spectrum, log
/// floor 1e-10, orthonormal DCT-II keeping c0..c12. Frames are centered:
/// frame t covers samples [t*hop - frame_length/2, t*hop + frame_length/2),
/// with zeros outside the clip.
struct MfccConfig {
    double sample_rate = 22050.0;
    int frame_length = 512;
    int hop = 256;
    int n_mel = 40;
    double f_min = 0.0;
    double f_max = 11025.0;
    int n_ceps = 13;
    double log_floor = 1e-10;
};

constexpr int kDeltaWindow = 2;
constexpr int kDynamicDim = 39;

/// 1 + floor(N / hop) centered frames; 0 for clips shorter than one frame.
inline Index frame_count(Index n_samples, const MfccConfig& cfg = {}) {
    if (n_samples < static_cast<Index>(cfg.frame_length)) return 0;
    return n_samples / static_cast<Index>(cfg.hop) + 1;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// n_mel x (frame_length/2 + 1) triangular filter weights.
inline MatrixXd mel_filterbank(const MfccConfig& cfg) {
    const int n_bins = cfg.frame_length / 2 + 1;
    MatrixXd fb = MatrixXd::Zero(cfg.n_mel, n_bins);
    const double mel_lo = hz_to_mel(cfg.f_min);
    const double mel_hi = hz_to_mel(cfg.f_max);
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mel) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (cfg.n_mel + 1));
    for (int m = 0; m < cfg.n_mel; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = k * cfg.sample_rate / cfg.frame_length;
            if (f > lo && f < hi) fb(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
        }
    }
    return fb;
}

/// n_ceps x n_mel orthonormal DCT-II rows.
inline MatrixXd dct_matrix(int n_ceps, int n_in) {
    MatrixXd d(n_ceps, n_in);
    const double pi = 3.14159265358979323846;
    for (int n = 0; n < n_ceps; ++n) {
        const double scale = std::sqrt((n == 0 ? 1.0 : 2.0) / n_in);
        for (int m = 0; m < n_in; ++m) d(n, m) = scale * std::cos(pi * n * (m + 0.5) / n_in);
    }
    return d;
}

/// T x n_ceps MFCC matrix, T = frame_count(N).
inline MatrixXd mfcc(const AudioClip& clip, const MfccConfig& cfg = {}) {
    require_data(clip.sample_rate == cfg.sample_rate,
                 "sample rate " + std::to_string(clip.sample_rate) + " Hz, expected " + std::to_string(cfg.sample_rate));
    const Index t_frames = frame_count(clip.samples.size(), cfg);
    require_data(t_frames >= 1, "clip shorter than one frame");
    for (double s : clip.samples) require_data(std::isfinite(s), "non-finite audio sample");

    const int len = cfg.frame_length;
    const int n_bins = len / 2 + 1;
    const MatrixXd fb = mel_filterbank(cfg);
    const MatrixXd dct = dct_matrix(cfg.n_ceps, cfg.n_mel);
    std::vector<double> window(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / len);

    Eigen::FFT<double> fft;
    std::vector<double> frame(static_cast<std::size_t>(len));
    std::vector<std::complex<double>> spectrum;
    MatrixXd out(static_cast<Eigen::Index>(t_frames), cfg.n_ceps);
    VectorXd magnitude(n_bins);
    for (Index t = 0; t < t_frames; ++t) {
        const auto start = static_cast<std::ptrdiff_t>(t * static_cast<Index>(cfg.hop)) - len / 2;
        for (int i = 0; i < len; ++i) {
            const std::ptrdiff_t n = start + i;
            const bool inside = n >= 0 && n < static_cast<std::ptrdiff_t>(clip.samples.size());
            frame[i] = inside ? clip.samples[static_cast<std::size_t>(n)] * window[i] : 0.0;
        }
        fft.fwd(spectrum, frame);
        for (int k = 0; k < n_bins; ++k) magnitude(k) = std::abs(spectrum[k]);
        VectorXd log_energy = fb * magnitude;
        for (Eigen::Index m = 0; m < log_energy.size(); ++m) log_energy(m) = std::log(std::max(log_energy(m), cfg.log_floor));
        out.row(static_cast<Eigen::Index>(t)) = (dct * log_energy).transpose();
    }
    return out;
}

/// Regression delta over +-2 frames with edge replication:
/// d_t = sum_{n=1..2} n (c_{t+n} - c_{t-n}) / 10.
inline MatrixXd delta(const MatrixXd& m) {
    const Eigen::Index t_frames = m.rows();
    MatrixXd d = MatrixXd::Zero(t_frames, m.cols());
    double norm = 0.0;
    for (int n = 1; n <= kDeltaWindow; ++n) norm += 2.0 * n * n;
    for (Eigen::Index t = 0; t < t_frames; ++t) {
        for (int n = 1; n <= kDeltaWindow; ++n) {
            const Eigen::Index ahead = std::min<Eigen::Index>(t + n, t_frames - 1);
            const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
            d.row(t) += n * (m.row(ahead) - m.row(behind));
        }
        d.row(t) /= norm;
    }
    return d;
}

/// [MFCC | delta | delta-delta], T x 39 for 13 input coefficients.
inline MatrixXd dynamic_mfcc(const MatrixXd& m) {
    require_data(m.rows() >= 5, "dynamic MFCC needs at least 5 frames");
    const MatrixXd d1 = delta(m);
    const MatrixXd d2 = delta(d1);
    MatrixXd out(m.rows(), 3 * m.cols());
    out << m, d1, d2;
    require_data(out.allFinite(), "non-finite dynamic MFCC value");
    return out;
}

inline MatrixXd features_from_clip(const AudioClip& clip, const MfccConfig& cfg = {}) {
    return dynamic_mfcc(mfcc(clip, cfg));
}

// WAV support: mono RIFF/WAVE with 16-bit PCM or 32-bit IEEE float samples.

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void append_le(std::string& out, std::uint32_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

}  // namespace detail

inline AudioClip decode_wav(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    require_data(bytes.size() >= 12 && std::memcmp(p, "RIFF", 4) == 0 && std::memcmp(p + 8, "WAVE", 4) == 0,
                 "not a RIFF/WAVE file");
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = detail::le32(p + pos + 4);
        const std::size_t body = pos + 8;
        require_data(body + size <= bytes.size(), "truncated WAV chunk");
        if (std::memcmp(p + pos, "fmt ", 4) == 0) {
            require_data(size >= 16, "short fmt chunk");
            format = detail::le16(p + body);
            channels = detail::le16(p + body + 2);
            rate = detail::le32(p + body + 4);
            bits = detail::le16(p + body + 14);
            if (format == 0xFFFE && size >= 26) format = detail::le16(p + body + 24);
            have_fmt = true;
        } else if (std::memcmp(p + pos, "data", 4) == 0) {
            require_data(have_fmt, "WAV data chunk before fmt chunk");
            require_data(channels == 1, "only mono WAV is supported");
            AudioClip clip;
            clip.sample_rate = rate;
            if (format == 1 && bits == 16) {
                clip.samples.resize(size / 2);
                for (std::size_t i = 0; i < clip.samples.size(); ++i)
                    clip.samples[i] = static_cast<std::int16_t>(detail::le16(p + body + 2 * i)) / 32768.0;
            } else if (format == 3 && bits == 32) {
                clip.samples.resize(size / 4);
                for (std::size_t i = 0; i < clip.samples.size(); ++i) {
                    const std::uint32_t raw = detail::le32(p + body + 4 * i);
                    float f;
                    std::memcpy(&f, &raw, sizeof f);
                    clip.samples[i] = f;
                }
            } else {
                throw DataError("unsupported WAV encoding (need 16-bit PCM or 32-bit float)");
            }
            return clip;
        }
        pos = body + size + (size & 1u);
    }
    throw DataError("WAV file has no data chunk");
}

inline AudioClip read_wav(const io::fs::path& path) { return decode_wav(io::read_text(path)); }

/// Encode a clip as 16-bit PCM mono WAV; samples are clipped to [-1, 1].
inline std::string encode_wav_pcm16(const AudioClip& clip) {
    const auto n = static_cast<std::uint32_t>(clip.samples.size());
    const auto rate = static_cast<std::uint32_t>(clip.sample_rate);
    std::string out = "RIFF";
    detail::append_le(out, 36 + 2 * n, 4);
    out += "WAVEfmt ";
    detail::append_le(out, 16, 4);
    detail::append_le(out, 1, 2);
    detail::append_le(out, 1, 2);
    detail::append_le(out, rate, 4);
    detail::append_le(out, rate * 2, 4);
    detail::append_le(out, 2, 2);
    detail::append_le(out, 16, 2);
    out += "data";
    detail::append_le(out, 2 * n, 4);
    for (double s : clip.samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
        detail::append_le(out, static_cast<std::uint16_t>(v), 2);
    }
    return out;
}

}  // namespace qbex::audio
