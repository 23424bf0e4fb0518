#pragma once

// Synthetic datasets with planted relevance.
//
// Artists get random prototype vectors; each song is its artist's prototype
// plus isotropic noise. A ground-truth metric W* = L L' (L is d x r) decides
// which artists are similar: artist similarity is 1 / (1 + ||p_a - p_b||^2_W*),
// so an artist's top-k relevant artists are its k nearest prototypes under
// W*. Learning W should recover a metric close to W* up to scale; plain
// Euclidean distance is distracted by the d - r directions W* ignores.

#include "qbex/common.hpp"
#include "qbex/rng.hpp"

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace qbex::synth {

struct SyntheticSpec {
    Index n_artists = 60;
    Index songs_per_artist = 5;
    Index dim = 10;
    Index rank = 3;
    Index relevant_k = 3;
    double noise = 0.3;
    std::uint64_t seed = 0;
    Index frames_per_song = 0;  // 0: no frame sequences
    double frame_noise = 1.0;
};

struct SyntheticData {
    MatrixXd prototypes;  // artists x d
    MatrixXd metric;      // W*, d x d
    MatrixXd features;    // songs x d
    std::vector<std::string> artist_ids;
    std::vector<std::string> song_ids;
    IndexList song_artist;
    MatrixXd artist_similarity;
    std::vector<MatrixXd> frames;  // per song, frames_per_song x d
};

inline void validate(const SyntheticSpec& s) {
    require(s.n_artists >= 1 && s.songs_per_artist >= 1 && s.dim >= 1 && s.rank >= 1 && s.relevant_k >= 1,
            "synthetic counts must be >= 1");
    require(s.rank <= s.dim, "metric rank must not exceed the feature dimension");
    require(s.noise >= 0.0 && s.frame_noise >= 0.0, "noise levels must be non-negative");
}

inline MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
    return m;
}

inline std::string padded(const char* prefix, Index i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05zu", prefix, i);
    return buf;
}

inline SyntheticData generate(const SyntheticSpec& spec) {
    validate(spec);
    const auto d = static_cast<Eigen::Index>(spec.dim);
    SyntheticData out;
    Rng proto_rng = substream(spec.seed, "synth.prototypes");
    out.prototypes = gaussian_matrix(static_cast<Eigen::Index>(spec.n_artists), d, proto_rng);
    Rng metric_rng = substream(spec.seed, "synth.metric");
    const MatrixXd l = gaussian_matrix(d, static_cast<Eigen::Index>(spec.rank), metric_rng);
    out.metric = l * l.transpose();

    const Index n_songs = spec.n_artists * spec.songs_per_artist;
    out.features.resize(static_cast<Eigen::Index>(n_songs), d);
    Rng song_rng = substream(spec.seed, "synth.songs");
    for (Index a = 0; a < spec.n_artists; ++a) {
        out.artist_ids.push_back(padded("artist", a));
        for (Index s = 0; s < spec.songs_per_artist; ++s) {
            const Index song = a * spec.songs_per_artist + s;
            out.song_ids.push_back(padded("song", song));
            out.song_artist.push_back(a);
            for (Eigen::Index j = 0; j < d; ++j)
                out.features(static_cast<Eigen::Index>(song), j) =
                    out.prototypes(static_cast<Eigen::Index>(a), j) + spec.noise * standard_normal(song_rng);
        }
    }

    const auto na = static_cast<Eigen::Index>(spec.n_artists);
    out.artist_similarity.resize(na, na);
    for (Eigen::Index a = 0; a < na; ++a)
        for (Eigen::Index b = 0; b < na; ++b) {
            const VectorXd diff = (out.prototypes.row(a) - out.prototypes.row(b)).transpose();
            out.artist_similarity(a, b) = 1.0 / (1.0 + diff.dot(out.metric * diff));
        }

    if (spec.frames_per_song > 0) {
        out.frames.reserve(n_songs);
        for (Index song = 0; song < n_songs; ++song) {
            Rng frame_rng = substream(spec.seed, "synth.frames", song);
            MatrixXd f = spec.frame_noise * gaussian_matrix(static_cast<Eigen::Index>(spec.frames_per_song), d, frame_rng);
            f.rowwise() += out.features.row(static_cast<Eigen::Index>(song));
            out.frames.push_back(std::move(f));
        }
    }
    return out;
}

}  // namespace qbex::synth
