#pragma once

// Codeword dictionaries and histogram representations of frame sequences:
// z-score normalization, single-pass online k-means, top-tau vector
// quantization, the probability-product-kernel map, PCA compression and
// TF-IDF weighting.

#include "qbex/common.hpp"
#include "qbex/parallel.hpp"
#include "qbex/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace qbex::vq {

/// Per-dimension mean and standard deviation. The deviation uses the
/// population (1/N) convention; zero deviations are stored as 1.
struct Normalizer {
    VectorXd mu;
    VectorXd sigma;

    MatrixXd apply(const MatrixXd& rows) const {
        return (rows.rowwise() - mu.transpose()).array().rowwise() / sigma.transpose().array();
    }
};

inline Normalizer zscore_fit(const MatrixXd& bag) {
    require_data(bag.rows() >= 2, "z-score fit needs at least 2 rows");
    Normalizer z;
    z.mu = bag.colwise().mean().transpose();
    const MatrixXd centered = bag.rowwise() - z.mu.transpose();
    z.sigma = (centered.array().square().colwise().sum() / static_cast<double>(bag.rows())).sqrt().transpose();
    for (Eigen::Index i = 0; i < z.sigma.size(); ++i)
        if (!(z.sigma(i) > 0.0)) z.sigma(i) = 1.0;
    return z;
}

struct Codebook {
    MatrixXd centers;  // |V| x dim, in normalized space
    Normalizer norm;

    Index size() const { return static_cast<Index>(centers.rows()); }
    Index dim() const { return static_cast<Index>(centers.cols()); }
};

/// Single-pass online k-means over `points` in the given order. Centers start
/// at the first k points; each later point moves its nearest center by
/// 1/(count + 1) toward itself, i.e. the center stays the running mean of its
/// assigned points.
inline MatrixXd online_kmeans(const MatrixXd& points, Index k) {
    require(k >= 1, "codebook size must be >= 1");
    require_data(static_cast<Index>(points.rows()) >= k, "fewer points than codewords");
    MatrixXd centers = points.topRows(static_cast<Eigen::Index>(k));
    std::vector<double> counts(k, 1.0);
    for (Eigen::Index i = static_cast<Eigen::Index>(k); i < points.rows(); ++i) {
        Eigen::Index best;
        (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
        counts[best] += 1.0;
        centers.row(best) += (points.row(i) - centers.row(best)) / counts[best];
    }
    return centers;
}

inline Codebook train_codebook(const MatrixXd& bag, Index k, std::uint64_t seed) {
    require(k >= 1, "codebook size must be >= 1");
    require_data(static_cast<Index>(bag.rows()) >= k, "fewer frames than codewords");
    require_data(bag.allFinite(), "non-finite value in codebook training data");
    Codebook cb;
    cb.norm = zscore_fit(bag);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(bag.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng rng = substream(seed, "codebook.shuffle");
    shuffle(order.begin(), order.end(), rng);
    const MatrixXd normalized = cb.norm.apply(bag);
    MatrixXd shuffled(bag.rows(), bag.cols());
    for (std::size_t i = 0; i < order.size(); ++i) shuffled.row(static_cast<Eigen::Index>(i)) = normalized.row(order[i]);
    cb.centers = online_kmeans(shuffled, k);
    return cb;
}

/// Sum of squared distances from each row to its nearest center.
inline double quantization_error(const MatrixXd& points, const MatrixXd& centers) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        total += (centers.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff();
    return total;
}

/// Indices of the tau nearest centers to `x`, nearest first, ties broken by
/// ascending center index.
inline IndexList nearest_codewords(const MatrixXd& centers, const Eigen::RowVectorXd& x, Index tau) {
    const VectorXd dist = (centers.rowwise() - x).rowwise().squaredNorm();
    IndexList idx(static_cast<std::size_t>(centers.rows()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(tau), idx.end(), [&](Index a, Index b) {
        if (dist(a) != dist(b)) return dist(a) < dist(b);
        return a < b;
    });
    idx.resize(tau);
    return idx;
}

/// Top-tau codeword histogram: each frame contributes 1/tau mass to each of
/// its tau nearest codewords, and the result is averaged over frames.
/// Frames are z-scored with the codebook's statistics first.
inline VectorXd quantize_topk(const MatrixXd& features, const Codebook& cb, Index tau) {
    require(tau >= 1 && tau <= cb.size(), "tau must lie in [1, codebook size]");
    require_data(features.rows() > 0, "empty feature sequence");
    require_data(static_cast<Index>(features.cols()) == cb.dim(), "feature dimension does not match codebook");
    const MatrixXd z = cb.norm.apply(features);
    std::vector<std::uint64_t> counts(cb.size(), 0);
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        for (Index v : nearest_codewords(cb.centers, z.row(i), tau)) ++counts[v];
    // Integer counts keep the sum within a few ulps of 1.
    const double denom = static_cast<double>(tau) * static_cast<double>(z.rows());
    VectorXd h(static_cast<Eigen::Index>(cb.size()));
    for (Index v = 0; v < cb.size(); ++v) h(static_cast<Eigen::Index>(v)) = static_cast<double>(counts[v]) / denom;
    return h;
}

/// Histograms for many songs, one row per song.
inline MatrixXd quantize_all(const std::vector<MatrixXd>& songs, const Codebook& cb, Index tau) {
    MatrixXd out(static_cast<Eigen::Index>(songs.size()), static_cast<Eigen::Index>(cb.size()));
    parallel_for(songs.size(), [&](Index i) { out.row(static_cast<Eigen::Index>(i)) = quantize_topk(songs[i], cb, tau).transpose(); });
    return out;
}

/// Coordinate-wise square root: maps the simplex onto the unit sphere, where
/// inner products equal the Bhattacharyya coefficient.
inline VectorXd ppk_map(const VectorXd& h) {
    require_data((h.array() >= 0.0).all(), "histogram has negative entries");
    return h.array().sqrt().matrix();
}

inline MatrixXd ppk_map_rows(const MatrixXd& hists) {
    require_data((hists.array() >= 0.0).all(), "histogram has negative entries");
    return hists.array().sqrt().matrix();
}

/// Bhattacharyya coefficient sum_v sqrt(p[v] q[v]).
inline double bhattacharyya(const VectorXd& p, const VectorXd& q) {
    return (p.array() * q.array()).sqrt().sum();
}

struct PCAModel {
    VectorXd mean;
    MatrixXd basis;  // D x d, orthonormal columns, leading components first
    double explained_fraction = 1.0;

    Index dim() const { return static_cast<Index>(basis.cols()); }

    VectorXd apply(const VectorXd& x) const { return basis.transpose() * (x - mean); }

    /// Row-wise projection of an N x D matrix to N x d.
    MatrixXd apply_rows(const MatrixXd& x) const {
        require_data(x.cols() == mean.size(), "PCA input dimension mismatch");
        return (x.rowwise() - mean.transpose()) * basis;
    }
};

/// Keep the fewest leading principal components whose eigenvalue sum reaches
/// `target_fraction` of the total variance. A relative slack of 1e-10 absorbs
/// rounding when the target falls exactly on a cumulative sum.
inline PCAModel pca_fit(const MatrixXd& x, double target_fraction) {
    require_data(x.rows() >= 2, "PCA needs at least 2 rows");
    require(target_fraction > 0.0 && target_fraction <= 1.0, "variance target must lie in (0, 1]");
    PCAModel model;
    model.mean = x.colwise().mean().transpose();
    const MatrixXd centered = x.rowwise() - model.mean.transpose();
    const MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    // Eigen returns ascending eigenvalues.
    const VectorXd values = eig.eigenvalues().reverse().cwiseMax(0.0);
    const MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
    const double total = values.sum();
    const Eigen::Index dmax = x.cols();
    if (!(total > 0.0)) {
        model.basis = MatrixXd::Zero(dmax, 1);
        model.basis(0, 0) = 1.0;
        model.explained_fraction = 1.0;
        return model;
    }
    double cumulative = 0.0;
    Eigen::Index d = 0;
    while (d < dmax) {
        cumulative += values(d);
        ++d;
        if (cumulative >= target_fraction * total * (1.0 - 1e-10)) break;
    }
    model.basis = vectors.leftCols(d);
    model.explained_fraction = std::min(1.0, cumulative / total);
    return model;
}

/// Number of principal components needed for 95% of the variance.
inline Index effective_dimensionality(const MatrixXd& x) { return pca_fit(x, 0.95).dim(); }

/// IDF[v] = ln(N / #{x : h_x[v] > 0}); codewords unused in training get 0.
inline VectorXd idf_fit(const MatrixXd& train_hists) {
    require_data(train_hists.rows() > 0, "IDF needs a nonempty training set");
    const double n = static_cast<double>(train_hists.rows());
    VectorXd idf(train_hists.cols());
    for (Eigen::Index v = 0; v < train_hists.cols(); ++v) {
        const auto df = (train_hists.col(v).array() > 0.0).count();
        idf(v) = df == 0 ? 0.0 : std::log(n / static_cast<double>(df));
    }
    return idf;
}

inline VectorXd tfidf_apply(const VectorXd& h, const VectorXd& idf) {
    require_data(h.size() == idf.size(), "histogram and IDF dimensions differ");
    return h.cwiseProduct(idf);
}

/// Cosine similarity; 0 when either vector is zero.
inline double cosine_similarity(const VectorXd& a, const VectorXd& b) {
    require_data(a.size() == b.size(), "cosine similarity dimension mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
}

/// Database indices by decreasing cosine similarity to the query (ties by
/// ascending index).
inline IndexList rank_by_cosine(const VectorXd& query, const MatrixXd& database) {
    std::vector<double> sim(static_cast<std::size_t>(database.rows()));
    for (Eigen::Index i = 0; i < database.rows(); ++i) sim[i] = cosine_similarity(query, database.row(i).transpose());
    IndexList order(sim.size());
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return sim[a] > sim[b]; });
    return order;
}

/// Pick up to `per_song` consecutive frames from each song, starting at a
/// seeded random offset, and stack them into one bag for codebook training.
/// per_song == 0 keeps every frame.
inline MatrixXd sample_frames(const std::vector<MatrixXd>& songs, Index per_song, std::uint64_t seed) {
    require_data(!songs.empty(), "no songs to sample frames from");
    const Eigen::Index dim = songs.front().cols();
    Eigen::Index total = 0;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> spans;
    Rng rng = substream(seed, "codebook.sample");
    for (const auto& s : songs) {
        require_data(s.cols() == dim, "songs have differing feature dimensions");
        const Eigen::Index take = per_song == 0 ? s.rows() : std::min<Eigen::Index>(s.rows(), static_cast<Eigen::Index>(per_song));
        const Eigen::Index slack = s.rows() - take;
        const Eigen::Index start = slack > 0 ? static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(slack) + 1)) : 0;
        spans.emplace_back(start, take);
        total += take;
    }
    MatrixXd bag(total, dim);
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < songs.size(); ++i) {
        bag.middleRows(row, spans[i].second) = songs[i].middleRows(spans[i].first, spans[i].second);
        row += spans[i].second;
    }
    return bag;
}

}  // namespace qbex::vq
