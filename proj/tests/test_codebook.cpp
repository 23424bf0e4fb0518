#include "oracles.hpp"

#include "qbex/codebook.hpp"
#include "qbex/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace qbex;
using namespace qbex::vq;

namespace {

MatrixXd column(std::initializer_list<double> v) {
    MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
    Eigen::Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return m;
}

/// Codebook with identity normalization so tests can place centers directly.
Codebook raw_codebook(const MatrixXd& centers) {
    Codebook cb;
    cb.centers = centers;
    cb.norm.mu = VectorXd::Zero(centers.cols());
    cb.norm.sigma = VectorXd::Ones(centers.cols());
    return cb;
}

MatrixXd blobs(Index per_blob, std::uint64_t seed) {
    Rng rng = substream(seed, "test.blobs");
    const double centers[4][2] = {{0, 0}, {6, 0}, {0, 6}, {6, 6}};
    MatrixXd x(static_cast<Eigen::Index>(4 * per_blob), 2);
    for (Index b = 0; b < 4; ++b)
        for (Index i = 0; i < per_blob; ++i)
            for (int j = 0; j < 2; ++j)
                x(static_cast<Eigen::Index>(b * per_blob + i), j) = centers[b][j] + 0.5 * standard_normal(rng);
    return x;
}

}  // namespace

TEST(ZScore, PopulationConvention) {
    const Normalizer z = zscore_fit(column({0.0, 2.0}));
    EXPECT_DOUBLE_EQ(z.mu(0), 1.0);
    EXPECT_DOUBLE_EQ(z.sigma(0), 1.0);
}

TEST(ZScore, ConstantDimensionMapsToZero) {
    MatrixXd bag(3, 2);
    bag << 1.0, 5.0, 2.0, 5.0, 3.0, 5.0;
    const Normalizer z = zscore_fit(bag);
    EXPECT_EQ(z.sigma(1), 1.0);
    EXPECT_TRUE(z.apply(bag).col(1).isZero(0.0));
}

TEST(ZScore, StandardNormalSample) {
    Rng rng = substream(1, "test.zscore");
    const Normalizer z = zscore_fit(oracle::random_matrix(10000, 3, rng));
    for (Eigen::Index j = 0; j < 3; ++j) {
        EXPECT_NEAR(z.mu(j), 0.0, 0.05);
        EXPECT_NEAR(z.sigma(j), 1.0, 0.05);
    }
}

TEST(Kmeans, DistinctPointsBecomeCenters) {
    Rng rng = substream(2, "test.kmeans.distinct");
    const MatrixXd bag = oracle::random_matrix(6, 3, rng);
    const Codebook cb = train_codebook(bag, 6, 11);
    const MatrixXd normalized = cb.norm.apply(bag);
    for (Eigen::Index i = 0; i < bag.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < cb.centers.rows(); ++c)
            best = std::min(best, (cb.centers.row(c) - normalized.row(i)).norm());
        EXPECT_LE(best, 1e-12);
    }
}

TEST(Kmeans, HandTracedSinglePass) {
    // Order 0, 10, 1, 11: centers start at 0 and 10, then absorb 1 and 11.
    const MatrixXd centers = online_kmeans(column({0.0, 10.0, 1.0, 11.0}), 2);
    EXPECT_DOUBLE_EQ(centers(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(centers(1, 0), 10.5);
    const MatrixXd points = column({0.0, 1.0, 10.0, 11.0});
    EXPECT_LT(quantization_error(points, centers), quantization_error(points, online_kmeans(points, 1)));
}

TEST(Kmeans, CenterIsRunningMean) {
    const MatrixXd centers = online_kmeans(column({2.0, 4.0, 6.0, 9.0}), 1);
    EXPECT_DOUBLE_EQ(centers(0, 0), 5.25);
}

TEST(Kmeans, BeatsRandomAssignmentOnBlobs) {
    const MatrixXd x = blobs(100, 3);
    const Codebook cb = train_codebook(x, 4, 5);
    const MatrixXd z = cb.norm.apply(x);
    const double trained = quantization_error(z, cb.centers);
    Rng rng = substream(4, "test.kmeans.random");
    double random_total = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        // Each point charged to a uniformly chosen center.
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            random_total += (cb.centers.row(static_cast<Eigen::Index>(uniform_index(rng, 4))) - z.row(i)).squaredNorm();
    }
    EXPECT_LT(trained, random_total / 20.0);
}

TEST(Kmeans, DeterministicForSeed) {
    const MatrixXd x = blobs(50, 6);
    EXPECT_TRUE(train_codebook(x, 8, 3).centers == train_codebook(x, 8, 3).centers);
    EXPECT_FALSE(train_codebook(x, 8, 3).centers == train_codebook(x, 8, 4).centers);
}

TEST(Kmeans, RejectsTooFewPoints) { EXPECT_THROW(train_codebook(column({1.0, 2.0}), 3, 0), DataError); }

TEST(Quantize, HandExamples) {
    const Codebook cb = raw_codebook(column({0.0, 0.9, 2.0}));
    const MatrixXd frames = column({0.0, 1.0});
    const VectorXd h1 = quantize_topk(frames, cb, 1);
    EXPECT_EQ(h1(0), 0.5);
    EXPECT_EQ(h1(1), 0.5);
    EXPECT_EQ(h1(2), 0.0);
    // Frame 1 is 1.0 from both centers 0 and 2; the lower index wins.
    const VectorXd h2 = quantize_topk(frames, cb, 2);
    EXPECT_EQ(h2(0), 0.5);
    EXPECT_EQ(h2(1), 0.5);
    EXPECT_EQ(h2(2), 0.0);
}

TEST(Quantize, TauOneEqualsHardVq) {
    Rng rng = substream(7, "test.quantize.hard");
    for (int trial = 0; trial < 100; ++trial) {
        const MatrixXd bag = oracle::random_matrix(80, 4, rng);
        const Codebook cb = train_codebook(bag, 6, static_cast<std::uint64_t>(trial));
        const MatrixXd song = oracle::random_matrix(25, 4, rng);
        EXPECT_TRUE(quantize_topk(song, cb, 1) == oracle::hard_vq(cb.norm.apply(song), cb.centers));
    }
}

TEST(Quantize, HistogramsSumToOne) {
    Rng rng = substream(8, "test.quantize.sum");
    const Codebook cb = train_codebook(oracle::random_matrix(200, 5, rng), 16, 1);
    for (Index tau : {1u, 2u, 3u, 7u, 16u}) {
        const VectorXd h = quantize_topk(oracle::random_matrix(37, 5, rng), cb, tau);
        EXPECT_NEAR(h.sum(), 1.0, 1e-12);
        EXPECT_GE(h.minCoeff(), 0.0);
    }
    EXPECT_THROW(quantize_topk(oracle::random_matrix(3, 5, rng), cb, 17), ParameterError);
    EXPECT_THROW(quantize_topk(oracle::random_matrix(3, 4, rng), cb, 1), DataError);
}

TEST(Ppk, MapExample) {
    VectorXd h(3);
    h << 0.25, 0.25, 0.5;
    const VectorXd p = ppk_map(h);
    EXPECT_DOUBLE_EQ(p(0), 0.5);
    EXPECT_DOUBLE_EQ(p(1), 0.5);
    EXPECT_NEAR(p(2), 0.70710678, 1e-8);
    EXPECT_NEAR(p.dot(p), 1.0, 1e-12);
}

TEST(Ppk, InnerProductIsKernel) {
    Rng rng = substream(9, "test.ppk.kernel");
    for (int trial = 0; trial < 50; ++trial) {
        VectorXd a = oracle::random_matrix(10, 1, rng).cwiseAbs();
        VectorXd b = oracle::random_matrix(10, 1, rng).cwiseAbs();
        a /= a.sum();
        b /= b.sum();
        double direct = 0.0;
        for (Eigen::Index v = 0; v < 10; ++v) direct += std::sqrt(a(v) * b(v));
        EXPECT_NEAR(ppk_map(a).dot(ppk_map(b)), direct, 1e-12);
        EXPECT_NEAR(bhattacharyya(a, b), direct, 1e-12);
    }
}

TEST(Pca, LineNeedsOneComponent) {
    Rng rng = substream(10, "test.pca.line");
    const VectorXd dir = oracle::random_matrix(5, 1, rng).normalized();
    MatrixXd x(50, 5);
    for (Eigen::Index i = 0; i < 50; ++i) x.row(i) = (standard_normal(rng) * dir).transpose();
    EXPECT_EQ(pca_fit(x, 0.95).dim(), 1u);
    EXPECT_EQ(effective_dimensionality(x), 1u);
}

TEST(Pca, IsotropicCovariance) {
    // Rows +-e_i have covariance exactly I / 20.
    MatrixXd x = MatrixXd::Zero(40, 20);
    for (Eigen::Index i = 0; i < 20; ++i) {
        x(2 * i, i) = 1.0;
        x(2 * i + 1, i) = -1.0;
    }
    EXPECT_EQ(pca_fit(x, 0.95).dim(), 19u);
    EXPECT_EQ(effective_dimensionality(x), 19u);
}

TEST(Pca, ReconstructionAndOrthonormality) {
    Rng rng = substream(11, "test.pca.recon");
    MatrixXd scale = MatrixXd::Zero(8, 8);
    for (Eigen::Index i = 0; i < 8; ++i) scale(i, i) = std::pow(0.6, static_cast<double>(i));
    const MatrixXd x = oracle::random_matrix(300, 8, rng) * scale * oracle::random_matrix(8, 8, rng);
    const PCAModel m = pca_fit(x, 0.95);
    EXPECT_LE((m.basis.transpose() * m.basis - MatrixXd::Identity(m.dim(), m.dim())).cwiseAbs().maxCoeff(), 1e-10);
    const MatrixXd centered = x.rowwise() - m.mean.transpose();
    const MatrixXd recon = m.apply_rows(x) * m.basis.transpose();
    EXPECT_LE((centered - recon).squaredNorm(), 0.05 * centered.squaredNorm() + 1e-9);
    EXPECT_GE(m.explained_fraction, 0.95);
    EXPECT_TRUE(m.apply(x.row(3).transpose()).isApprox(m.apply_rows(x).row(3).transpose(), 1e-12));
}

TEST(Pca, ConstantDataFallsBackToOneAxis) {
    const PCAModel m = pca_fit(MatrixXd::Constant(5, 3, 2.0), 0.95);
    EXPECT_EQ(m.dim(), 1u);
    EXPECT_EQ(m.basis(0, 0), 1.0);
}

TEST(Idf, Examples) {
    MatrixXd h = MatrixXd::Zero(4, 3);
    h.col(0).setConstant(0.25);  // in every song
    h(2, 2) = 0.5;               // in one of four
    const VectorXd idf = idf_fit(h);
    EXPECT_EQ(idf(0), 0.0);
    EXPECT_EQ(idf(1), 0.0);  // unused codeword
    EXPECT_NEAR(idf(2), std::log(4.0), 1e-15);
    EXPECT_NEAR(idf(2), 1.3863, 1e-4);
}

TEST(Cosine, Examples) {
    VectorXd a(2), b(2), c(2);
    a << 1.0, 1.0;
    b << 1.0, 0.0;
    c << 0.0, 3.0;
    EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
    EXPECT_EQ(cosine_similarity(b, c), 0.0);
    EXPECT_NEAR(cosine_similarity(a, b), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(cosine_similarity(a, VectorXd::Zero(2)), 0.0);
}

TEST(Cosine, RankingPutsIdenticalFirst) {
    Rng rng = substream(12, "test.cosine.rank");
    const MatrixXd db = oracle::random_matrix(10, 4, rng).cwiseAbs();
    EXPECT_EQ(rank_by_cosine(db.row(6).transpose(), db).front(), 6u);
}

TEST(SampleFrames, ConsecutiveWindows) {
    std::vector<MatrixXd> songs;
    for (int s = 0; s < 3; ++s) {
        MatrixXd m(20, 1);
        for (Eigen::Index t = 0; t < 20; ++t) m(t, 0) = 100.0 * s + static_cast<double>(t);
        songs.push_back(m);
    }
    const MatrixXd bag = sample_frames(songs, 5, 1);
    ASSERT_EQ(bag.rows(), 15);
    for (int s = 0; s < 3; ++s)
        for (Eigen::Index t = 1; t < 5; ++t) EXPECT_EQ(bag(5 * s + t, 0), bag(5 * s + t - 1, 0) + 1.0);
    EXPECT_EQ(sample_frames(songs, 0, 1).rows(), 60);
    EXPECT_EQ(sample_frames(songs, 50, 1).rows(), 60);
    EXPECT_TRUE(sample_frames(songs, 5, 1) == bag);
}
