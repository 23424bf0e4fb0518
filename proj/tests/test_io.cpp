#include "oracles.hpp"

#include "qbex/io.hpp"
#include "qbex/parallel.hpp"
#include "qbex/rng.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>

using namespace qbex;

TEST(Qxf, RoundTripIsBitExact) {
    MatrixXd m(3, 2);
    m << 0.1, -0.0, 1e-300, std::numeric_limits<double>::denorm_min(), -7.25, 1e300;
    const auto dir = oracle::scratch_dir("qxf");
    io::write_qxf(dir / "m.qxf", m);
    const MatrixXd back = io::read_qxf(dir / "m.qxf");
    ASSERT_EQ(back.rows(), 3);
    ASSERT_EQ(back.cols(), 2);
    for (Eigen::Index i = 0; i < m.size(); ++i)
        EXPECT_EQ(std::bit_cast<std::uint64_t>(back.data()[i]), std::bit_cast<std::uint64_t>(m.data()[i]));
    EXPECT_EQ(io::encode_qxf(back), io::read_text(dir / "m.qxf"));
}

TEST(Qxf, LayoutIsRowMajorLittleEndian) {
    MatrixXd m(1, 2);
    m << 1.0, 2.0;
    const std::string bytes = io::encode_qxf(m);
    ASSERT_EQ(bytes.size(), 12u + 16u);
    EXPECT_EQ(bytes.substr(0, 4), "QXF1");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[8], 2);
    // 1.0 = 0x3FF0000000000000, most significant byte last.
    EXPECT_EQ(static_cast<unsigned char>(bytes[19]), 0x3F);
    EXPECT_EQ(static_cast<unsigned char>(bytes[18]), 0xF0);
}

TEST(Qxf, EmptyMatrix) { EXPECT_EQ(io::decode_qxf(io::encode_qxf(MatrixXd(0, 5))).cols(), 5); }

TEST(Qxf, RejectsCorruptInput) {
    std::string good = io::encode_qxf(MatrixXd::Ones(2, 2));
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(io::decode_qxf(bad_magic), DataError);
    EXPECT_THROW(io::decode_qxf(good.substr(0, good.size() - 1)), DataError);
    EXPECT_THROW(io::decode_qxf("QXF"), DataError);
    std::string nan_payload = good;
    const std::uint64_t nan_bits = std::bit_cast<std::uint64_t>(std::numeric_limits<double>::quiet_NaN());
    for (int b = 0; b < 8; ++b) nan_payload[12 + b] = static_cast<char>((nan_bits >> (8 * b)) & 0xFF);
    EXPECT_THROW(io::decode_qxf(nan_payload), DataError);
    MatrixXd inf = MatrixXd::Ones(1, 1);
    inf(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(io::encode_qxf(inf), DataError);
    EXPECT_THROW(io::read_qxf(oracle::scratch_dir("qxf_missing") / "absent.qxf"), DataError);
}

TEST(Sidecars, MetadataAndIds) {
    const auto dir = oracle::scratch_dir("sidecars");
    const auto path = dir / "x.qxf";
    io::write_metadata(path, {{"b", "2"}, {"a", "one"}});
    EXPECT_EQ(io::read_text(io::sidecar(path, ".meta")), "a=one\nb=2\n");
    const io::Metadata meta = io::read_metadata(path);
    EXPECT_EQ(meta.at("a"), "one");
    EXPECT_EQ(meta.at("b"), "2");
    io::write_ids(path, {"s1", "s2"});
    EXPECT_EQ(io::read_ids(path), (std::vector<std::string>{"s1", "s2"}));
}

TEST(Tsv, SkipsCommentsAndChecksWidth) {
    const auto dir = oracle::scratch_dir("tsv");
    io::write_text(dir / "a.tsv", "# header\nx\ty\r\n\nz\tw\n");
    const auto rows = io::read_tsv(dir / "a.tsv", 2);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0][1], "y");
    EXPECT_EQ(rows[1][0], "z");
    EXPECT_THROW(io::read_tsv(dir / "a.tsv", 3), DataError);
}

TEST(FormatDouble, RoundTrips) {
    for (double v : {0.1, 1.0 / 3.0, 1e-17, -2.5e300}) EXPECT_EQ(std::stod(io::format_double(v)), v);
}

TEST(Rng, SubstreamsAreReproducibleAndIndependent) {
    Rng a = substream(5, "label");
    Rng b = substream(5, "label");
    Rng c = substream(5, "other");
    Rng d = substream(5, "label", 1);
    const auto x = a();
    EXPECT_EQ(x, b());
    EXPECT_NE(x, c());
    EXPECT_NE(x, d());
}

TEST(Rng, DrawsHaveExpectedMoments) {
    Rng rng = substream(1, "test.rng.moments");
    double sum = 0.0, sq = 0.0, u = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double z = standard_normal(rng);
        sum += z;
        sq += z * z;
        u += uniform01(rng);
    }
    EXPECT_NEAR(sum / n, 0.0, 0.02);
    EXPECT_NEAR(sq / n, 1.0, 0.02);
    EXPECT_NEAR(u / n, 0.5, 0.01);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[uniform_index(rng, 7)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(Rng, ShuffleIsAPermutation) {
    Rng rng = substream(2, "test.rng.shuffle");
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    shuffle(v.begin(), v.end(), rng);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(ParallelFor, RethrowsWorkerErrors) {
    EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                     if (i == 37) throw DataError("boom");
                 }),
                 DataError);
}

TEST(ParallelFor, ThreadCapFromEnvironment) {
    ::setenv("QBEX_THREADS", "1", 1);
    EXPECT_EQ(thread_count(), 1u);
    ::unsetenv("QBEX_THREADS");
    EXPECT_GE(thread_count(), 1u);
}
