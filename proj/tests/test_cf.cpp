#include "oracles.hpp"

#include "qbex/cf.hpp"
#include "qbex/io.hpp"

#include <gtest/gtest.h>

using namespace qbex;
using namespace qbex::cf;

namespace {

BinaryCFMatrix columns(Index n_users, std::vector<IndexList> cols) {
    return {n_users, std::move(cols)};
}

}  // namespace

TEST(Binarize, ThresholdIsInclusive) {
    CFMatrix f(2, 2);
    f.add(0, 0, 10);
    f.add(1, 1, 9);
    const BinaryCFMatrix b = binarize(f, 10);
    EXPECT_EQ(b.columns[0], IndexList{0});
    EXPECT_TRUE(b.columns[1].empty());
}

TEST(Binarize, EmptyMatrixGivesEmptyColumns) {
    const BinaryCFMatrix b = binarize(CFMatrix(3, 4), 10);
    ASSERT_EQ(b.n_items(), 4u);
    for (const auto& c : b.columns) EXPECT_TRUE(c.empty());
}

TEST(Binarize, ColumnsSortedByUser) {
    CFMatrix f(5, 1);
    for (Index u : {4, 1, 3, 0}) f.add(u, 0, 20);
    EXPECT_EQ(binarize(f, 10).columns[0], (IndexList{0, 1, 3, 4}));
}

TEST(CFMatrixTest, RejectsDuplicatesAndOutOfRange) {
    CFMatrix f(2, 2);
    f.add(0, 1, 3);
    EXPECT_THROW(f.add(0, 1, 4), DataError);
    EXPECT_THROW(f.add(2, 0, 1), DataError);
    EXPECT_EQ(f.at(0, 1), 3u);
    EXPECT_EQ(f.at(1, 1), 0u);
}

TEST(Jaccard, Examples) {
    const auto b = columns(4, {{1, 2}, {2, 3}, {0}, {}});
    EXPECT_DOUBLE_EQ(jaccard_similarity(b, 0, 1), 1.0 / 3.0);
    EXPECT_EQ(jaccard_similarity(b, 0, 0), 1.0);
    EXPECT_EQ(jaccard_similarity(b, 0, 2), 0.0);
    EXPECT_EQ(jaccard_similarity(b, 3, 3), 0.0);  // both columns empty
}

TEST(FullSimilarity, IdenticalAndDisjointColumns) {
    const SimilarityMatrix same = full_similarity(columns(3, {{0, 2}, {0, 2}}));
    EXPECT_TRUE(same == MatrixXd::Ones(2, 2));
    const SimilarityMatrix apart = full_similarity(columns(3, {{0}, {1, 2}}));
    EXPECT_TRUE(apart == MatrixXd::Identity(2, 2));
}

TEST(FullSimilarity, MatchesPairwiseCallsAndIsSymmetric) {
    Rng rng = substream(1, "test.cf.random");
    BinaryCFMatrix b{30, {}};
    for (int item = 0; item < 12; ++item) {
        IndexList col;
        for (Index u = 0; u < 30; ++u)
            if (uniform01(rng) < 0.25) col.push_back(u);
        b.columns.push_back(col);
    }
    b.columns.push_back({});
    const SimilarityMatrix s = full_similarity(b);
    for (Index i = 0; i < b.n_items(); ++i)
        for (Index j = 0; j < b.n_items(); ++j) {
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            EXPECT_EQ(s(ii, jj), jaccard_similarity(b, i, j));
            EXPECT_EQ(s(ii, jj), s(jj, ii));
            EXPECT_GE(s(ii, jj), 0.0);
            EXPECT_LE(s(ii, jj), 1.0);
        }
    for (Index i = 0; i < b.n_items(); ++i) {
        if (!b.columns[i].empty()) {
            EXPECT_EQ(s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)), 1.0);
        }
    }
}

TEST(TopK, OrderingAndTies) {
    SimilarityMatrix s = SimilarityMatrix::Identity(4, 4);
    s(0, 1) = 0.5;
    s(0, 2) = 0.2;
    EXPECT_EQ(top_k_relevant(s, 0, {1, 2}, 1), IndexList{1});
    s(0, 2) = 0.5;
    EXPECT_EQ(top_k_relevant(s, 0, {2, 1}, 2), (IndexList{1, 2}));
    EXPECT_EQ(top_k_relevant(s, 0, {0, 1, 2, 3}, 10), (IndexList{1, 2, 3}));
}

TEST(TopK, RelevanceNeedNotBeSymmetric) {
    // Item 1 is item 0's best match, but item 1 prefers item 2.
    SimilarityMatrix s = SimilarityMatrix::Identity(3, 3);
    s(0, 1) = s(1, 0) = 0.5;
    s(1, 2) = s(2, 1) = 0.9;
    s(0, 2) = s(2, 0) = 0.1;
    const IndexList all{0, 1, 2};
    EXPECT_EQ(top_k_relevant(s, 0, all, 1), IndexList{1});
    EXPECT_EQ(top_k_relevant(s, 1, all, 1), IndexList{2});
}

TEST(SongRelevance, Examples) {
    // Songs 0,1 by artist 0; 2,3 by artist 1; 4 by artist 2.
    const IndexList song_artist{0, 0, 1, 1, 2};
    const IndexList db{0, 1, 2, 3, 4};
    const RelevanceSet r = song_relevance(0, {1}, song_artist, db, 3);
    EXPECT_EQ(r.positive, (IndexList{2, 3}));
    EXPECT_EQ(r.negative, IndexList{4});  // own artist's songs excluded
    const RelevanceSet none = song_relevance(2, {}, song_artist, db, 3);
    EXPECT_TRUE(none.positive.empty());
    EXPECT_EQ(none.negative, (IndexList{0, 1, 2, 3}));
}

TEST(CFIngest, ReadsAndSelectsItems) {
    const auto dir = oracle::scratch_dir("cf");
    io::write_text(dir / "cf.tsv", "# user\tartist\tcount\nu1\tA\t12\nu2\tA\t3\nu1\tB\t40\n\nu3\tC\t10\n");
    const CFData data = read_cf_tsv(dir / "cf.tsv");
    EXPECT_EQ(data.user_ids, (std::vector<std::string>{"u1", "u2", "u3"}));
    EXPECT_EQ(data.item_ids, (std::vector<std::string>{"A", "B", "C"}));
    const CFMatrix sel = select_items(data, {"C", "A", "Z"});
    EXPECT_EQ(sel.n_items(), 3u);
    EXPECT_EQ(sel.at(2, 0), 10u);
    EXPECT_EQ(sel.at(0, 1), 12u);
    const BinaryCFMatrix b = binarize(sel, 10);
    EXPECT_TRUE(b.columns[2].empty());
    EXPECT_EQ(b.columns[1], IndexList{0});
}

TEST(CFIngest, RejectsMalformedCounts) {
    const auto dir = oracle::scratch_dir("cf_bad");
    io::write_text(dir / "neg.tsv", "u1\tA\t-3\n");
    EXPECT_THROW(read_cf_tsv(dir / "neg.tsv"), DataError);
    io::write_text(dir / "dup.tsv", "u1\tA\t3\nu1\tA\t4\n");
    EXPECT_THROW(read_cf_tsv(dir / "dup.tsv"), DataError);
    io::write_text(dir / "short.tsv", "u1\tA\n");
    EXPECT_THROW(read_cf_tsv(dir / "short.tsv"), DataError);
}
