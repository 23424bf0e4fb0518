#pragma once

// Ranking metrics, artist-level splits and the model-selection protocol:
// train one metric per (C, loss) on the training artists, pick the setting
// with the best mean validation AUC, then report it on the test artists.

#include "qbex/cf.hpp"
#include "qbex/codebook.hpp"
#include "qbex/common.hpp"
#include "qbex/io.hpp"
#include "qbex/mlr.hpp"
#include "qbex/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace qbex::eval {

// ---------------------------------------------------------------------------
// Metrics

struct RankingMetrics {
    double auc = 0.0;
    double mrr = 0.0;
    double ndcg = 0.0;
};

/// Interleaving induced by a ranked list: for each relevant item in list
/// order, the number of irrelevant items ahead of it.
inline mlr::Interleaving induced_interleaving(const IndexList& ranked, const IndexList& positive,
                                              const IndexList& negative) {
    std::unordered_map<Index, char> label;
    for (Index p : positive) require_data(label.emplace(p, 1).second, "duplicate item in relevant set");
    for (Index n : negative) require_data(label.emplace(n, 0).second, "item in both relevant and irrelevant sets");
    require_data(ranked.size() == label.size(), "ranked list is not a permutation of the relevant and irrelevant sets");
    std::unordered_map<Index, char> seen;
    mlr::Interleaving k;
    k.reserve(positive.size());
    Index irrelevant_ahead = 0;
    for (Index item : ranked) {
        const auto it = label.find(item);
        require_data(it != label.end(), "ranked list contains an unlabeled item");
        require_data(seen.emplace(item, 1).second, "ranked list repeats an item");
        if (it->second)
            k.push_back(irrelevant_ahead);
        else
            ++irrelevant_ahead;
    }
    return k;
}

/// Each metric is 1 minus the corresponding ranking loss of the induced
/// interleaving: AUC is the fraction of correctly ordered (relevant,
/// irrelevant) pairs, MRR the reciprocal rank of the first relevant item.
inline RankingMetrics evaluate_ranking(const IndexList& ranked, const IndexList& positive, const IndexList& negative) {
    require_data(!positive.empty() && !negative.empty(), "evaluation needs nonempty relevant and irrelevant sets");
    const mlr::Interleaving k = induced_interleaving(ranked, positive, negative);
    const Index p = positive.size();
    const Index n = negative.size();
    return {1.0 - mlr::ranking_loss(mlr::Loss::AUC, k, p, n), 1.0 - mlr::ranking_loss(mlr::Loss::MRR, k, p, n),
            1.0 - mlr::ranking_loss(mlr::Loss::NDCG, k, p, n)};
}

/// Keep only the items of `ranked` that are labeled relevant or irrelevant.
inline IndexList restrict_ranking(const IndexList& ranked, const IndexList& positive, const IndexList& negative) {
    std::vector<char> keep;
    Index top = 0;
    for (Index i : positive) top = std::max(top, i + 1);
    for (Index i : negative) top = std::max(top, i + 1);
    keep.assign(top, 0);
    for (Index i : positive) keep[i] = 1;
    for (Index i : negative) keep[i] = 1;
    IndexList out;
    out.reserve(positive.size() + negative.size());
    for (Index i : ranked)
        if (i < top && keep[i]) out.push_back(i);
    return out;
}

// ---------------------------------------------------------------------------
// Splits

struct Split {
    IndexList train;  // artist indices, ascending
    IndexList validation;
    IndexList test;
};

/// n_splits random 40/30/30 partitions of the artists (counts rounded,
/// test takes the remainder).
inline std::vector<Split> make_splits(Index n_artists, Index n_splits, std::uint64_t seed) {
    require_data(n_artists >= 10, "at least 10 artists are needed to split");
    require(n_splits >= 1, "need at least one split");
    const auto n_train = static_cast<Index>(std::lround(0.4 * static_cast<double>(n_artists)));
    const auto n_val = static_cast<Index>(std::lround(0.3 * static_cast<double>(n_artists)));
    std::vector<Split> splits;
    for (Index s = 0; s < n_splits; ++s) {
        IndexList perm(n_artists);
        std::iota(perm.begin(), perm.end(), Index{0});
        Rng rng = substream(seed, "eval.split", s);
        shuffle(perm.begin(), perm.end(), rng);
        Split sp;
        sp.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
        sp.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                             perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        sp.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
        std::sort(sp.train.begin(), sp.train.end());
        std::sort(sp.validation.begin(), sp.validation.end());
        std::sort(sp.test.begin(), sp.test.end());
        splits.push_back(std::move(sp));
    }
    return splits;
}

// ---------------------------------------------------------------------------
// Dataset

/// Songs with one feature vector each, their artists, and artist-level
/// similarity.
struct Dataset {
    MatrixXd features;  // songs x D
    std::vector<std::string> song_ids;
    IndexList song_artist;
    std::vector<std::string> artist_ids;
    cf::SimilarityMatrix artist_similarity;

    Index n_songs() const { return song_ids.size(); }
    Index n_artists() const { return artist_ids.size(); }

    /// Songs by any of the given artists, ascending.
    IndexList songs_of(const IndexList& artists) const {
        std::vector<char> member(n_artists(), 0);
        for (Index a : artists) member[a] = 1;
        IndexList out;
        for (Index s = 0; s < n_songs(); ++s)
            if (member[song_artist[s]]) out.push_back(s);
        return out;
    }
};

/// Attach artists to feature rows. `song_artist_rows` holds (song, artist)
/// pairs; artist indices follow first appearance in feature-row order.
inline void assign_artists(Dataset& ds, const std::vector<std::vector<std::string>>& song_artist_rows) {
    std::unordered_map<std::string, std::string> artist_of;
    for (const auto& row : song_artist_rows) artist_of[row[0]] = row[1];
    std::unordered_map<std::string, Index> artist_index;
    ds.song_artist.clear();
    ds.artist_ids.clear();
    for (const auto& song : ds.song_ids) {
        const auto it = artist_of.find(song);
        require_data(it != artist_of.end(), "unknown artist for song " + song);
        const auto [pos, inserted] = artist_index.emplace(it->second, ds.artist_ids.size());
        if (inserted) ds.artist_ids.push_back(it->second);
        ds.song_artist.push_back(pos->second);
    }
}

/// Artist similarity from `a<TAB>b<TAB>value` rows. Missing pairs are 0, the
/// diagonal is 1, and the matrix is symmetrized by taking the given value for
/// both orders when only one is listed.
inline cf::SimilarityMatrix read_similarity_tsv(const io::fs::path& path, const std::vector<std::string>& artist_ids) {
    std::unordered_map<std::string, Index> index;
    for (Index i = 0; i < artist_ids.size(); ++i) index.emplace(artist_ids[i], i);
    const auto n = static_cast<Eigen::Index>(artist_ids.size());
    cf::SimilarityMatrix s = cf::SimilarityMatrix::Zero(n, n);
    MatrixXd seen = MatrixXd::Zero(n, n);
    for (const auto& row : io::read_tsv(path, 3)) {
        const auto a = index.find(row[0]);
        const auto b = index.find(row[1]);
        if (a == index.end() || b == index.end()) continue;
        double v = 0.0;
        try {
            v = std::stod(row[2]);
        } catch (const std::exception&) {
            throw DataError("bad similarity value: " + row[2]);
        }
        require_data(std::isfinite(v) && v >= 0.0 && v <= 1.0, "similarity values must lie in [0, 1]");
        s(a->second, b->second) = v;
        seen(a->second, b->second) = 1.0;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (seen(i, j) == 0.0 && seen(j, i) != 0.0) s(i, j) = s(j, i);
    s.diagonal().setOnes();
    return s;
}

/// Artist similarity from raw interaction counts: binarize, then Jaccard.
inline cf::SimilarityMatrix similarity_from_cf(const cf::CFData& data, const std::vector<std::string>& artist_ids,
                                               std::uint64_t threshold) {
    return cf::full_similarity(cf::binarize(cf::select_items(data, artist_ids), threshold));
}

// ---------------------------------------------------------------------------
// Experiment protocol

struct ExperimentConfig {
    Index n_splits = 10;
    std::uint64_t seed = 0;
    Index relevant_k = 10;
    std::vector<double> c_grid;
    std::vector<mlr::Loss> loss_grid{mlr::Loss::AUC, mlr::Loss::MRR, mlr::Loss::NDCG};
    double pca_variance = 0.95;  // 0 disables PCA
    mlr::TrainConfig train;     // C and loss are overwritten per grid point
    bool dump_rankings = false;
    Index dump_top_n = 0;  // 0 = whole database
    mlr::ProjectionObserver observer;  // forwarded to every training run
};

inline std::vector<double> default_c_grid() {
    std::vector<double> grid;
    for (int e = -2; e <= 9; ++e) grid.push_back(std::pow(10.0, e));
    return grid;
}

struct ReportRow {
    Index split = 0;
    std::string c;     // empty for the Euclidean baseline
    std::string loss;  // "euclidean" for the baseline
    std::string stage;
    Index n_queries = 0;
    RankingMetrics mean;
};

struct SplitOutcome {
    double selected_c = 0.0;
    mlr::Loss selected_loss = mlr::Loss::AUC;
    double validation_auc = 0.0;
    double test_auc = 0.0;
    double euclidean_test_auc = 0.0;
    Index dimension = 0;  // representation dimension after optional PCA
    MatrixXd w;
};

struct ExperimentReport {
    std::vector<ReportRow> rows;
    std::vector<SplitOutcome> splits;
    std::vector<std::string> rankings;  // TSV text per split, when dumped
    double test_auc_mean = 0.0, test_auc_std = 0.0;
    double euclidean_auc_mean = 0.0, euclidean_auc_std = 0.0;
    Index dropped_training_queries = 0;
};

/// Relevance for every song in `queries` against the database `db_songs`:
/// each query's artist gets its top-k most similar training artists.
struct QueryBatch {
    IndexList songs;
    std::vector<cf::RelevanceSet> relevance;  // indices into db_songs
};

inline QueryBatch relevance_for(const Dataset& ds, const IndexList& train_artists, const IndexList& db_songs,
                                const IndexList& query_songs, Index k) {
    std::map<Index, IndexList> relevant_artists;
    IndexList local(db_songs.size());
    std::iota(local.begin(), local.end(), Index{0});
    IndexList db_artist(db_songs.size());
    for (Index i = 0; i < db_songs.size(); ++i) db_artist[i] = ds.song_artist[db_songs[i]];
    QueryBatch batch;
    batch.songs = query_songs;
    for (Index song : query_songs) {
        const Index artist = ds.song_artist[song];
        auto it = relevant_artists.find(artist);
        if (it == relevant_artists.end())
            it = relevant_artists.emplace(artist, cf::top_k_relevant(ds.artist_similarity, artist, train_artists, k)).first;
        batch.relevance.push_back(cf::song_relevance(artist, it->second, db_artist, local, ds.n_artists()));
    }
    return batch;
}

/// Mean metrics over queries with nonempty relevant and irrelevant sets,
/// ranking `db` by W-distance from each query row of `reps`.
inline std::pair<RankingMetrics, Index> mean_metrics(const MatrixXd& w, const MatrixXd& reps, const MatrixXd& db,
                                                     const QueryBatch& batch) {
    std::vector<std::optional<RankingMetrics>> per(batch.songs.size());
    parallel_for(batch.songs.size(), [&](Index i) {
        const auto& rel = batch.relevance[i];
        if (rel.positive.empty() || rel.negative.empty()) return;
        const IndexList ranked = mlr::rank_database(w, reps.row(static_cast<Eigen::Index>(batch.songs[i])).transpose(), db);
        per[i] = evaluate_ranking(restrict_ranking(ranked, rel.positive, rel.negative), rel.positive, rel.negative);
    });
    RankingMetrics sum;
    Index n = 0;
    for (const auto& m : per) {
        if (!m) continue;
        sum.auc += m->auc;
        sum.mrr += m->mrr;
        sum.ndcg += m->ndcg;
        ++n;
    }
    if (n > 0) {
        sum.auc /= static_cast<double>(n);
        sum.mrr /= static_cast<double>(n);
        sum.ndcg /= static_cast<double>(n);
    }
    return {sum, n};
}

inline std::string format_c(double c) {
    std::ostringstream os;
    os << c;
    return os.str();
}

/// Mean and sample standard deviation (0 for fewer than two values).
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline std::string ranking_dump(const Dataset& ds, const MatrixXd& w, const MatrixXd& reps, const IndexList& db_songs,
                                const MatrixXd& db, const IndexList& query_songs, Index top_n) {
    std::string out;
    for (Index song : query_songs) {
        const VectorXd q = reps.row(static_cast<Eigen::Index>(song)).transpose();
        const VectorXd d2 = mlr::squared_distances(w, q, db);
        const IndexList ranked = mlr::rank_database(w, q, db);
        const Index limit = top_n == 0 ? ranked.size() : std::min<Index>(top_n, ranked.size());
        for (Index r = 0; r < limit; ++r) {
            const Index hit = ranked[r];
            out += ds.song_ids[song] + "\t" + std::to_string(r + 1) + "\t" + ds.song_ids[db_songs[hit]] + "\t" +
                   io::format_double(std::sqrt(std::max(0.0, d2(static_cast<Eigen::Index>(hit))))) + "\n";
        }
    }
    return out;
}

inline ExperimentReport run_experiment(const Dataset& ds, const ExperimentConfig& cfg) {
    require_data(static_cast<Index>(ds.features.rows()) == ds.n_songs(), "feature rows and song ids differ");
    require_data(static_cast<Index>(ds.artist_similarity.rows()) == ds.n_artists(), "similarity matrix size mismatch");
    require(!cfg.c_grid.empty() && !cfg.loss_grid.empty(), "empty parameter grid");

    ExperimentReport report;
    const auto splits = make_splits(ds.n_artists(), cfg.n_splits, cfg.seed);
    std::vector<double> test_aucs, euclid_aucs;
    for (Index s = 0; s < splits.size(); ++s) {
        const Split& split = splits[s];
        const IndexList db_songs = ds.songs_of(split.train);
        require_data(!db_songs.empty(), "training split has no songs");

        // Representation: optional PCA fit on training songs only.
        MatrixXd db_raw(static_cast<Eigen::Index>(db_songs.size()), ds.features.cols());
        for (Index i = 0; i < db_songs.size(); ++i) db_raw.row(static_cast<Eigen::Index>(i)) = ds.features.row(static_cast<Eigen::Index>(db_songs[i]));
        MatrixXd reps = ds.features;
        if (cfg.pca_variance > 0.0) reps = vq::pca_fit(db_raw, cfg.pca_variance).apply_rows(ds.features);
        MatrixXd db(static_cast<Eigen::Index>(db_songs.size()), reps.cols());
        for (Index i = 0; i < db_songs.size(); ++i) db.row(static_cast<Eigen::Index>(i)) = reps.row(static_cast<Eigen::Index>(db_songs[i]));
        const Eigen::Index dim = reps.cols();

        const QueryBatch train_batch = relevance_for(ds, split.train, db_songs, db_songs, cfg.relevant_k);
        const QueryBatch val_batch = relevance_for(ds, split.train, db_songs, ds.songs_of(split.validation), cfg.relevant_k);

        mlr::QuerySet qs;
        qs.database = db;
        for (Index i = 0; i < train_batch.songs.size(); ++i)
            qs.queries.push_back({reps.row(static_cast<Eigen::Index>(train_batch.songs[i])).transpose(),
                                  train_batch.relevance[i].positive, train_batch.relevance[i].negative});

        SplitOutcome outcome;
        outcome.dimension = static_cast<Index>(dim);
        bool have_best = false;
        for (mlr::Loss loss : cfg.loss_grid) {
            for (double c : cfg.c_grid) {
                mlr::TrainConfig tc = cfg.train;
                tc.C = c;
                tc.loss = loss;
                const mlr::TrainResult trained = mlr::train(qs, tc, cfg.observer);
                report.dropped_training_queries += trained.dropped_queries;
                const auto [val, n_val] = mean_metrics(trained.w, reps, db, val_batch);
                report.rows.push_back({s, format_c(c), std::string(mlr::to_string(loss)), "validation", n_val, val});
                // Strict improvement keeps the earliest grid point on ties.
                if (!have_best || val.auc > outcome.validation_auc) {
                    have_best = true;
                    outcome.selected_c = c;
                    outcome.selected_loss = loss;
                    outcome.validation_auc = val.auc;
                    outcome.w = trained.w;
                }
            }
        }

        // Test data is touched only after selection.
        const IndexList test_songs = ds.songs_of(split.test);
        const QueryBatch test_batch = relevance_for(ds, split.train, db_songs, test_songs, cfg.relevant_k);
        const auto [test, n_test] = mean_metrics(outcome.w, reps, db, test_batch);
        const MatrixXd identity = MatrixXd::Identity(dim, dim);
        const auto [euclid, n_euclid] = mean_metrics(identity, reps, db, test_batch);
        report.rows.push_back({s, format_c(outcome.selected_c), std::string(mlr::to_string(outcome.selected_loss)), "test",
                               n_test, test});
        report.rows.push_back({s, "", "euclidean", "test", n_euclid, euclid});
        outcome.test_auc = test.auc;
        outcome.euclidean_test_auc = euclid.auc;
        test_aucs.push_back(test.auc);
        euclid_aucs.push_back(euclid.auc);
        if (cfg.dump_rankings)
            report.rankings.push_back(ranking_dump(ds, outcome.w, reps, db_songs, db, test_songs, cfg.dump_top_n));
        report.splits.push_back(std::move(outcome));
    }
    std::tie(report.test_auc_mean, report.test_auc_std) = mean_std(test_aucs);
    std::tie(report.euclidean_auc_mean, report.euclidean_auc_std) = mean_std(euclid_aucs);
    return report;
}

inline std::string report_csv(const ExperimentReport& report) {
    std::string out = "split,C,loss,stage,n_queries,auc,mrr,ndcg\n";
    for (const auto& r : report.rows)
        out += std::to_string(r.split) + "," + r.c + "," + r.loss + "," + r.stage + "," + std::to_string(r.n_queries) +
               "," + io::format_double(r.mean.auc) + "," + io::format_double(r.mean.mrr) + "," +
               io::format_double(r.mean.ndcg) + "\n";
    return out;
}

}  // namespace qbex::eval
