#pragma once

// File-level implementations of the qbex subcommands. Each function reads its
// inputs from disk, runs one pipeline stage and writes its outputs; the
// executable in tools/ only parses flags and maps errors to exit codes.

#include "qbex/audio.hpp"
#include "qbex/cf.hpp"
#include "qbex/codebook.hpp"
#include "qbex/common.hpp"
#include "qbex/eval.hpp"
#include "qbex/gmm.hpp"
#include "qbex/io.hpp"
#include "qbex/mlr.hpp"
#include "qbex/parallel.hpp"
#include "qbex/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace qbex::cmd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Shared file helpers

/// (id, path) pairs from a `id<TAB>path` manifest; relative paths are
/// resolved against the manifest's directory.
inline std::vector<std::pair<std::string, fs::path>> read_manifest(const fs::path& manifest) {
    std::vector<std::pair<std::string, fs::path>> out;
    for (const auto& row : io::read_tsv(manifest, 2)) {
        fs::path p = row[1];
        if (p.is_relative()) p = manifest.parent_path() / p;
        out.emplace_back(row[0], p);
    }
    require_data(!out.empty(), "manifest " + manifest.string() + " lists no entries");
    return out;
}

inline std::vector<MatrixXd> read_frame_sets(const std::vector<std::pair<std::string, fs::path>>& entries) {
    std::vector<MatrixXd> frames;
    frames.reserve(entries.size());
    for (const auto& [id, path] : entries) frames.push_back(io::read_qxf(path));
    return frames;
}

inline std::vector<std::string> ids_or_default(const fs::path& matrix_path, Index rows, const std::string& prefix) {
    if (fs::exists(io::sidecar(matrix_path, ".ids"))) {
        auto ids = io::read_ids(matrix_path);
        require_data(ids.size() == rows, matrix_path.string() + ": id count does not match matrix rows");
        return ids;
    }
    std::vector<std::string> ids;
    for (Index i = 0; i < rows; ++i) ids.push_back(prefix + std::to_string(i));
    return ids;
}

/// Codebook file: QXF rows [mu; sigma; centers...].
inline void write_codebook(const fs::path& path, const vq::Codebook& cb, io::Metadata meta) {
    MatrixXd m(static_cast<Eigen::Index>(cb.size()) + 2, static_cast<Eigen::Index>(cb.dim()));
    m.row(0) = cb.norm.mu.transpose();
    m.row(1) = cb.norm.sigma.transpose();
    m.bottomRows(static_cast<Eigen::Index>(cb.size())) = cb.centers;
    io::write_qxf(path, m);
    meta["layout"] = "mu,sigma,centers";
    meta["size"] = std::to_string(cb.size());
    meta["dim"] = std::to_string(cb.dim());
    io::write_metadata(path, meta);
}

inline vq::Codebook read_codebook(const fs::path& path) {
    const MatrixXd m = io::read_qxf(path);
    require_data(m.rows() >= 3, path.string() + ": codebook needs mu, sigma and at least one center");
    vq::Codebook cb;
    cb.norm.mu = m.row(0).transpose();
    cb.norm.sigma = m.row(1).transpose();
    require_data((cb.norm.sigma.array() > 0.0).all(), path.string() + ": codebook sigma must be positive");
    cb.centers = m.bottomRows(m.rows() - 2);
    return cb;
}

/// PCA file: QXF rows [mean; basis columns as rows...].
inline void write_pca(const fs::path& path, const vq::PCAModel& model, io::Metadata meta) {
    MatrixXd m(model.basis.cols() + 1, model.mean.size());
    m.row(0) = model.mean.transpose();
    m.bottomRows(model.basis.cols()) = model.basis.transpose();
    io::write_qxf(path, m);
    meta["layout"] = "mean,basis_rows";
    meta["components"] = std::to_string(model.dim());
    meta["explained_fraction"] = io::format_double(model.explained_fraction);
    io::write_metadata(path, meta);
}

inline vq::PCAModel read_pca(const fs::path& path) {
    const MatrixXd m = io::read_qxf(path);
    require_data(m.rows() >= 2, path.string() + ": PCA model needs a mean and at least one component");
    vq::PCAModel model;
    model.mean = m.row(0).transpose();
    model.basis = m.bottomRows(m.rows() - 1).transpose();
    return model;
}

/// Similarity source for a dataset: either an artist similarity TSV or raw
/// CF interactions binarized at `threshold`.
struct RelevanceSource {
    fs::path similarity;
    fs::path cf;
    std::uint64_t threshold = 10;
};

inline eval::Dataset load_dataset(const fs::path& features, const fs::path& song_artist, const RelevanceSource& src) {
    eval::Dataset ds;
    ds.features = io::read_qxf(features);
    ds.song_ids = io::read_ids(features);
    require_data(ds.song_ids.size() == static_cast<Index>(ds.features.rows()), "feature rows and ids differ");
    eval::assign_artists(ds, io::read_tsv(song_artist, 2));
    if (!src.similarity.empty()) {
        ds.artist_similarity = eval::read_similarity_tsv(src.similarity, ds.artist_ids);
    } else {
        require(!src.cf.empty(), "either a similarity file or a CF file is required");
        ds.artist_similarity = eval::similarity_from_cf(cf::read_cf_tsv(src.cf), ds.artist_ids, src.threshold);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// synth

inline void synth(const synth::SyntheticSpec& spec, const fs::path& out) {
    const synth::SyntheticData data = synth::generate(spec);
    const fs::path features = out / "features.qxf";
    io::write_qxf(features, data.features);
    io::write_ids(features, data.song_ids);
    io::write_metadata(features, {{"artists", std::to_string(spec.n_artists)},
                                  {"dim", std::to_string(spec.dim)},
                                  {"frame_noise", io::format_double(spec.frame_noise)},
                                  {"frames_per_song", std::to_string(spec.frames_per_song)},
                                  {"noise", io::format_double(spec.noise)},
                                  {"rank", std::to_string(spec.rank)},
                                  {"relevant_k", std::to_string(spec.relevant_k)},
                                  {"seed", std::to_string(spec.seed)},
                                  {"songs_per_artist", std::to_string(spec.songs_per_artist)}});
    io::write_qxf(out / "ground_truth_metric.qxf", data.metric);

    std::string song_artist;
    for (Index s = 0; s < data.song_ids.size(); ++s)
        song_artist += data.song_ids[s] + "\t" + data.artist_ids[data.song_artist[s]] + "\n";
    io::write_text(out / "song_artist.tsv", song_artist);

    std::string similarity;
    std::string relevance;
    IndexList all(spec.n_artists);
    std::iota(all.begin(), all.end(), Index{0});
    for (Index a = 0; a < spec.n_artists; ++a) {
        for (Index b = 0; b < spec.n_artists; ++b)
            similarity += data.artist_ids[a] + "\t" + data.artist_ids[b] + "\t" +
                          io::format_double(data.artist_similarity(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) + "\n";
        const IndexList top = cf::top_k_relevant(data.artist_similarity, a, all, spec.relevant_k);
        for (Index r = 0; r < top.size(); ++r)
            relevance += data.artist_ids[a] + "\t" + std::to_string(r + 1) + "\t" + data.artist_ids[top[r]] + "\n";
    }
    io::write_text(out / "artist_similarity.tsv", similarity);
    io::write_text(out / "relevance.tsv", relevance);

    if (!data.frames.empty()) {
        std::string manifest;
        for (Index s = 0; s < data.song_ids.size(); ++s) {
            const fs::path rel = fs::path("frames") / (data.song_ids[s] + ".qxf");
            io::write_qxf(out / rel, data.frames[s]);
            manifest += data.song_ids[s] + "\t" + rel.string() + "\n";
        }
        io::write_text(out / "frames.tsv", manifest);
    }
}

// ---------------------------------------------------------------------------
// features: WAV -> dynamic MFCC frame files

inline void features(const fs::path& wav_manifest, const fs::path& out_dir) {
    std::string manifest;
    for (const auto& [id, wav] : read_manifest(wav_manifest)) {
        const MatrixXd f = audio::features_from_clip(audio::read_wav(wav));
        const fs::path rel = id + ".qxf";
        io::write_qxf(out_dir / rel, f);
        manifest += id + "\t" + rel.string() + "\n";
    }
    io::write_text(out_dir / "frames.tsv", manifest);
}

// ---------------------------------------------------------------------------
// codebook

struct CodebookOptions {
    fs::path manifest;
    Index size = 64;
    Index sample_frames = 0;  // frames per song; 0 = all (431 = one 5 s excerpt)
    std::uint64_t seed = 0;
    fs::path out;
};

inline vq::Codebook codebook(const CodebookOptions& o) {
    const auto frames = read_frame_sets(read_manifest(o.manifest));
    const MatrixXd bag = vq::sample_frames(frames, o.sample_frames, o.seed);
    vq::Codebook cb = vq::train_codebook(bag, o.size, o.seed);
    write_codebook(o.out, cb,
                   {{"seed", std::to_string(o.seed)},
                    {"sample_frames", std::to_string(o.sample_frames)},
                    {"training_frames", std::to_string(bag.rows())}});
    return cb;
}

// ---------------------------------------------------------------------------
// quantize

struct QuantizeOptions {
    fs::path manifest;
    fs::path codebook;
    Index tau = 1;
    bool ppk = false;
    double pca_variance = 0.0;  // 0 disables; fit on every quantized song
    fs::path out;
};

inline MatrixXd quantize(const QuantizeOptions& o) {
    const auto entries = read_manifest(o.manifest);
    const vq::Codebook cb = read_codebook(o.codebook);
    MatrixXd reps = vq::quantize_all(read_frame_sets(entries), cb, o.tau);
    if (o.ppk) reps = vq::ppk_map_rows(reps);
    io::Metadata meta{{"codebook_size", std::to_string(cb.size())},
                      {"ppk", o.ppk ? "1" : "0"},
                      {"pca_variance", io::format_double(o.pca_variance)},
                      {"tau", std::to_string(o.tau)}};
    if (o.pca_variance > 0.0) {
        const vq::PCAModel pca = vq::pca_fit(reps, o.pca_variance);
        reps = pca.apply_rows(reps);
        write_pca(io::sidecar(o.out, ".pca.qxf"), pca, {{"variance_target", io::format_double(o.pca_variance)}});
        meta["pca_components"] = std::to_string(pca.dim());
    }
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.first);
    io::write_qxf(o.out, reps);
    io::write_ids(o.out, ids);
    meta["dim"] = std::to_string(reps.cols());
    io::write_metadata(o.out, meta);
    return reps;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    fs::path features;
    fs::path song_artist;
    RelevanceSource relevance;
    Index relevant_k = 10;
    mlr::TrainConfig config;
    fs::path out;
};

inline mlr::TrainResult train(const TrainOptions& o) {
    const eval::Dataset ds = load_dataset(o.features, o.song_artist, o.relevance);
    IndexList all_artists(ds.n_artists());
    std::iota(all_artists.begin(), all_artists.end(), Index{0});
    IndexList songs(ds.n_songs());
    std::iota(songs.begin(), songs.end(), Index{0});
    const eval::QueryBatch batch = eval::relevance_for(ds, all_artists, songs, songs, o.relevant_k);
    mlr::QuerySet qs;
    qs.database = ds.features;
    for (Index i = 0; i < songs.size(); ++i)
        qs.queries.push_back({ds.features.row(static_cast<Eigen::Index>(i)).transpose(), batch.relevance[i].positive,
                              batch.relevance[i].negative});
    mlr::TrainResult result = mlr::train(qs, o.config);

    io::write_qxf(o.out, result.w);
    io::write_metadata(o.out, {{"C", io::format_double(o.config.C)},
                               {"converged", result.converged ? "1" : "0"},
                               {"dim", std::to_string(result.w.rows())},
                               {"dropped_queries", std::to_string(result.dropped_queries)},
                               {"epsilon", io::format_double(o.config.epsilon)},
                               {"eta0", io::format_double(o.config.eta0)},
                               {"iterations", std::to_string(result.outer_iterations)},
                               {"loss", std::string(mlr::to_string(o.config.loss))},
                               {"max_inner", std::to_string(o.config.max_inner)},
                               {"max_outer", std::to_string(o.config.max_outer)},
                               {"relevant_k", std::to_string(o.relevant_k)},
                               {"seed", std::to_string(o.config.seed)},
                               {"slack", io::format_double(result.slack)}});
    std::string trace = "iteration,violation,slack,objective,inner_steps\n";
    for (const auto& r : result.trace)
        trace += std::to_string(r.iteration) + "," + io::format_double(r.violation) + "," + io::format_double(r.slack) +
                 "," + io::format_double(r.objective) + "," + std::to_string(r.inner_steps) + "\n";
    io::write_text(io::sidecar(o.out, ".trace.csv"), trace);
    return result;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    fs::path features;
    fs::path song_artist;
    RelevanceSource relevance;
    eval::ExperimentConfig experiment;
    fs::path out_dir;
};

inline eval::ExperimentReport evaluate(const EvalOptions& o) {
    const eval::Dataset ds = load_dataset(o.features, o.song_artist, o.relevance);
    eval::ExperimentReport report = eval::run_experiment(ds, o.experiment);
    io::write_text(o.out_dir / "report.csv", eval::report_csv(report));
    std::string summary;
    summary += "euclidean_auc_mean=" + io::format_double(report.euclidean_auc_mean) + "\n";
    summary += "euclidean_auc_std=" + io::format_double(report.euclidean_auc_std) + "\n";
    summary += "splits=" + std::to_string(report.splits.size()) + "\n";
    summary += "test_auc_mean=" + io::format_double(report.test_auc_mean) + "\n";
    summary += "test_auc_std=" + io::format_double(report.test_auc_std) + "\n";
    for (Index s = 0; s < report.splits.size(); ++s) {
        const auto& sp = report.splits[s];
        const std::string key = "split" + std::to_string(s) + ".";
        summary += key + "dimension=" + std::to_string(sp.dimension) + "\n";
        summary += key + "selected_C=" + eval::format_c(sp.selected_c) + "\n";
        summary += key + "selected_loss=" + std::string(mlr::to_string(sp.selected_loss)) + "\n";
        io::write_qxf(o.out_dir / ("metric_split" + std::to_string(s) + ".qxf"), sp.w);
    }
    io::write_text(o.out_dir / "summary.txt", summary);
    for (Index s = 0; s < report.rankings.size(); ++s)
        io::write_text(o.out_dir / ("rankings_split" + std::to_string(s) + ".tsv"), report.rankings[s]);
    return report;
}

// ---------------------------------------------------------------------------
// query

struct QueryOptions {
    fs::path model;  // empty: Euclidean distance
    fs::path database;
    fs::path query;
    Index top_n = 10;
};

/// TSV `query_id<TAB>rank<TAB>result_id<TAB>distance`, nearest first.
inline std::string query(const QueryOptions& o) {
    const MatrixXd db = io::read_qxf(o.database);
    const MatrixXd queries = io::read_qxf(o.query);
    require_data(queries.cols() == db.cols(), "query and database dimensions differ");
    const MatrixXd w = o.model.empty() ? MatrixXd(MatrixXd::Identity(db.cols(), db.cols())) : io::read_qxf(o.model);
    require_data(w.rows() == db.cols() && w.cols() == db.cols(), "model and database dimensions differ");
    const auto db_ids = ids_or_default(o.database, static_cast<Index>(db.rows()), "db");
    const auto q_ids = ids_or_default(o.query, static_cast<Index>(queries.rows()), "query");
    std::string out;
    for (Eigen::Index r = 0; r < queries.rows(); ++r) {
        const VectorXd q = queries.row(r).transpose();
        const VectorXd d2 = mlr::squared_distances(w, q, db);
        const IndexList ranked = mlr::rank_database(w, q, db);
        const Index limit = std::min<Index>(o.top_n, ranked.size());
        for (Index i = 0; i < limit; ++i)
            out += q_ids[static_cast<Index>(r)] + "\t" + std::to_string(i + 1) + "\t" + db_ids[ranked[i]] + "\t" +
                   io::format_double(std::sqrt(std::max(0.0, d2(static_cast<Eigen::Index>(ranked[i]))))) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// baselines

struct TfidfOptions {
    fs::path database;  // histograms, one row per song
    fs::path query;
    Index top_n = 10;
};

/// TF-IDF weighted histograms ranked by cosine similarity. The distance column
/// holds 1 - cosine.
inline std::string baseline_tfidf(const TfidfOptions& o) {
    const MatrixXd db = io::read_qxf(o.database);
    const MatrixXd queries = io::read_qxf(o.query);
    require_data(queries.cols() == db.cols(), "query and database dimensions differ");
    const VectorXd idf = vq::idf_fit(db);
    MatrixXd db_w(db.rows(), db.cols());
    for (Eigen::Index i = 0; i < db.rows(); ++i) db_w.row(i) = vq::tfidf_apply(db.row(i).transpose(), idf).transpose();
    const auto db_ids = ids_or_default(o.database, static_cast<Index>(db.rows()), "db");
    const auto q_ids = ids_or_default(o.query, static_cast<Index>(queries.rows()), "query");
    std::string out;
    for (Eigen::Index r = 0; r < queries.rows(); ++r) {
        const VectorXd q = vq::tfidf_apply(queries.row(r).transpose(), idf);
        const IndexList ranked = vq::rank_by_cosine(q, db_w);
        const Index limit = std::min<Index>(o.top_n, ranked.size());
        for (Index i = 0; i < limit; ++i) {
            const double cos = vq::cosine_similarity(q, db_w.row(static_cast<Eigen::Index>(ranked[i])).transpose());
            out += q_ids[static_cast<Index>(r)] + "\t" + std::to_string(i + 1) + "\t" + db_ids[ranked[i]] + "\t" +
                   io::format_double(1.0 - cos) + "\n";
        }
    }
    return out;
}

struct GmmOptions {
    fs::path database_manifest;  // frame files
    fs::path query_manifest;
    Index components = 8;
    Index samples = 2048;
    std::uint64_t seed = 0;
    Index top_n = 10;
};

/// Per-song GMMs ranked by Monte-Carlo cross-entropy; the distance column
/// holds the cross-entropy estimate.
inline std::string baseline_gmm(const GmmOptions& o) {
    const auto db_entries = read_manifest(o.database_manifest);
    const auto q_entries = read_manifest(o.query_manifest);
    const auto db_frames = read_frame_sets(db_entries);
    std::vector<gmm::GMMModel> db_models(db_frames.size());
    parallel_for(db_frames.size(), [&](Index i) {
        db_models[i] = gmm::fit_gmm(db_frames[i], {o.components, 200, 1e-6, o.seed + i}).model;
    });
    std::string out;
    for (Index r = 0; r < q_entries.size(); ++r) {
        const MatrixXd frames = io::read_qxf(q_entries[r].second);
        const gmm::GMMModel p_q = gmm::fit_gmm(frames, {o.components, 200, 1e-6, o.seed}).model;
        const gmm::GmmRanking ranking = gmm::rank_by_gmm(p_q, db_models, o.samples, o.seed + r);
        const Index limit = std::min<Index>(o.top_n, ranking.order.size());
        for (Index i = 0; i < limit; ++i) {
            const Index hit = ranking.order[i];
            out += q_entries[r].first + "\t" + std::to_string(i + 1) + "\t" + db_entries[hit].first + "\t" +
                   io::format_double(ranking.cross_entropy[hit]) + "\n";
        }
    }
    return out;
}

}  // namespace qbex::cmd
