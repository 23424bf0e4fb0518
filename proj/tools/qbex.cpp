// qbex: command-line driver for the query-by-example pipeline.
//
//   synth -> codebook -> quantize -> train / eval -> query
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include "qbex/commands.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace qbex;

struct RelevanceFlags {
    std::string similarity;
    std::string cf;
    std::uint64_t threshold = 10;
    Index relevant_k = 10;

    void attach(CLI::App* app) {
        auto* sim = app->add_option("--similarity", similarity, "artist similarity TSV (a, b, value)");
        auto* raw = app->add_option("--cf", cf, "CF interactions TSV (user, artist, count)");
        sim->excludes(raw);
        app->add_option("--threshold", threshold, "CF binarization threshold")->capture_default_str();
        app->add_option("--relevant-k", relevant_k, "relevant artists per query artist")->capture_default_str();
    }

    cmd::RelevanceSource source() const {
        if (similarity.empty() && cf.empty()) throw ParameterError("one of --similarity or --cf is required");
        return {similarity, cf, threshold};
    }
};

struct SolverFlags {
    double epsilon = 0.01;
    int max_outer = 100;
    int max_inner = 500;
    double eta0 = 0.1;

    void attach(CLI::App* app) {
        app->add_option("--epsilon", epsilon, "cutting-plane tolerance")->capture_default_str();
        app->add_option("--max-outer", max_outer, "cutting-plane iteration cap")->capture_default_str();
        app->add_option("--max-inner", max_inner, "inner solver step cap")->capture_default_str();
        app->add_option("--eta0", eta0, "initial inner step size")->capture_default_str();
    }

    mlr::TrainConfig config(std::uint64_t seed) const {
        mlr::TrainConfig c;
        c.epsilon = epsilon;
        c.max_outer = max_outer;
        c.max_inner = max_inner;
        c.eta0 = eta0;
        c.seed = seed;
        return c;
    }
};

const std::vector<std::string> kLosses{"auc", "mrr", "ndcg"};

int run(int argc, char** argv) {
    CLI::App app{"Query-by-example music similarity with metric learning to rank"};
    app.set_config("--config", "", "key=value configuration file; flags override it");
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "random seed for every stage")->capture_default_str();

    // synth
    synth::SyntheticSpec spec;
    std::string synth_out;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset with a planted metric");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();
    synth_cmd->add_option("--artists", spec.n_artists)->capture_default_str();
    synth_cmd->add_option("--songs-per-artist", spec.songs_per_artist)->capture_default_str();
    synth_cmd->add_option("--dim", spec.dim)->capture_default_str();
    synth_cmd->add_option("--rank", spec.rank, "rank of the planted metric")->capture_default_str();
    synth_cmd->add_option("--relevant-k", spec.relevant_k, "relevant artists written to relevance.tsv")
        ->capture_default_str();
    synth_cmd->add_option("--noise", spec.noise, "song noise around the artist prototype")->capture_default_str();
    synth_cmd->add_option("--frames-per-song", spec.frames_per_song, "frame sequence length; 0 writes none")
        ->capture_default_str();
    synth_cmd->add_option("--frame-noise", spec.frame_noise)->capture_default_str();

    // features
    std::string wav_manifest, features_out;
    auto* features_cmd = app.add_subcommand("features", "WAV clips to dynamic MFCC frame files");
    features_cmd->add_option("--manifest", wav_manifest, "TSV: song id, WAV path")->required();
    features_cmd->add_option("--out-dir", features_out)->required();

    // codebook
    cmd::CodebookOptions cb;
    std::string cb_manifest, cb_out;
    auto* codebook_cmd = app.add_subcommand("codebook", "train a codeword dictionary over sampled frames");
    codebook_cmd->add_option("--manifest", cb_manifest, "TSV: song id, frame QXF path")->required();
    codebook_cmd->add_option("--codebook-size", cb.size)->capture_default_str();
    codebook_cmd->add_option("--sample-frames", cb.sample_frames, "consecutive frames per song; 0 = all")
        ->capture_default_str();
    codebook_cmd->add_option("--out", cb_out)->required();

    // quantize
    cmd::QuantizeOptions qo;
    std::string q_manifest, q_codebook, q_out;
    auto* quantize_cmd = app.add_subcommand("quantize", "frame files to codeword histograms");
    quantize_cmd->add_option("--manifest", q_manifest)->required();
    quantize_cmd->add_option("--codebook", q_codebook)->required();
    quantize_cmd->add_option("--tau", qo.tau, "codewords per frame")->capture_default_str();
    quantize_cmd->add_flag("--ppk", qo.ppk, "apply the square-root map");
    quantize_cmd->add_option("--pca-variance", qo.pca_variance, "retained variance fraction; 0 disables")
        ->capture_default_str();
    quantize_cmd->add_option("--out", q_out)->required();

    // train
    std::string t_features, t_song_artist, t_out, t_loss = "auc";
    double t_c = 1.0;
    RelevanceFlags t_rel;
    SolverFlags t_solver;
    auto* train_cmd = app.add_subcommand("train", "learn a metric on every song");
    train_cmd->add_option("--features", t_features)->required();
    train_cmd->add_option("--song-artist", t_song_artist, "TSV: song id, artist id")->required();
    t_rel.attach(train_cmd);
    t_solver.attach(train_cmd);
    train_cmd->add_option("--loss", t_loss)->check(CLI::IsMember(kLosses))->capture_default_str();
    train_cmd->add_option("--C", t_c, "slack trade-off")->capture_default_str();
    train_cmd->add_option("--out", t_out, "model QXF")->required();

    // eval
    std::string e_features, e_song_artist, e_out;
    std::vector<double> e_c;
    std::vector<std::string> e_loss;
    Index e_splits = 10, e_top_n = 0;
    double e_pca = 0.95;
    RelevanceFlags e_rel;
    SolverFlags e_solver;
    auto* eval_cmd = app.add_subcommand("eval", "split artists, select C and loss on validation, report test");
    eval_cmd->add_option("--features", e_features)->required();
    eval_cmd->add_option("--song-artist", e_song_artist)->required();
    e_rel.attach(eval_cmd);
    e_solver.attach(eval_cmd);
    eval_cmd->add_option("--C", e_c, "C grid (default 1e-2 .. 1e9)");
    eval_cmd->add_option("--loss", e_loss, "loss grid (default all)")->check(CLI::IsMember(kLosses));
    eval_cmd->add_option("--splits", e_splits)->capture_default_str();
    eval_cmd->add_option("--pca-variance", e_pca, "PCA fit on training songs; 0 disables")->capture_default_str();
    eval_cmd->add_option("--top-n", e_top_n, "rows per query in the ranking dumps; 0 = all")->capture_default_str();
    eval_cmd->add_option("--out-dir", e_out)->required();

    // query
    cmd::QueryOptions qy;
    std::string qy_model, qy_db, qy_query;
    auto* query_cmd = app.add_subcommand("query", "rank a database for each query row");
    query_cmd->add_option("--model", qy_model, "metric QXF; omitted = Euclidean");
    query_cmd->add_option("--database", qy_db)->required();
    query_cmd->add_option("--query", qy_query)->required();
    query_cmd->add_option("--top-n", qy.top_n)->capture_default_str();

    // baseline
    std::string b_method, b_db, b_query;
    Index b_top_n = 10, b_components = 8, b_samples = 2048;
    auto* baseline_cmd = app.add_subcommand("baseline", "TF-IDF cosine or GMM cross-entropy ranking");
    baseline_cmd->add_option("method", b_method)->required()->check(CLI::IsMember({"tfidf", "gmm"}));
    baseline_cmd->add_option("--database", b_db, "histogram QXF (tfidf) or frame manifest (gmm)")->required();
    baseline_cmd->add_option("--query", b_query, "histogram QXF (tfidf) or frame manifest (gmm)")->required();
    baseline_cmd->add_option("--top-n", b_top_n)->capture_default_str();
    baseline_cmd->add_option("--components", b_components)->capture_default_str();
    baseline_cmd->add_option("--samples", b_samples, "Monte-Carlo sample size")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*synth_cmd) {
        spec.seed = seed;
        cmd::synth(spec, synth_out);
    } else if (*features_cmd) {
        cmd::features(wav_manifest, features_out);
    } else if (*codebook_cmd) {
        cb.manifest = cb_manifest;
        cb.out = cb_out;
        cb.seed = seed;
        cmd::codebook(cb);
    } else if (*quantize_cmd) {
        qo.manifest = q_manifest;
        qo.codebook = q_codebook;
        qo.out = q_out;
        cmd::quantize(qo);
    } else if (*train_cmd) {
        cmd::TrainOptions o{t_features, t_song_artist, t_rel.source(), t_rel.relevant_k, t_solver.config(seed), t_out};
        o.config.C = t_c;
        o.config.loss = mlr::parse_loss(t_loss);
        const auto result = cmd::train(o);
        std::cerr << "iterations=" << result.outer_iterations << " converged=" << result.converged
                  << " slack=" << result.slack << "\n";
        if (result.dropped_queries > 0)
            std::cerr << "warning: dropped " << result.dropped_queries
                      << " queries with an empty relevant or irrelevant set\n";
    } else if (*eval_cmd) {
        cmd::EvalOptions o{e_features, e_song_artist, e_rel.source(), {}, e_out};
        auto& x = o.experiment;
        x.n_splits = e_splits;
        x.seed = seed;
        x.relevant_k = e_rel.relevant_k;
        x.c_grid = e_c.empty() ? eval::default_c_grid() : e_c;
        if (!e_loss.empty()) {
            x.loss_grid.clear();
            for (const auto& l : e_loss) x.loss_grid.push_back(mlr::parse_loss(l));
        }
        x.pca_variance = e_pca;
        x.train = e_solver.config(seed);
        x.dump_rankings = true;
        x.dump_top_n = e_top_n;
        const auto report = cmd::evaluate(o);
        if (report.dropped_training_queries > 0)
            std::cerr << "warning: dropped " << report.dropped_training_queries
                      << " training queries with an empty relevant or irrelevant set (summed over runs)\n";
        std::cout << "test AUC " << report.test_auc_mean << " +/- " << report.test_auc_std << " (euclidean "
                  << report.euclidean_auc_mean << " +/- " << report.euclidean_auc_std << ")\n";
    } else if (*query_cmd) {
        qy.model = qy_model;
        qy.database = qy_db;
        qy.query = qy_query;
        std::cout << cmd::query(qy);
    } else if (*baseline_cmd) {
        if (b_method == "tfidf")
            std::cout << cmd::baseline_tfidf({b_db, b_query, b_top_n});
        else
            std::cout << cmd::baseline_gmm({b_db, b_query, b_components, b_samples, seed, b_top_n});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const qbex::ParameterError& e) {
        std::cerr << "qbex: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "qbex: " << e.what() << "\n";
        return 2;
    }
}
