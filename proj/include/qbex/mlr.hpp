#pragma once

// Metric learning to rank.
//
// A PSD matrix W defines the distance ||q - x||_W = sqrt((q-x)' W (q-x)).
// Training fits W so that, for every training query, ranking the database by
// that distance puts the query's relevant items ahead of its irrelevant ones,
// measured by a ranking loss (AUC, MRR or NDCG). The structural objective
//
//     min_{W >= 0}  tr(W) + C * xi
//     s.t.  <W, PsiDiff_c> >= delta_c - xi   for every cached constraint c
//
// is solved with a 1-slack cutting-plane loop: each round runs the
// separation oracle for every query, averages the most violated rankings
// into one constraint, and re-solves the restricted problem by projected
// subgradient descent.
//
// Rankings are represented by interleavings. With relevant items sorted by
// descending score s_1 >= ... >= s_P and irrelevant items by t_1 >= ... >= t_N,
// k_a counts the irrelevant items placed ahead of relevant item a;
// 0 <= k_1 <= ... <= k_P <= N.

#include "qbex/common.hpp"
#include "qbex/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qbex::mlr {

enum class Loss { AUC, MRR, NDCG };

inline std::string_view to_string(Loss loss) {
    switch (loss) {
        case Loss::AUC: return "auc";
        case Loss::MRR: return "mrr";
        case Loss::NDCG: return "ndcg";
    }
    return "?";
}

inline Loss parse_loss(std::string_view name) {
    if (name == "auc") return Loss::AUC;
    if (name == "mrr") return Loss::MRR;
    if (name == "ndcg") return Loss::NDCG;
    throw ParameterError("unknown loss '" + std::string(name) + "' (expected auc, mrr or ndcg)");
}

using Interleaving = std::vector<Index>;

inline bool valid_interleaving(const Interleaving& k, Index n_neg) {
    for (std::size_t a = 0; a < k.size(); ++a) {
        if (k[a] > n_neg) return false;
        if (a > 0 && k[a] < k[a - 1]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Distances and scores

inline void check_dims(const MatrixXd& w, Eigen::Index n) {
    require_data(w.rows() == n && w.cols() == n, "metric and vector dimensions differ");
}

inline double squared_distance(const MatrixXd& w, const VectorXd& q, const VectorXd& x) {
    require_data(q.size() == x.size(), "vector dimensions differ");
    check_dims(w, q.size());
    const VectorXd d = q - x;
    return d.dot(w * d);
}

inline double mahalanobis_distance(const MatrixXd& w, const VectorXd& q, const VectorXd& x) {
    return std::sqrt(std::max(0.0, squared_distance(w, q, x)));
}

/// <W, phi(q, x)>_F with phi(q, x) = -(q - x)(q - x)': the negative squared
/// distance, computed without forming phi.
inline double pointwise_score(const MatrixXd& w, const VectorXd& q, const VectorXd& x) {
    return -squared_distance(w, q, x);
}

/// Squared W-distances from q to every row of `database`.
inline VectorXd squared_distances(const MatrixXd& w, const VectorXd& q, const MatrixXd& database) {
    require_data(database.cols() == q.size(), "database and query dimensions differ");
    check_dims(w, q.size());
    const MatrixXd diff = database.rowwise() - q.transpose();
    return (diff * w).cwiseProduct(diff).rowwise().sum();
}

/// Database row indices by increasing W-distance from q (ties by index).
inline IndexList rank_database(const MatrixXd& w, const VectorXd& q, const MatrixXd& database) {
    const VectorXd dist = squared_distances(w, q, database);
    IndexList order(static_cast<std::size_t>(database.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return dist(a) < dist(b); });
    return order;
}

// ---------------------------------------------------------------------------
// Ranking losses

namespace detail {

inline double ndcg_discount(Index rank) { return 1.0 / std::log2(1.0 + static_cast<double>(rank)); }

inline double ideal_dcg(Index n_pos) {
    double idcg = 0.0;
    for (Index a = 1; a <= n_pos; ++a) idcg += ndcg_discount(a);
    return idcg;
}

}  // namespace detail

/// Loss of the ranking encoded by `k` relative to a correct ranking, in [0, 1].
/// NDCG uses binary gains, a 1/log2(1 + rank) discount and no cutoff.
inline double ranking_loss(Loss loss, const Interleaving& k, Index n_pos, Index n_neg) {
    require_data(n_pos > 0 && n_neg > 0, "ranking loss needs nonempty relevant and irrelevant sets");
    require_data(k.size() == n_pos && valid_interleaving(k, n_neg), "invalid interleaving");
    switch (loss) {
        case Loss::AUC: {
            const double total = static_cast<double>(std::accumulate(k.begin(), k.end(), Index{0}));
            return total / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
        }
        case Loss::MRR: return 1.0 - 1.0 / (static_cast<double>(k.front()) + 1.0);
        case Loss::NDCG: {
            double dcg = 0.0;
            for (Index a = 0; a < n_pos; ++a) dcg += detail::ndcg_discount(k[a] + a + 1);
            return 1.0 - dcg / detail::ideal_dcg(n_pos);
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Partial-order feature

/// Per-item weights w such that psi(q, y) = sum_i w_i phi(q, i), for relevant
/// items in `pos_order` and irrelevant items in `neg_order`. The pairwise
/// sign y_ij is +1 exactly when irrelevant item j (1-based position in
/// neg_order) comes after relevant item a, i.e. j > k_a.
struct PsiWeights {
    std::vector<double> pos;
    std::vector<double> neg;
};

inline PsiWeights psi_weights(const Interleaving& k, Index n_neg) {
    const Index n_pos = k.size();
    const double norm = static_cast<double>(n_pos) * static_cast<double>(n_neg);
    PsiWeights w;
    w.pos.resize(n_pos);
    w.neg.resize(n_neg);
    for (Index a = 0; a < n_pos; ++a)
        w.pos[a] = (static_cast<double>(n_neg) - 2.0 * static_cast<double>(k[a])) / norm;
    // after[j] = number of relevant items ranked below irrelevant item j.
    Index a = 0;
    for (Index j = 0; j < n_neg; ++j) {
        while (a < n_pos && k[a] <= j) ++a;
        const Index after = n_pos - a;
        // y = +1 for the a relevant items ahead of j, -1 for the ones after.
        w.neg[j] = -(static_cast<double>(a) - static_cast<double>(after)) / norm;
    }
    return w;
}

/// -sum_i w_i (q - x_i)(q - x_i)' over the listed rows of `x`. Terms are
/// accumulated in ascending row order, so any listing of the same
/// (row, weight) pairs gives a bit-identical result.
inline MatrixXd weighted_outer(const MatrixXd& x, const VectorXd& q, const IndexList& rows,
                               const std::vector<double>& weights) {
    const Eigen::Index d = q.size();
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows[a] < rows[b]; });
    MatrixXd diff(static_cast<Eigen::Index>(rows.size()), d);
    VectorXd w(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
        diff.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[order[i]])) - q.transpose();
        w(static_cast<Eigen::Index>(i)) = weights[order[i]];
    }
    return -(diff.transpose() * w.asDiagonal() * diff);
}

/// psi(q, y) for the ranking given by interleaving `k` over relevant rows
/// `pos_order` and irrelevant rows `neg_order` of `x`.
inline MatrixXd psi(const MatrixXd& x, const VectorXd& q, const IndexList& pos_order, const IndexList& neg_order,
                    const Interleaving& k) {
    require_data(!pos_order.empty() && !neg_order.empty(), "psi needs nonempty relevant and irrelevant sets");
    require_data(k.size() == pos_order.size() && valid_interleaving(k, neg_order.size()), "invalid interleaving");
    require_data(x.cols() == q.size(), "database and query dimensions differ");
    const PsiWeights w = psi_weights(k, neg_order.size());
    return weighted_outer(x, q, pos_order, w.pos) + weighted_outer(x, q, neg_order, w.neg);
}

/// psi(q, y_correct) - psi(q, y_k). Both rankings share the same orders, so
/// only the weight differences 2 k_a / (PN) and -2 after_j / (PN) remain.
inline MatrixXd psi_gap(const MatrixXd& x, const VectorXd& q, const IndexList& pos_order, const IndexList& neg_order,
                        const Interleaving& k) {
    const Index n_pos = pos_order.size();
    const Index n_neg = neg_order.size();
    const double norm = static_cast<double>(n_pos) * static_cast<double>(n_neg);
    std::vector<double> wp(n_pos), wn(n_neg, 0.0);
    for (Index a = 0; a < n_pos; ++a) wp[a] = 2.0 * static_cast<double>(k[a]) / norm;
    Index a = 0;
    for (Index j = 0; j < n_neg; ++j) {
        while (a < n_pos && k[a] <= j) ++a;
        wn[j] = -2.0 * static_cast<double>(n_pos - a) / norm;
    }
    return weighted_outer(x, q, pos_order, wp) + weighted_outer(x, q, neg_order, wn);
}

// ---------------------------------------------------------------------------
// Separation oracle

struct OracleResult {
    Interleaving k;
    IndexList pos_order;  // relevant rows, descending score
    IndexList neg_order;  // irrelevant rows, descending score
    double loss = 0.0;       // Delta(y_q, y)
    double violation = 0.0;  // Delta + <W, psi(q, y) - psi(q, y_q)>
};

namespace detail {

inline IndexList sort_by_score(const IndexList& items, const VectorXd& score_of_row) {
    IndexList order = items;
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (score_of_row(a) != score_of_row(b)) return score_of_row(a) > score_of_row(b);
        return a < b;
    });
    return order;
}

/// Loss contribution of relevant item a (0-based) when k irrelevant items
/// precede it; summing over a reproduces ranking_loss.
struct LossTerms {
    Loss loss;
    Index n_pos, n_neg;
    double idcg;

    double operator()(Index a, Index k) const {
        switch (loss) {
            case Loss::AUC: return static_cast<double>(k) / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
            case Loss::MRR: return a == 0 ? 1.0 - 1.0 / (static_cast<double>(k) + 1.0) : 0.0;
            case Loss::NDCG: return (ndcg_discount(a + 1) - ndcg_discount(k + a + 1)) / idcg;
        }
        return 0.0;
    }
};

}  // namespace detail

/// Scores <W, psi(q, y)> - <W, psi(q, y_q)> contributed by relevant item a
/// placed after the first k irrelevant items: 2 sum_{b<=k} (t_b - s_a) / (PN).
/// Returns the most violated interleaving by dynamic programming over
/// non-decreasing k, O(P * N) after sorting.
inline OracleResult separation_oracle_scores(const VectorXd& pos_scores, const VectorXd& neg_scores, Loss loss) {
    const Index n_pos = static_cast<Index>(pos_scores.size());
    const Index n_neg = static_cast<Index>(neg_scores.size());
    require_data(n_pos > 0 && n_neg > 0, "separation oracle needs nonempty relevant and irrelevant sets");
    const double norm = static_cast<double>(n_pos) * static_cast<double>(n_neg);
    const detail::LossTerms delta{loss, n_pos, n_neg, detail::ideal_dcg(n_pos)};

    // Scores arrive sorted descending; prefix[k] = sum_{b<k} t_b.
    std::vector<double> prefix(n_neg + 1, 0.0);
    for (Index b = 0; b < n_neg; ++b) prefix[b + 1] = prefix[b] + neg_scores(static_cast<Eigen::Index>(b));

    const Index width = n_neg + 1;
    std::vector<double> best(width), next(width);
    std::vector<Index> from(n_pos * width);
    auto gain = [&](Index a, Index k) {
        const double s = pos_scores(static_cast<Eigen::Index>(a));
        return delta(a, k) + 2.0 * (prefix[k] - static_cast<double>(k) * s) / norm;
    };
    for (Index k = 0; k < width; ++k) best[k] = gain(0, k);
    for (Index a = 1; a < n_pos; ++a) {
        // Running prefix maximum over k' <= k; the first maximizer wins ties.
        double run_max = -std::numeric_limits<double>::infinity();
        Index run_arg = 0;
        for (Index k = 0; k < width; ++k) {
            if (best[k] > run_max) {
                run_max = best[k];
                run_arg = k;
            }
            next[k] = gain(a, k) + run_max;
            from[a * width + k] = run_arg;
        }
        std::swap(best, next);
    }
    Index arg = 0;
    for (Index k = 1; k < width; ++k)
        if (best[k] > best[arg]) arg = k;

    OracleResult out;
    out.k.resize(n_pos);
    out.k[n_pos - 1] = arg;
    for (Index a = n_pos - 1; a > 0; --a) out.k[a - 1] = from[a * width + out.k[a]];

    out.loss = ranking_loss(loss, out.k, n_pos, n_neg);
    double score_gap = 0.0;
    for (Index a = 0; a < n_pos; ++a) {
        const double s = pos_scores(static_cast<Eigen::Index>(a));
        score_gap += 2.0 * (prefix[out.k[a]] - static_cast<double>(out.k[a]) * s) / norm;
    }
    out.violation = out.loss + score_gap;
    return out;
}

/// Most violated ranking for query q with relevant rows `pos` and irrelevant
/// rows `neg` of `x`, under metric W.
inline OracleResult separation_oracle(const MatrixXd& w, const VectorXd& q, const MatrixXd& x, const IndexList& pos,
                                      const IndexList& neg, Loss loss) {
    require_data(!pos.empty() && !neg.empty(), "separation oracle needs nonempty relevant and irrelevant sets");
    const VectorXd score = -squared_distances(w, q, x);
    const IndexList pos_order = detail::sort_by_score(pos, score);
    const IndexList neg_order = detail::sort_by_score(neg, score);
    VectorXd s(static_cast<Eigen::Index>(pos_order.size())), t(static_cast<Eigen::Index>(neg_order.size()));
    for (std::size_t i = 0; i < pos_order.size(); ++i) s(static_cast<Eigen::Index>(i)) = score(static_cast<Eigen::Index>(pos_order[i]));
    for (std::size_t j = 0; j < neg_order.size(); ++j) t(static_cast<Eigen::Index>(j)) = score(static_cast<Eigen::Index>(neg_order[j]));
    OracleResult out = separation_oracle_scores(s, t, loss);
    out.pos_order = pos_order;
    out.neg_order = neg_order;
    return out;
}

// ---------------------------------------------------------------------------
// PSD projection

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

/// Frobenius-nearest PSD matrix: symmetrize, clamp negative eigenvalues to 0.
inline MatrixXd project_psd(const MatrixXd& m) {
    require_data(m.rows() == m.cols(), "PSD projection needs a square matrix");
    require_data(m.allFinite(), "non-finite entry in matrix to project");
    const MatrixXd sym = symmetrize(m);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    // Reconstruction roundoff is about d * eps * lambda_max; flooring the
    // clamped spectrum above that keeps the result PSD in floating point too.
    const double top = std::max(0.0, eig.eigenvalues().maxCoeff());
    const double floor = 16.0 * static_cast<double>(m.rows()) * std::numeric_limits<double>::epsilon() * top;
    const VectorXd clamped = eig.eigenvalues().cwiseMax(floor);
    const MatrixXd& v = eig.eigenvectors();
    return symmetrize(v * clamped.asDiagonal() * v.transpose());
}

inline double min_eigenvalue(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(symmetrize(m), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

// ---------------------------------------------------------------------------
// Training

struct Query {
    VectorXd q;
    IndexList positive;  // rows of QuerySet::database
    IndexList negative;
};

struct QuerySet {
    MatrixXd database;
    std::vector<Query> queries;
};

struct TrainConfig {
    double C = 1.0;
    Loss loss = Loss::AUC;
    double epsilon = 0.01;
    int max_outer = 100;
    int max_inner = 500;
    double eta0 = 0.1;
    std::uint64_t seed = 0;
};

/// One aggregated cutting plane: <W, psi_diff> >= delta - xi.
struct Constraint {
    MatrixXd psi_diff;
    double delta = 0.0;

    double violation(const MatrixXd& w) const { return delta - (w.array() * psi_diff.array()).sum(); }
};

struct OuterRecord {
    int iteration = 0;
    double violation = 0.0;  // of the newly generated constraint, before re-solving
    double slack = 0.0;      // after re-solving
    double objective = 0.0;  // tr(W) + C * slack after re-solving
    int inner_steps = 0;
};

struct TrainResult {
    MatrixXd w;
    std::vector<Constraint> working_set;
    std::vector<OuterRecord> trace;
    double slack = 0.0;
    int outer_iterations = 0;
    bool converged = false;
    Index dropped_queries = 0;
};

/// Called with W after every PSD projection performed during training.
using ProjectionObserver = std::function<void(const MatrixXd&)>;

inline double slack_of(const MatrixXd& w, const std::vector<Constraint>& cs) {
    double xi = 0.0;
    for (const auto& c : cs) xi = std::max(xi, c.violation(w));
    return xi;
}

inline double objective_of(const MatrixXd& w, const std::vector<Constraint>& cs, double c_param) {
    return w.trace() + c_param * slack_of(w, cs);
}

/// Projected subgradient descent on tr(W) + C * max(0, max_c violation_c(W)),
/// warm-started at `w`. The step is eta0 / t times a power of two: halved
/// until the objective does not increase (at most 60 halvings), then halved
/// further while that strictly lowers the objective. The search starts one
/// halving short of the previous step's. Stops after `max_inner` steps, when
/// no non-increasing step exists, or when the relative objective change drops
/// below 1e-6.
inline int solve_restricted(MatrixXd& w, const std::vector<Constraint>& cs, const TrainConfig& cfg,
                            const ProjectionObserver& observer) {
    constexpr int kMaxHalvings = 60;
    const Eigen::Index d = w.rows();
    const MatrixXd identity = MatrixXd::Identity(d, d);
    double f = objective_of(w, cs, cfg.C);
    int steps = 0;
    int start = 0;
    for (int t = 1; t <= cfg.max_inner; ++t) {
        // Most violated cached constraint defines the subgradient.
        double worst = 0.0;
        const Constraint* active = nullptr;
        for (const auto& c : cs) {
            const double v = c.violation(w);
            if (v > worst) {
                worst = v;
                active = &c;
            }
        }
        const MatrixXd grad = active ? MatrixXd(identity - cfg.C * active->psi_diff) : identity;
        auto try_step = [&](int halvings, MatrixXd& out) {
            out = project_psd(w - std::ldexp(cfg.eta0 / t, -halvings) * grad);
            if (observer) observer(out);
            return objective_of(out, cs, cfg.C);
        };

        int h = start;
        MatrixXd candidate;
        double f_new = try_step(h, candidate);
        while (f_new > f && h < kMaxHalvings) f_new = try_step(++h, candidate);
        if (f_new > f) break;
        MatrixXd shorter;
        while (h < kMaxHalvings) {
            const double f_short = try_step(h + 1, shorter);
            if (!(f_short < f_new)) break;
            ++h;
            f_new = f_short;
            candidate.swap(shorter);
        }
        start = std::max(0, h - 1);

        ++steps;
        const double change = std::abs(f - f_new) / std::max(std::abs(f), 1e-12);
        w = std::move(candidate);
        f = f_new;
        if (change < 1e-6) break;
    }
    return steps;
}

/// Run the separation oracle for every query under W and average the
/// results into one constraint. Per-query work runs in parallel; the sum is
/// accumulated in query order.
inline Constraint most_violated_constraint(const MatrixXd& w, const QuerySet& qs, const std::vector<Index>& active,
                                           Loss loss) {
    const Eigen::Index d = qs.database.cols();
    std::vector<MatrixXd> gaps(active.size());
    std::vector<double> losses(active.size());
    parallel_for(active.size(), [&](Index i) {
        const Query& query = qs.queries[active[i]];
        const OracleResult r = separation_oracle(w, query.q, qs.database, query.positive, query.negative, loss);
        gaps[i] = psi_gap(qs.database, query.q, r.pos_order, r.neg_order, r.k);
        losses[i] = r.loss;
    });
    Constraint c{MatrixXd::Zero(d, d), 0.0};
    for (std::size_t i = 0; i < active.size(); ++i) {
        c.psi_diff += gaps[i];
        c.delta += losses[i];
    }
    const double n = static_cast<double>(active.size());
    c.psi_diff = symmetrize(c.psi_diff / n);
    c.delta /= n;
    return c;
}

inline TrainResult train(const QuerySet& qs, const TrainConfig& cfg, const ProjectionObserver& observer = {}) {
    require(cfg.C > 0.0, "C must be positive");
    require(cfg.epsilon > 0.0, "epsilon must be positive");
    require(cfg.max_outer >= 1 && cfg.max_inner >= 1, "iteration caps must be positive");
    require(cfg.eta0 > 0.0, "step size must be positive");
    require_data(qs.database.allFinite(), "non-finite database features");

    TrainResult result;
    std::vector<Index> active;
    for (Index i = 0; i < qs.queries.size(); ++i) {
        const Query& query = qs.queries[i];
        require_data(query.q.size() == qs.database.cols(), "query dimension differs from database");
        require_data(query.q.allFinite(), "non-finite query features");
        if (query.positive.empty() || query.negative.empty()) {
            ++result.dropped_queries;
            continue;
        }
        active.push_back(i);
    }
    require_data(!active.empty(), "no training query has both relevant and irrelevant items");

    const Eigen::Index d = qs.database.cols();
    result.w = MatrixXd::Zero(d, d);
    for (int outer = 1; outer <= cfg.max_outer; ++outer) {
        result.outer_iterations = outer;
        Constraint c = most_violated_constraint(result.w, qs, active, cfg.loss);
        const double violation = c.violation(result.w);
        if (violation <= result.slack + cfg.epsilon) {
            result.converged = true;
            break;
        }
        result.working_set.push_back(std::move(c));
        OuterRecord rec;
        rec.iteration = outer;
        rec.violation = violation;
        rec.inner_steps = solve_restricted(result.w, result.working_set, cfg, observer);
        result.slack = slack_of(result.w, result.working_set);
        rec.slack = result.slack;
        rec.objective = result.w.trace() + cfg.C * result.slack;
        result.trace.push_back(rec);
    }
    return result;
}

}  // namespace qbex::mlr
