#pragma once

// Diagonal-covariance Gaussian mixtures per song, compared by Monte-Carlo
// cross-entropy.

#include "qbex/common.hpp"
#include "qbex/parallel.hpp"
#include "qbex/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace qbex::gmm {

constexpr double kVarianceFloor = 1e-6;
constexpr double kLogDensityFloor = -745.0;

struct GMMModel {
    VectorXd weights;    // K, on the simplex
    MatrixXd means;      // K x D
    MatrixXd variances;  // K x D, each >= kVarianceFloor

    Index components() const { return static_cast<Index>(weights.size()); }
    Index dim() const { return static_cast<Index>(means.cols()); }
};

struct FitOptions {
    Index components = 8;
    int max_iterations = 200;
    double tolerance = 1e-6;  // relative log-likelihood change
    std::uint64_t seed = 0;
};

struct FitResult {
    GMMModel model;
    std::vector<double> log_likelihood;  // one entry per E-step
    bool single_component_fallback = false;
};

namespace detail {

constexpr double kLog2Pi = 1.8378770664093453;

/// log(w_k) + log N(z; mu_k, diag(var_k)) for every component.
inline VectorXd component_log_terms(const GMMModel& m, const Eigen::RowVectorXd& z) {
    const MatrixXd diff = m.means.rowwise() - z;
    const VectorXd quad = (diff.array().square() / m.variances.array()).rowwise().sum();
    const VectorXd logdet = m.variances.array().log().rowwise().sum();
    const double dterm = static_cast<double>(m.dim()) * kLog2Pi;
    return m.weights.array().log() - 0.5 * (dterm + logdet.array() + quad.array());
}

inline double log_sum_exp(const VectorXd& v) {
    const double top = v.maxCoeff();
    if (!std::isfinite(top)) return top;
    return top + std::log((v.array() - top).exp().sum());
}

}  // namespace detail

/// log p(z); may be -inf for points far outside every component.
inline double log_density(const GMMModel& m, const Eigen::RowVectorXd& z) {
    return detail::log_sum_exp(detail::component_log_terms(m, z));
}

inline double log_likelihood(const GMMModel& m, const MatrixXd& x) {
    double total = 0.0;
    for (Eigen::Index t = 0; t < x.rows(); ++t) total += log_density(m, x.row(t));
    return total;
}

/// k-means++ seeding: first center uniform, later ones drawn with probability
/// proportional to squared distance from the nearest chosen center.
inline MatrixXd kmeanspp_seeds(const MatrixXd& x, Index k, Rng& rng) {
    const Eigen::Index n = x.rows();
    MatrixXd centers(static_cast<Eigen::Index>(k), x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
    VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (Index c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            const double target = uniform01(rng) * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc > target && d2(i) > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
        }
        centers.row(static_cast<Eigen::Index>(c)) = x.row(pick);
        d2 = d2.cwiseMin((x.rowwise() - centers.row(static_cast<Eigen::Index>(c))).rowwise().squaredNorm());
    }
    return centers;
}

/// EM fit of a diagonal-covariance mixture. Initialization: k-means++ means,
/// uniform weights, the data's per-dimension variance for every component.
/// Runs until the relative log-likelihood change is below the tolerance or
/// the iteration cap is reached. If every frame is identical the result is a
/// single component at that frame with floor variance.
inline FitResult fit_gmm(const MatrixXd& x, const FitOptions& opts = {}) {
    require(opts.components >= 1, "GMM needs at least one component");
    require_data(static_cast<Index>(x.rows()) >= opts.components, "fewer frames than mixture components");
    require_data(x.allFinite(), "non-finite GMM training data");
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();

    FitResult result;
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::RowVectorXd spread = (x.rowwise() - mean).array().square().colwise().mean();
    if (((x.rowwise() - x.row(0)).array() == 0.0).all()) {
        result.single_component_fallback = true;
        result.model.weights = VectorXd::Ones(1);
        result.model.means = x.row(0);
        result.model.variances = MatrixXd::Constant(1, d, kVarianceFloor);
        result.log_likelihood.push_back(log_likelihood(result.model, x));
        return result;
    }

    const auto k = static_cast<Eigen::Index>(opts.components);
    Rng rng = substream(opts.seed, "gmm.init");
    GMMModel& m = result.model;
    m.means = kmeanspp_seeds(x, opts.components, rng);
    m.weights = VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    m.variances = spread.cwiseMax(kVarianceFloor).replicate(k, 1);

    MatrixXd resp(n, k);
    double previous = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        // E-step
        double ll = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            const VectorXd terms = detail::component_log_terms(m, x.row(t));
            const double lse = detail::log_sum_exp(terms);
            ll += lse;
            resp.row(t) = (terms.array() - lse).exp().transpose();
        }
        result.log_likelihood.push_back(ll);
        if (iter > 0 && std::abs(ll - previous) <= opts.tolerance * std::abs(previous)) break;
        previous = ll;

        // M-step
        const VectorXd mass = resp.colwise().sum().transpose();
        for (Eigen::Index c = 0; c < k; ++c) {
            if (!(mass(c) > 1e-12)) continue;  // empty component keeps its parameters
            const Eigen::RowVectorXd mu = (resp.col(c).transpose() * x) / mass(c);
            const Eigen::RowVectorXd var =
                (resp.col(c).transpose() * (x.rowwise() - mu).array().square().matrix()) / mass(c);
            m.means.row(c) = mu;
            m.variances.row(c) = var.cwiseMax(kVarianceFloor);
        }
        m.weights = mass / mass.sum();
    }
    return result;
}

/// Draw m points from the mixture, one row each.
inline MatrixXd sample(const GMMModel& model, Index m, Rng& rng) {
    std::vector<double> cumulative(model.components());
    std::partial_sum(model.weights.data(), model.weights.data() + model.weights.size(), cumulative.begin());
    MatrixXd z(static_cast<Eigen::Index>(m), model.means.cols());
    for (Index i = 0; i < m; ++i) {
        const double u = uniform01(rng) * cumulative.back();
        const auto c = static_cast<Eigen::Index>(
            std::min<std::ptrdiff_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin(),
                                     static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
        for (Eigen::Index j = 0; j < z.cols(); ++j)
            z(static_cast<Eigen::Index>(i), j) = model.means(c, j) + std::sqrt(model.variances(c, j)) * standard_normal(rng);
    }
    return z;
}

/// (1/m) sum_i -log p_x(z_i) with log-densities floored at -745.
inline double cross_entropy_on_sample(const GMMModel& p_x, const MatrixXd& z) {
    require_data(z.rows() > 0, "empty Monte-Carlo sample");
    require_data(z.cols() == static_cast<Eigen::Index>(p_x.dim()), "sample and model dimensions differ");
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) total -= std::max(log_density(p_x, z.row(i)), kLogDensityFloor);
    return total / static_cast<double>(z.rows());
}

/// (1/m) sum_i log(p_q(z_i) / p_x(z_i)), same floor.
inline double kl_on_sample(const GMMModel& p_q, const GMMModel& p_x, const MatrixXd& z) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        total += std::max(log_density(p_q, z.row(i)), kLogDensityFloor) -
                 std::max(log_density(p_x, z.row(i)), kLogDensityFloor);
    return total / static_cast<double>(z.rows());
}

inline MatrixXd query_sample(const GMMModel& p_q, Index m, std::uint64_t seed) {
    require(m >= 1, "Monte-Carlo sample size must be >= 1");
    Rng rng = substream(seed, "gmm.sample");
    return sample(p_q, m, rng);
}

inline double mc_cross_entropy(const GMMModel& p_q, const GMMModel& p_x, Index m, std::uint64_t seed) {
    return cross_entropy_on_sample(p_x, query_sample(p_q, m, seed));
}

struct GmmRanking {
    IndexList order;
    std::vector<double> cross_entropy;  // per database entry, input order
};

/// Database models by increasing cross-entropy from the query model, using
/// one shared sample from the query for every entry. Ties by index.
inline GmmRanking rank_by_gmm(const GMMModel& p_q, const std::vector<GMMModel>& database, Index m,
                              std::uint64_t seed) {
    const MatrixXd z = query_sample(p_q, m, seed);
    GmmRanking out;
    out.cross_entropy.resize(database.size());
    parallel_for(database.size(), [&](Index i) { out.cross_entropy[i] = cross_entropy_on_sample(database[i], z); });
    out.order.resize(database.size());
    std::iota(out.order.begin(), out.order.end(), Index{0});
    std::stable_sort(out.order.begin(), out.order.end(),
                     [&](Index a, Index b) { return out.cross_entropy[a] < out.cross_entropy[b]; });
    return out;
}

}  // namespace qbex::gmm
