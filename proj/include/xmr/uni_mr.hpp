#ifndef XMR_UNI_MR_HPP
#define XMR_UNI_MR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "sumstats.hpp"
#include "util.hpp"

namespace xmr {

enum class MrMethod { wald_ratio, ivw, egger_slope, egger_intercept, weighted_median };

inline const char *to_string(MrMethod m) {
    switch (m) {
    case MrMethod::wald_ratio: return "wald_ratio";
    case MrMethod::ivw: return "ivw";
    case MrMethod::egger_slope: return "egger_slope";
    case MrMethod::egger_intercept: return "egger_intercept";
    case MrMethod::weighted_median: return "weighted_median";
    }
    return "?";
}

struct MrEstimate {
    MrMethod method = MrMethod::ivw;
    double estimate = 0.0;
    double se = 0.0;
    double pvalue = 1.0;
    std::size_t n_snps = 0;
};

inline MrEstimate make_estimate(MrMethod method, double estimate, double se, std::size_t n_snps) {
    if (!std::isfinite(estimate) || !std::isfinite(se))
        throw Error(ErrorKind::NumericalOverflow, std::string(to_string(method)) + " produced a non-finite result");
    return {method, estimate, se, se > 0.0 ? two_sided_p(estimate / se) : (estimate == 0.0 ? 1.0 : 0.0), n_snps};
}

enum class WaldSe {
    first_order,  // se_Y / |beta_X|
    second_order, // adds the exposure-side sampling error
};

inline MrEstimate wald_ratio(const HarmonizedPair &pair, WaldSe se_order = WaldSe::first_order) {
    const double bx = pair.beta_exposure;
    if (bx == 0.0) throw Error(ErrorKind::ZeroExposureEffect, pair.rsid + " has a zero exposure effect");
    const double est = pair.beta_outcome / bx;
    double se = std::fabs(pair.se_outcome / bx);
    if (se_order == WaldSe::second_order) {
        const double by = pair.beta_outcome;
        se = std::sqrt(pair.se_outcome * pair.se_outcome / (bx * bx) +
                       by * by * pair.se_exposure * pair.se_exposure / (bx * bx * bx * bx));
    }
    return make_estimate(MrMethod::wald_ratio, est, se, 1);
}

enum class IvwModel {
    fixed,                  // se = (sum w bx^2)^-1/2
    multiplicative_random,  // fixed-effect se scaled by max(1, sqrt(Q / (n - 1)))
};

/// Fixed-effect IVW: weighted regression of beta_Y on beta_X through the origin
/// with weights 1/se_Y^2.
inline MrEstimate ivw(const std::vector<HarmonizedPair> &pairs, IvwModel model = IvwModel::fixed) {
    if (pairs.empty()) throw Error(ErrorKind::EmptyInstrumentSet, "IVW needs at least one instrument");
    if (pairs.size() == 1) {
        auto w = wald_ratio(pairs.front());
        w.method = MrMethod::ivw;
        return w;
    }
    double sxy = 0.0, sxx = 0.0;
    for (const auto &p : pairs) {
        if (!(p.se_outcome > 0.0)) throw Error(ErrorKind::InvalidValue, p.rsid + ": outcome se must be positive");
        const double w = 1.0 / (p.se_outcome * p.se_outcome);
        sxy += w * p.beta_exposure * p.beta_outcome;
        sxx += w * p.beta_exposure * p.beta_exposure;
    }
    if (!(sxx > 0.0)) throw Error(ErrorKind::ZeroExposureEffect, "all exposure effects are zero");
    const double est = sxy / sxx;
    double se = 1.0 / std::sqrt(sxx);
    if (model == IvwModel::multiplicative_random && pairs.size() > 1) {
        double q = 0.0;
        for (const auto &p : pairs) {
            const double r = (p.beta_outcome - est * p.beta_exposure) / p.se_outcome;
            q += r * r;
        }
        se *= std::max(1.0, std::sqrt(q / static_cast<double>(pairs.size() - 1)));
    }
    return make_estimate(MrMethod::ivw, est, se, pairs.size());
}

struct EggerResult {
    MrEstimate slope;
    MrEstimate intercept;
    double residual_scale = 1.0; // max(1, residual standard error)
};

/// MR-Egger: weighted regression with intercept after orienting every SNP so
/// its exposure effect is non-negative.
inline EggerResult egger(const std::vector<HarmonizedPair> &pairs) {
    const std::size_t n = pairs.size();
    if (n < 3)
        throw Error(ErrorKind::TooFewInstruments,
                    "MR-Egger needs at least 3 instruments, got " + std::to_string(n));
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n), w(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto &p = pairs[j];
        const double s = p.beta_exposure < 0.0 ? -1.0 : 1.0;
        const auto i = static_cast<Eigen::Index>(j);
        x(i, 0) = 1.0;
        x(i, 1) = s * p.beta_exposure;
        y(i) = s * p.beta_outcome;
        w(i) = 1.0 / (p.se_outcome * p.se_outcome);
    }
    const double first = x(0, 1);
    if (std::all_of(x.col(1).begin(), x.col(1).end(), [&](double v) { return v == first; }))
        throw Error(ErrorKind::DegenerateDesign, "all oriented exposure effects are equal");

    const Eigen::Matrix2d xtwx = x.transpose() * w.asDiagonal() * x;
    const Eigen::Vector2d xtwy = x.transpose() * w.asDiagonal() * y;
    const Eigen::Matrix2d inv = xtwx.inverse();
    const Eigen::Vector2d coef = inv * xtwy;
    const Eigen::VectorXd resid = y - x * coef;
    const double rss = (w.array() * resid.array().square()).sum();
    const double sigma = std::sqrt(rss / static_cast<double>(n - 2));
    const double scale = std::max(1.0, sigma);

    EggerResult out;
    out.residual_scale = scale;
    out.intercept = make_estimate(MrMethod::egger_intercept, coef(0), std::sqrt(inv(0, 0)) * scale, n);
    out.slope = make_estimate(MrMethod::egger_slope, coef(1), std::sqrt(inv(1, 1)) * scale, n);
    return out;
}

/// Weighted median of `ratios` with (unnormalized) `weights`: the ratio at the
/// 50% point of the cumulative-weight percentiles sum_{i<=j} w_i - w_j / 2,
/// linearly interpolated between neighbours.
inline double weighted_median_point(std::vector<double> ratios, std::vector<double> weights) {
    const std::size_t n = ratios.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ratios[a] < ratios[b]; });
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<double> theta(n), pct(n);
    double cum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double wj = weights[order[j]] / total;
        cum += wj;
        theta[j] = ratios[order[j]];
        pct[j] = cum - 0.5 * wj;
    }
    // last position whose percentile is below one half
    std::size_t below = n;
    for (std::size_t j = 0; j < n; ++j)
        if (pct[j] < 0.5) below = j;
    if (below == n) return theta.front();
    if (below + 1 == n) return theta.back();
    return theta[below] + (theta[below + 1] - theta[below]) * (0.5 - pct[below]) / (pct[below + 1] - pct[below]);
}

struct WeightedMedianOptions {
    std::size_t n_boot = 1000;
    std::uint64_t seed = 1;
};

/// Weighted median estimator with ratio weights bx^2 / se_Y^2. The standard
/// error is the standard deviation over a parametric bootstrap that redraws
/// both effects from their normal sampling distributions, keeping the weights fixed.
inline MrEstimate weighted_median(const std::vector<HarmonizedPair> &pairs, const WeightedMedianOptions &opt = {}) {
    const std::size_t n = pairs.size();
    if (n < 3)
        throw Error(ErrorKind::TooFewInstruments,
                    "weighted median needs at least 3 instruments, got " + std::to_string(n));
    std::vector<double> ratio(n), weight(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto &p = pairs[j];
        if (p.beta_exposure == 0.0) throw Error(ErrorKind::ZeroExposureEffect, p.rsid + " has a zero exposure effect");
        ratio[j] = p.beta_outcome / p.beta_exposure;
        const double se_ratio = p.se_outcome / std::fabs(p.beta_exposure);
        weight[j] = 1.0 / (se_ratio * se_ratio);
    }
    const double est = weighted_median_point(ratio, weight);

    double se = 0.0;
    if (opt.n_boot > 1) {
        // One stream per SNP keyed by rsid, and noise oriented by the sign of
        // beta_X, so the bootstrap is invariant to SNP order and allele coding.
        std::vector<std::mt19937_64> rngs;
        std::vector<std::normal_distribution<double>> dists(n, std::normal_distribution<double>(0.0, 1.0));
        rngs.reserve(n);
        for (const auto &p : pairs) rngs.emplace_back(derive_seed(opt.seed, p.rsid));
        std::vector<double> boot(opt.n_boot), r(n);
        for (std::size_t b = 0; b < opt.n_boot; ++b) {
            for (std::size_t j = 0; j < n; ++j) {
                const auto &p = pairs[j];
                const double s = p.beta_exposure < 0.0 ? -1.0 : 1.0;
                const double bx = p.beta_exposure + s * p.se_exposure * dists[j](rngs[j]);
                const double by = p.beta_outcome + s * p.se_outcome * dists[j](rngs[j]);
                r[j] = by / bx;
            }
            boot[b] = weighted_median_point(r, weight);
        }
        const double mean = std::accumulate(boot.begin(), boot.end(), 0.0) / static_cast<double>(opt.n_boot);
        double ss = 0.0;
        for (double v : boot) ss += (v - mean) * (v - mean);
        se = std::sqrt(ss / static_cast<double>(opt.n_boot - 1));
    }
    return make_estimate(MrMethod::weighted_median, est, se, n);
}

} // namespace xmr

#endif // XMR_UNI_MR_HPP
