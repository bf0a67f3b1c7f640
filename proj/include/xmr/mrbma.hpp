#ifndef XMR_MRBMA_HPP
#define XMR_MRBMA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "util.hpp"

namespace xmr {

/// Summary statistics for Bayesian model averaging over k exposures.
struct BmaInput {
    Eigen::MatrixXd beta_x; // n x k
    Eigen::VectorXd beta_y;
    Eigen::VectorXd se_y;
    std::vector<std::string> snps;
    std::vector<std::string> exposures;
    std::string outcome;

    void validate() const {
        const auto n = beta_x.rows();
        if (beta_y.size() != n || se_y.size() != n || static_cast<Eigen::Index>(snps.size()) != n ||
            static_cast<Eigen::Index>(exposures.size()) != beta_x.cols())
            throw Error(ErrorKind::DimensionMismatch, "beta_x is " + std::to_string(n) + "x" +
                                                          std::to_string(beta_x.cols()) + ", beta_y has " +
                                                          std::to_string(beta_y.size()) + ", se_y has " +
                                                          std::to_string(se_y.size()) + ", " +
                                                          std::to_string(snps.size()) + " SNPs and " +
                                                          std::to_string(exposures.size()) + " exposure names");
        for (Eigen::Index i = 0; i < n; ++i)
            if (!(se_y(i) > 0.0)) throw Error(ErrorKind::InvalidValue, "se_y of " + snps[static_cast<std::size_t>(i)] + " must be positive");
    }
};

struct WeightedDesign {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

/// Divides every row of beta_x and beta_y by the outcome standard error of
/// that SNP. With `weighted == false` the effects pass through unchanged.
inline WeightedDesign weight_input(const BmaInput &raw, bool weighted = true) {
    raw.validate();
    if (!weighted) return {raw.beta_x, raw.beta_y};
    const Eigen::VectorXd inv = raw.se_y.cwiseInverse();
    return {inv.asDiagonal() * raw.beta_x, raw.beta_y.cwiseProduct(inv)};
}

struct BmaParams {
    std::size_t kmin = 1;
    std::size_t kmax = 12;
    double prior_prob = 0.1;
    double prior_sigma = 0.5;
    std::size_t max_iter = 100000;
    std::uint64_t seed = 1;

    static constexpr std::size_t kRecommendedKmax = 12;

    /// Throws on invalid sizes or priors; returns advisory warnings.
    std::vector<std::string> validate(std::size_t k) const {
        if (kmin > kmax || kmax > k)
            throw Error(ErrorKind::InvalidSizes, "need kmin <= kmax <= k, got kmin = " + std::to_string(kmin) +
                                                     ", kmax = " + std::to_string(kmax) + ", k = " + std::to_string(k));
        if (!(prior_prob > 0.0 && prior_prob < 1.0)) throw Error(ErrorKind::InvalidConfig, "prior_prob must lie in (0, 1)");
        if (!(prior_sigma > 0.0)) throw Error(ErrorKind::InvalidConfig, "prior_sigma must be positive");
        std::vector<std::string> warnings;
        if (kmax > kRecommendedKmax)
            warnings.push_back("kmax = " + std::to_string(kmax) +
                               " exceeds the recommended maximum model size of 12; for computational feasibility set "
                               "kmax <= 12 and kmin < kmax to use the stochastic search");
        return warnings;
    }
};

/// Prior expected number of causal exposures, k * prior_prob.
inline double expected_model_size(std::size_t k, double prior_prob) { return static_cast<double>(k) * prior_prob; }

struct ModelScore {
    std::vector<std::size_t> members; // ascending exposure indices
    double log_ml = 0.0;
    double log_prior = 0.0;
    double posterior = 0.0;
    Eigen::VectorXd theta; // posterior-mean effects, aligned with members
    std::size_t visits = 0;
    double visit_frequency = 0.0;

    double log_score() const { return log_ml + log_prior; }
};

/// Closed-form conjugate scores on a weighted design. Cross-products are
/// formed once so each model costs O(|S|^3).
class ModelScorer {
public:
    ModelScorer(const Eigen::MatrixXd &x, const Eigen::VectorXd &y, double prior_prob, double prior_sigma)
        : xtx_(x.transpose() * x), xty_(x.transpose() * y), yty_(y.squaredNorm()), n_(static_cast<double>(x.rows())),
          k_(static_cast<std::size_t>(x.cols())), log_p_(std::log(prior_prob)), log_q_(std::log1p(-prior_prob)),
          sigma2_(prior_sigma * prior_sigma) {
        if (y.size() != x.rows()) throw Error(ErrorKind::DimensionMismatch, "X and y row counts differ");
    }

    std::size_t k() const { return k_; }

    /// log N(y; 0, I + sigma^2 X_S X_S') with the Woodbury and determinant
    /// identities, plus the Bernoulli model prior and posterior mean
    /// theta = (X_S'X_S + sigma^-2 I)^-1 X_S'y.
    ModelScore score(const std::vector<std::size_t> &members) const {
        static const double log_2pi = std::log(2.0 * std::numbers::pi);
        const auto ks = static_cast<Eigen::Index>(members.size());
        ModelScore s;
        s.members = members;
        s.log_prior = static_cast<double>(ks) * log_p_ + static_cast<double>(k_ - members.size()) * log_q_;
        if (ks == 0) {
            s.log_ml = -0.5 * (n_ * log_2pi + yty_);
            s.theta.resize(0);
            return s;
        }
        Eigen::MatrixXd m(ks, ks);
        Eigen::VectorXd b(ks);
        for (Eigen::Index a = 0; a < ks; ++a) {
            b(a) = xty_(static_cast<Eigen::Index>(members[static_cast<std::size_t>(a)]));
            for (Eigen::Index c = 0; c < ks; ++c)
                m(a, c) = xtx_(static_cast<Eigen::Index>(members[static_cast<std::size_t>(a)]),
                               static_cast<Eigen::Index>(members[static_cast<std::size_t>(c)]));
            m(a, a) += 1.0 / sigma2_;
        }
        Eigen::LLT<Eigen::MatrixXd> llt(m);
        if (llt.info() != Eigen::Success) throw Error(ErrorKind::NumericalOverflow, "posterior precision is not positive definite");
        s.theta = llt.solve(b);
        // logdet(I + sigma^2 X'X) = ks log sigma^2 + logdet(X'X + sigma^-2 I)
        const double logdet = static_cast<double>(ks) * std::log(sigma2_) +
                              2.0 * llt.matrixLLT().diagonal().array().log().sum();
        const double quad = yty_ - b.dot(s.theta);
        s.log_ml = -0.5 * (n_ * log_2pi + logdet + quad);
        if (!std::isfinite(s.log_ml)) throw Error(ErrorKind::NumericalOverflow, "non-finite marginal likelihood");
        return s;
    }

private:
    Eigen::MatrixXd xtx_;
    Eigen::VectorXd xty_;
    double yty_;
    double n_;
    std::size_t k_;
    double log_p_, log_q_;
    double sigma2_;
};

inline ModelScore score_model(const Eigen::MatrixXd &x, const Eigen::VectorXd &y, const std::vector<std::size_t> &members,
                              const BmaParams &params) {
    std::vector<std::size_t> sorted = members;
    std::sort(sorted.begin(), sorted.end());
    return ModelScorer(x, y, params.prior_prob, params.prior_sigma).score(sorted);
}

struct BmaReport {
    std::vector<ModelScore> top_models; // every scored model, posterior descending
    Eigen::VectorXd mip;
    Eigen::VectorXd mace;
    bool exhaustive = false;
    std::size_t iterations = 0;
    std::size_t score_evaluations = 0;
    std::size_t cache_hits = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline void finalize_report(BmaReport &rep, std::size_t k) {
    auto &models = rep.top_models;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto &m : models) best = std::max(best, m.log_score());
    double total = 0.0;
    for (const auto &m : models) total += std::exp(m.log_score() - best);
    const double lse = best + std::log(total);
    std::size_t visits = 0;
    for (const auto &m : models) visits += m.visits;
    for (auto &m : models) {
        m.posterior = std::exp(m.log_score() - lse);
        m.visit_frequency = visits ? static_cast<double>(m.visits) / static_cast<double>(visits) : 0.0;
    }
    std::stable_sort(models.begin(), models.end(), [](const ModelScore &a, const ModelScore &b) {
        if (a.posterior != b.posterior) return a.posterior > b.posterior;
        return a.members < b.members;
    });
    rep.mip = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    rep.mace = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    for (const auto &m : models)
        for (std::size_t a = 0; a < m.members.size(); ++a) {
            const auto i = static_cast<Eigen::Index>(m.members[a]);
            rep.mip(i) += m.posterior;
            rep.mace(i) += m.posterior * m.theta(static_cast<Eigen::Index>(a));
        }
}

inline void for_each_subset(std::size_t k, std::size_t size, const std::function<void(const std::vector<std::size_t> &)> &fn) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (;;) {
        fn(idx);
        std::size_t i = size;
        while (i > 0 && idx[i - 1] == k - size + i - 1) --i;
        if (i == 0) return;
        ++idx[i - 1];
        for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
}

// Subset keys: a single word while k <= 64, a word vector beyond that.
struct WordKey {
    using type = std::uint64_t;
    static type make(std::size_t) { return 0; }
    static void flip(type &key, std::size_t i) { key ^= (std::uint64_t{1} << i); }
    struct hash {
        std::size_t operator()(type v) const noexcept { return static_cast<std::size_t>(v * 0x9E3779B97F4A7C15ULL); }
    };
};

struct VectorKey {
    using type = std::vector<std::uint64_t>;
    static type make(std::size_t k) { return type((k + 63) / 64, 0); }
    static void flip(type &key, std::size_t i) { key[i / 64] ^= (std::uint64_t{1} << (i % 64)); }
    struct hash {
        std::size_t operator()(const type &v) const noexcept {
            std::uint64_t h = 1469598103934665603ULL;
            for (auto w : v) h = (h ^ w) * 1099511628211ULL;
            return static_cast<std::size_t>(h);
        }
    };
};

template <typename Key>
BmaReport shotgun_search(const ModelScorer &scorer, const BmaParams &params) {
    using K = typename Key::type;
    const std::size_t k = scorer.k();
    std::unordered_map<K, std::size_t, typename Key::hash> cache;
    BmaReport rep;
    rep.seed = params.seed;
    auto &models = rep.top_models;

    auto lookup = [&](const K &key, const std::vector<std::size_t> &members) {
        auto it = cache.find(key);
        if (it != cache.end()) {
            ++rep.cache_hits;
            return it->second;
        }
        models.push_back(scorer.score(members));
        ++rep.score_evaluations;
        cache.emplace(key, models.size() - 1);
        return models.size() - 1;
    };

    std::mt19937_64 rng(params.seed);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> current(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(params.kmin));
    std::sort(current.begin(), current.end());
    K key = Key::make(k);
    for (auto i : current) Key::flip(key, i);
    std::size_t cur = lookup(key, current);
    ++models[cur].visits;

    struct Move {
        std::size_t model;
        K key;
    };
    std::vector<Move> moves;
    std::vector<double> w;
    std::vector<char> in(k, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::size_t> members;

    for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
        moves.clear();
        std::fill(in.begin(), in.end(), 0);
        for (auto i : current) in[i] = 1;
        const std::size_t size = current.size();

        auto propose = [&](K nk, std::size_t drop, std::size_t add) {
            members.clear();
            for (auto i : current)
                if (i != drop) members.push_back(i);
            if (add < k) members.insert(std::upper_bound(members.begin(), members.end(), add), add);
            const auto idx = lookup(nk, members);
            moves.push_back({idx, std::move(nk)});
        };
        constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
        if (size < params.kmax)
            for (std::size_t j = 0; j < k; ++j)
                if (!in[j]) {
                    K nk = key;
                    Key::flip(nk, j);
                    propose(std::move(nk), none, j);
                }
        if (size > params.kmin)
            for (auto i : current) {
                K nk = key;
                Key::flip(nk, i);
                propose(std::move(nk), i, none);
            }
        for (auto i : current)
            for (std::size_t j = 0; j < k; ++j)
                if (!in[j]) {
                    K nk = key;
                    Key::flip(nk, i);
                    Key::flip(nk, j);
                    propose(std::move(nk), i, j);
                }
        if (moves.empty()) break;

        double best = -std::numeric_limits<double>::infinity();
        for (const auto &mv : moves) best = std::max(best, models[mv.model].log_score());
        w.resize(moves.size());
        double total = 0.0;
        for (std::size_t a = 0; a < moves.size(); ++a) total += (w[a] = std::exp(models[moves[a].model].log_score() - best));
        double u = unif(rng) * total;
        std::size_t pick = moves.size() - 1;
        for (std::size_t a = 0; a < moves.size(); ++a) {
            u -= w[a];
            if (u < 0.0) {
                pick = a;
                break;
            }
        }
        cur = moves[pick].model;
        key = std::move(moves[pick].key);
        current = models[cur].members;
        ++models[cur].visits;
        ++rep.iterations;
    }
    finalize_report(rep, k);
    return rep;
}

} // namespace detail

/// Scores every subset with kmin <= |S| <= kmax. Deterministic.
inline BmaReport exhaustive_search(const Eigen::MatrixXd &x, const Eigen::VectorXd &y, const BmaParams &params) {
    const auto k = static_cast<std::size_t>(x.cols());
    params.validate(k);
    const ModelScorer scorer(x, y, params.prior_prob, params.prior_sigma);
    BmaReport rep;
    rep.exhaustive = true;
    rep.seed = params.seed;
    for (std::size_t size = params.kmin; size <= params.kmax; ++size)
        detail::for_each_subset(k, size, [&](const std::vector<std::size_t> &s) {
            rep.top_models.push_back(scorer.score(s));
            ++rep.score_evaluations;
        });
    detail::finalize_report(rep, k);
    return rep;
}

/// kmin == kmax enumerates all subsets of that size; otherwise a shotgun
/// stochastic search over add/delete/swap neighbourhoods, with posteriors
/// normalized over the models it visited.
inline BmaReport search(const Eigen::MatrixXd &x, const Eigen::VectorXd &y, const BmaParams &params) {
    const auto k = static_cast<std::size_t>(x.cols());
    params.validate(k);
    if (params.kmin == params.kmax) return exhaustive_search(x, y, params);
    const ModelScorer scorer(x, y, params.prior_prob, params.prior_sigma);
    if (k <= 64) return detail::shotgun_search<detail::WordKey>(scorer, params);
    return detail::shotgun_search<detail::VectorKey>(scorer, params);
}

struct BestModels {
    std::vector<ModelScore> models;
    Eigen::VectorXd mip;
    Eigen::VectorXd mace;
};

inline BestModels report_best_models(const BmaReport &report, std::size_t top) {
    BestModels out;
    const std::size_t n = std::min(std::max<std::size_t>(top, 1), report.top_models.size());
    out.models.assign(report.top_models.begin(), report.top_models.begin() + static_cast<std::ptrdiff_t>(n));
    out.mip = report.mip;
    out.mace = report.mace;
    return out;
}

inline std::string format_models(const BestModels &best, const std::vector<std::string> &exposures) {
    std::string out = "rank\tmembers\tposterior\tlog_ml\tlog_prior\ttheta\n";
    for (std::size_t r = 0; r < best.models.size(); ++r) {
        const auto &m = best.models[r];
        std::string names, theta;
        for (std::size_t a = 0; a < m.members.size(); ++a) {
            if (a) {
                names += ',';
                theta += ',';
            }
            names += exposures[m.members[a]];
            theta += format_num(m.theta(static_cast<Eigen::Index>(a)));
        }
        if (m.members.empty()) names = theta = "-";
        out += std::to_string(r + 1) + "\t" + names + "\t" + format_num(m.posterior) + "\t" + format_num(m.log_ml) +
               "\t" + format_num(m.log_prior) + "\t" + theta + "\n";
    }
    return out;
}

inline std::string format_mip(const BestModels &best, const std::vector<std::string> &exposures) {
    std::string out = "exposure\tmip\tmace\n";
    for (std::size_t i = 0; i < exposures.size(); ++i)
        out += exposures[i] + "\t" + format_num(best.mip(static_cast<Eigen::Index>(i))) + "\t" +
               format_num(best.mace(static_cast<Eigen::Index>(i))) + "\n";
    return out;
}

} // namespace xmr

#endif // XMR_MRBMA_HPP
