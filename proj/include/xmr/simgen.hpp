#ifndef XMR_SIMGEN_HPP
#define XMR_SIMGEN_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "ld.hpp"
#include "sumstats.hpp"
#include "util.hpp"

namespace xmr {

struct SimSpec {
    std::size_t n_snps = 50;
    std::size_t k_exposures = 3;
    std::vector<double> true_alpha{0.2, -0.1, 0.0};
    double ld_rho = 0.3;
    double n_gwas = 1e5;
    double n_qtl = 1e5;
    double pleiotropy_sd = 0.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_snps < 1 || k_exposures < 1) throw Error(ErrorKind::InvalidConfig, "need at least one SNP and one exposure");
        if (true_alpha.size() != k_exposures)
            throw Error(ErrorKind::InvalidConfig, "true_alpha must have one entry per exposure");
        if (!(std::fabs(ld_rho) < 1.0)) throw Error(ErrorKind::InvalidConfig, "ld_rho must satisfy |ld_rho| < 1");
        if (!(n_gwas > 0.0) || !(n_qtl > 0.0)) throw Error(ErrorKind::InvalidConfig, "sample sizes must be positive");
        if (!(pleiotropy_sd >= 0.0)) throw Error(ErrorKind::InvalidConfig, "pleiotropy_sd must be non-negative");
    }
};

struct SimData {
    EffectMatrix effects;
    LdMatrix ld;
    std::vector<AssocTable> exposures;
    AssocTable outcome;
    Eigen::MatrixXd true_effects; // n x k, before sampling noise
    Eigen::VectorXd pleiotropy;   // direct SNP -> outcome effects
};

/// AR(1) correlation matrix, entries rho^|i-j|.
inline Eigen::MatrixXd ar1_matrix(std::size_t n, double rho) {
    Eigen::MatrixXd c(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                i == j ? 1.0 : std::pow(rho, static_cast<double>(i > j ? i - j : j - i));
    return c;
}

inline std::string sim_snp_name(std::size_t i) { return "rs" + std::to_string(i + 1); }
inline std::string sim_gene_name(std::size_t m) { return "gene" + std::to_string(m + 1); }

/// Draws summary statistics with known causal effects:
/// E = E_true + N(0, C/n_qtl) per column, gamma = E_true alpha + pleiotropy + N(0, C/n_gwas),
/// with E_true ~ N(0, 1) and C the AR(1) LD matrix.
inline SimData generate(const SimSpec &spec) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.n_snps), k = static_cast<Eigen::Index>(spec.k_exposures);
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> z(0.0, 1.0);
    auto draw = [&](Eigen::Index len) {
        Eigen::VectorXd v(len);
        for (Eigen::Index i = 0; i < len; ++i) v(i) = z(rng);
        return v;
    };

    const Eigen::MatrixXd c = ar1_matrix(spec.n_snps, spec.ld_rho);
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(c).matrixL();

    SimData d;
    d.true_effects.resize(n, k);
    for (Eigen::Index m = 0; m < k; ++m) d.true_effects.col(m) = draw(n);
    Eigen::MatrixXd e_obs(n, k);
    for (Eigen::Index m = 0; m < k; ++m) e_obs.col(m) = d.true_effects.col(m) + l * draw(n) / std::sqrt(spec.n_qtl);
    const Eigen::VectorXd alpha = Eigen::Map<const Eigen::VectorXd>(spec.true_alpha.data(), k);
    d.pleiotropy = spec.pleiotropy_sd > 0.0 ? Eigen::VectorXd(draw(n) * spec.pleiotropy_sd) : Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd gamma = d.true_effects * alpha + d.pleiotropy + l * draw(n) / std::sqrt(spec.n_gwas);

    std::vector<std::string> snps, genes;
    for (std::size_t i = 0; i < spec.n_snps; ++i) snps.push_back(sim_snp_name(i));
    for (std::size_t m = 0; m < spec.k_exposures; ++m) genes.push_back(sim_gene_name(m));

    auto table = [&](const std::string &name, TraitKind kind, const Eigen::VectorXd &beta, double sample_size) {
        const double se = 1.0 / std::sqrt(sample_size);
        std::vector<SnpRecord> recs;
        recs.reserve(spec.n_snps);
        for (std::size_t i = 0; i < spec.n_snps; ++i) {
            SnpRecord r;
            r.rsid = snps[i];
            r.chrom = "1";
            r.pos = static_cast<std::int64_t>(1000 * (i + 1));
            r.effect_allele = "A";
            r.other_allele = "G";
            r.beta = beta(static_cast<Eigen::Index>(i));
            r.se = se;
            r.pvalue = two_sided_p(r.beta / se);
            r.n = sample_size;
            recs.push_back(std::move(r));
        }
        return AssocTable(name, kind, std::move(recs));
    };
    for (Eigen::Index m = 0; m < k; ++m)
        d.exposures.push_back(table(genes[static_cast<std::size_t>(m)], TraitKind::eqtl, e_obs.col(m), spec.n_qtl));
    d.outcome = table("outcome", TraitKind::gwas_outcome, gamma, spec.n_gwas);
    d.ld = LdMatrix(snps, c);
    d.effects = EffectMatrix(std::move(snps), std::move(genes), std::move(e_obs), gamma);
    return d;
}

/// Writes stem.matrix, stem.ld and stem.truth (gene, true alpha).
inline void write_sim_files(const std::string &stem, const SimData &d, const SimSpec &spec) {
    write_matrix_file(stem + ".matrix", d.effects);
    write_ld_file(stem + ".ld", d.ld);
    std::string truth = "gene\talpha\n";
    for (std::size_t m = 0; m < spec.k_exposures; ++m) truth += d.effects.traits[m] + "\t" + format_num(spec.true_alpha[m]) + "\n";
    write_text_file(stem + ".truth", truth);
}

} // namespace xmr

#endif // XMR_SIMGEN_HPP
