#ifndef XMR_TWMR_HPP
#define XMR_TWMR_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "ld.hpp"
#include "sumstats.hpp"
#include "util.hpp"

namespace xmr {

struct TwmrInput {
    EffectMatrix effects;
    LdMatrix ld;
    double n_gwas = 0.0;
    double n_qtl = 0.0;

    void validate() const {
        if (effects.snps != ld.snps())
            throw Error(ErrorKind::DimensionMismatch, "effect matrix has " + std::to_string(effects.n()) +
                                                          " SNPs, LD matrix has " + std::to_string(ld.size()) +
                                                          " (or a different SNP order)");
        if (!(n_gwas > 0.0) || !(n_qtl > 0.0))
            throw Error(ErrorKind::InvalidConfig, "GWAS and eQTL sample sizes must be positive");
    }
};

/// One row of a `.alpha` file.
struct TwmrResult {
    std::string gene;
    double alpha = 0.0;
    double se = 0.0;
    double p = 1.0;
    std::size_t nsnps = 0;
    std::size_t ngene = 0;
};

struct TwmrFit {
    std::vector<TwmrResult> results;
    Eigen::VectorXd alpha;
    Eigen::MatrixXd cov;
    double ld_ridge = 0.0;        // lambda added to the LD diagonal, 0 when none
    double condition_number = 0.0; // of E' C^-1 E
};

struct TwmrOptions {
    double ridge_trigger = 1e-8;  // smallest LD eigenvalue below which the ridge is added
    double ridge = 1e-6;
    double max_condition = 1e12;
};

namespace detail {

struct GlsParts {
    Eigen::MatrixXd c;        // possibly ridged LD
    Eigen::LLT<Eigen::MatrixXd> c_llt;
    Eigen::MatrixXd cinv_e;   // C^-1 E
    Eigen::MatrixXd a_inv;    // (E' C^-1 E)^-1
    Eigen::VectorXd alpha;
    Eigen::VectorXd cinv_resid; // C^-1 (gamma - E alpha)
    double ridge = 0.0;
    double condition = 0.0;
};

inline GlsParts gls(const Eigen::MatrixXd &e, const Eigen::VectorXd &gamma, const Eigen::MatrixXd &c, const TwmrOptions &opt) {
    const auto n = e.rows(), k = e.cols();
    if (gamma.size() != n || c.rows() != n || c.cols() != n)
        throw Error(ErrorKind::DimensionMismatch, "E is " + std::to_string(n) + "x" + std::to_string(k) + ", gamma has " +
                                                      std::to_string(gamma.size()) + " entries, C is " +
                                                      std::to_string(c.rows()) + "x" + std::to_string(c.cols()));
    if (k < 1 || k > n)
        throw Error(ErrorKind::SingularDesign, std::to_string(k) + " exposures cannot be estimated from " +
                                                   std::to_string(n) + " SNPs");
    GlsParts g;
    g.c = c;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ceig(c, Eigen::EigenvaluesOnly);
    if (ceig.eigenvalues().minCoeff() < opt.ridge_trigger) {
        g.ridge = opt.ridge;
        g.c.diagonal().array() += opt.ridge;
    }
    g.c_llt.compute(g.c);
    if (g.c_llt.info() != Eigen::Success)
        throw Error(ErrorKind::SingularDesign, "LD matrix is not positive definite after regularization");

    g.cinv_e = g.c_llt.solve(e);
    Eigen::MatrixXd a = e.transpose() * g.cinv_e;
    a = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> aeig(a);
    const double lo = aeig.eigenvalues().minCoeff(), hi = aeig.eigenvalues().maxCoeff();
    g.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(lo > 0.0) || g.condition > opt.max_condition)
        throw Error(ErrorKind::SingularDesign,
                    "E'C^-1E is rank-deficient (condition number " + format_num(g.condition) +
                        "); an exposure's effects are a linear combination of the others");
    g.a_inv = aeig.eigenvectors() * aeig.eigenvalues().cwiseInverse().asDiagonal() * aeig.eigenvectors().transpose();
    g.alpha = g.a_inv * (g.cinv_e.transpose() * gamma);
    g.cinv_resid = g.c_llt.solve(gamma - e * g.alpha);
    return g;
}

} // namespace detail

/// Analytic derivatives of the GLS estimate with respect to each column of E:
/// J_m = (E'C^-1E)^-1 [ e_m (C^-1 r)' - alpha_m E'C^-1 ], a k x n matrix per exposure.
inline std::vector<Eigen::MatrixXd> twmr_jacobians(const Eigen::MatrixXd &e, const Eigen::VectorXd &gamma,
                                                   const Eigen::MatrixXd &c, const TwmrOptions &opt = {}) {
    const auto g = detail::gls(e, gamma, c, opt);
    const auto k = e.cols();
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<std::size_t>(k));
    const Eigen::MatrixXd bt = g.cinv_e.transpose(); // E'C^-1
    for (Eigen::Index m = 0; m < k; ++m) {
        Eigen::MatrixXd inner = -g.alpha(m) * bt;
        inner.row(m) += g.cinv_resid.transpose();
        out.push_back(g.a_inv * inner);
    }
    return out;
}

/// Multivariable GLS estimate alpha = (E'C^-1E)^-1 E'C^-1 gamma with a
/// first-order delta-method covariance, treating gamma as N(., C/n_gwas) and
/// every column of E as N(., C/n_qtl).
inline TwmrFit twmr_fit(const Eigen::MatrixXd &e, const Eigen::VectorXd &gamma, const Eigen::MatrixXd &c, double n_gwas,
                        double n_qtl, const std::vector<std::string> &genes, const TwmrOptions &opt = {}) {
    if (static_cast<Eigen::Index>(genes.size()) != e.cols())
        throw Error(ErrorKind::DimensionMismatch, "gene names do not match the number of effect columns");
    const auto g = detail::gls(e, gamma, c, opt);
    const auto n = e.rows(), k = e.cols();

    // H C H' with H = A^-1 E'C^-1 reduces to A^-1.
    Eigen::MatrixXd cov = g.a_inv / n_gwas;
    const Eigen::MatrixXd bt = g.cinv_e.transpose();
    for (Eigen::Index m = 0; m < k; ++m) {
        Eigen::MatrixXd inner = -g.alpha(m) * bt;
        inner.row(m) += g.cinv_resid.transpose();
        const Eigen::MatrixXd jm = g.a_inv * inner;
        cov += jm * g.c * jm.transpose() / n_qtl;
    }
    cov = 0.5 * (cov + cov.transpose());

    TwmrFit fit;
    fit.alpha = g.alpha;
    fit.cov = cov;
    fit.ld_ridge = g.ridge;
    fit.condition_number = g.condition;
    for (Eigen::Index m = 0; m < k; ++m) {
        const double se = std::sqrt(cov(m, m));
        if (!(se > 0.0) || !std::isfinite(se))
            throw Error(ErrorKind::NumericalOverflow, "non-positive variance for " + genes[static_cast<std::size_t>(m)]);
        fit.results.push_back({genes[static_cast<std::size_t>(m)], g.alpha(m), se, two_sided_p(g.alpha(m) / se),
                               static_cast<std::size_t>(n), static_cast<std::size_t>(k)});
    }
    return fit;
}

inline TwmrFit twmr_fit(const TwmrInput &input, const TwmrOptions &opt = {}) {
    input.validate();
    return twmr_fit(input.effects.beta, input.effects.outcome_beta, input.ld.r(), input.n_gwas, input.n_qtl,
                    input.effects.traits, opt);
}

inline std::vector<TwmrResult> twmr_estimate(const TwmrInput &input, const TwmrOptions &opt = {}) {
    return twmr_fit(input, opt).results;
}

inline std::string format_alpha(const std::vector<TwmrResult> &rows) {
    std::string out = "gene\talpha\tSE\tP\tNsnps\tNgene\n";
    for (const auto &r : rows)
        out += r.gene + "\t" + format_num(r.alpha) + "\t" + format_num(r.se) + "\t" + format_num(r.p) + "\t" +
               std::to_string(r.nsnps) + "\t" + std::to_string(r.ngene) + "\n";
    return out;
}

/// Loads `stem.matrix` and `stem.ld`. A size mismatch names both files.
inline TwmrInput twmr_load_files(const std::string &stem, double n_gwas, double n_qtl, const LdReadOptions &ld_opt = {}) {
    const std::string matrix_path = stem + ".matrix", ld_path = stem + ".ld";
    auto effects = parse_matrix_file(matrix_path);
    LdMatrix ld;
    try {
        ld = parse_ld_file(ld_path, effects.snps, ld_opt);
    } catch (const Error &err) {
        if (err.kind() != ErrorKind::DimensionMismatch) throw;
        throw Error(ErrorKind::DimensionMismatch,
                    "the number of SNPs in " + matrix_path + " (" + std::to_string(effects.n()) +
                        ") must equal the number of rows/columns of " + ld_path + " [" + err.what() + "]");
    }
    return {std::move(effects), std::move(ld), n_gwas, n_qtl};
}

/// Loads `stem.matrix` and `stem.ld`, estimates, and writes `stem.alpha`.
/// Nothing is written when any step fails.
inline TwmrFit twmr_run_files(const std::string &stem, double n_gwas, double n_qtl, const LdReadOptions &ld_opt = {},
                              const TwmrOptions &opt = {}) {
    auto fit = twmr_fit(twmr_load_files(stem, n_gwas, n_qtl, ld_opt), opt);
    write_text_file(stem + ".alpha", format_alpha(fit.results));
    return fit;
}

// ---------------------------------------------------------------------------
// SNP and gene selection

struct TwmrSelectParams {
    ClumpParams clump;
    double eqtl_p = 5e-8;        // a SNP is an eQTL for a gene when p <= eqtl_p
    bool single_gene_snps = false; // Step 4 admits only SNPs that are eQTLs for exactly one selected gene
};

struct TwmrSelection {
    std::vector<std::string> snps;  // final independent instruments
    std::vector<std::string> genes; // seed first, then by name
    std::map<std::string, int> snp_step;  // 2 = seed's clumped eQTL, 4 = added for a selected gene
    std::map<std::string, int> gene_step; // 1 = seed, 3 = shares a Step-2 eQTL
};

/// Instrument and gene selection around a seed gene:
/// clump the seed's eQTLs, add every gene those SNPs are eQTLs for, collect
/// the SNPs whose eQTL genes all lie in that set, and clump them again.
inline TwmrSelection select_instruments_twmr(const std::string &seed_gene, const std::map<std::string, AssocTable> &eqtl,
                                             const LdMatrix &ld, const TwmrSelectParams &params = {}) {
    auto seed_it = eqtl.find(seed_gene);
    if (seed_it == eqtl.end()) throw Error(ErrorKind::NoSignificantEqtls, "no eQTL table for " + seed_gene);

    auto genes_of = [&](const std::string &rsid) {
        std::set<std::string> out;
        for (const auto &[gene, table] : eqtl) {
            const auto *r = table.find(rsid);
            if (r && r->pvalue <= params.eqtl_p) out.insert(gene);
        }
        return out;
    };

    // Step 2
    std::vector<SnpRecord> seed_sig;
    for (const auto &r : seed_it->second.records())
        if (r.pvalue <= params.eqtl_p) seed_sig.push_back(r);
    const auto step2 = index_snps(clump(seed_sig, ld, params.clump));
    if (step2.empty()) throw Error(ErrorKind::NoSignificantEqtls, seed_gene + " has no independent significant eQTLs");

    // Step 3
    TwmrSelection sel;
    std::set<std::string> gene_set{seed_gene};
    sel.gene_step[seed_gene] = 1;
    for (const auto &s : step2)
        for (const auto &g : genes_of(s))
            if (gene_set.insert(g).second) sel.gene_step[g] = 3;

    // Step 4: best record per candidate SNP across the selected genes
    std::map<std::string, SnpRecord> candidates;
    for (const auto &g : gene_set) {
        for (const auto &r : eqtl.at(g).records()) {
            if (r.pvalue > params.eqtl_p || candidates.count(r.rsid)) continue;
            const auto hits = genes_of(r.rsid);
            const bool inside = std::includes(gene_set.begin(), gene_set.end(), hits.begin(), hits.end());
            if (!inside || (params.single_gene_snps && hits.size() != 1)) continue;
            SnpRecord best = r;
            for (const auto &h : hits) {
                const auto *hr = eqtl.at(h).find(r.rsid);
                if (hr->pvalue < best.pvalue) best = *hr;
            }
            candidates.emplace(r.rsid, best);
        }
    }

    // Step 5
    std::vector<SnpRecord> pool;
    pool.reserve(candidates.size());
    for (auto &[rsid, rec] : candidates) pool.push_back(rec);
    const std::set<std::string> step2_set(step2.begin(), step2.end());
    for (const auto &s : index_snps(clump(pool, ld, params.clump))) {
        sel.snps.push_back(s);
        sel.snp_step[s] = step2_set.count(s) ? 2 : 4;
    }
    sel.genes.push_back(seed_gene);
    for (const auto &g : gene_set)
        if (g != seed_gene) sel.genes.push_back(g);
    return sel;
}

/// Assembles the TWMR effect matrix for a selection. Entries for SNPs that are
/// not significant eQTLs of a gene are zero; all effects are aligned to the
/// alleles of the first eQTL record found for each SNP. SNPs absent from the
/// outcome or with unresolvable alleles are skipped.
inline EffectMatrix build_effect_matrix(const TwmrSelection &sel, const std::map<std::string, AssocTable> &eqtl,
                                        const AssocTable &outcome, double eqtl_p, const HarmonizeOptions &opt = {}) {
    std::vector<std::string> snps;
    std::vector<std::vector<double>> rows;
    std::vector<double> gamma;
    for (const auto &s : sel.snps) {
        const SnpRecord *ref = nullptr;
        for (const auto &g : sel.genes)
            if ((ref = eqtl.at(g).find(s))) break;
        const auto *out = outcome.find(s);
        if (!ref || !out) continue;
        const auto hp = harmonize_one(*ref, *out, opt);
        if (!hp.usable()) continue;
        std::vector<double> row;
        bool ok = true;
        for (const auto &g : sel.genes) {
            const auto *r = eqtl.at(g).find(s);
            if (!r || r->pvalue > eqtl_p) {
                row.push_back(0.0);
                continue;
            }
            const auto aligned = harmonize_one(*ref, *r, opt);
            if (!aligned.usable()) {
                ok = false;
                break;
            }
            row.push_back(aligned.beta_outcome);
        }
        if (!ok) continue;
        snps.push_back(s);
        rows.push_back(std::move(row));
        gamma.push_back(hp.beta_outcome);
    }
    Eigen::MatrixXd beta(static_cast<Eigen::Index>(snps.size()), static_cast<Eigen::Index>(sel.genes.size()));
    Eigen::VectorXd g(static_cast<Eigen::Index>(snps.size()));
    for (std::size_t i = 0; i < snps.size(); ++i) {
        for (std::size_t j = 0; j < sel.genes.size(); ++j)
            beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        g(static_cast<Eigen::Index>(i)) = gamma[i];
    }
    return EffectMatrix(std::move(snps), sel.genes, std::move(beta), std::move(g));
}

} // namespace xmr

#endif // XMR_TWMR_HPP
