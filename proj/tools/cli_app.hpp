#ifndef XMR_TOOLS_CLI_APP_HPP
#define XMR_TOOLS_CLI_APP_HPP

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xmr/xmr.hpp"

namespace xmr::cli {

struct Columns {
    ColumnMap map;

    void add(CLI::App *cmd) {
        cmd->add_option("--col-snp", map.rsid, "rsid column")->capture_default_str();
        cmd->add_option("--col-chr", map.chrom, "chromosome column")->capture_default_str();
        cmd->add_option("--col-pos", map.pos, "base-pair position column")->capture_default_str();
        cmd->add_option("--col-ea", map.effect_allele, "effect allele column")->capture_default_str();
        cmd->add_option("--col-oa", map.other_allele, "other allele column")->capture_default_str();
        cmd->add_option("--col-beta", map.beta, "effect size column")->capture_default_str();
        cmd->add_option("--col-se", map.se, "standard error column")->capture_default_str();
        cmd->add_option("--col-p", map.pvalue, "p-value column")->capture_default_str();
        cmd->add_option("--col-n", map.n, "sample size column")->capture_default_str();
        cmd->add_option("--col-eaf", map.eaf, "effect allele frequency column")->capture_default_str();
    }
};

inline PalindromePolicy palindrome_policy(const std::string &s) {
    if (s == "drop") return PalindromePolicy::drop;
    if (s == "keep") return PalindromePolicy::keep;
    return PalindromePolicy::infer_from_eaf;
}

/// Reproducibility header: version, subcommand, global seed and every
/// subcommand option. --jobs is left out because it never changes results.
inline std::string metadata(const CLI::App &sub, std::uint64_t seed, const std::vector<std::string> &warnings = {}) {
    std::string out = "# xmr " + std::string(kVersion) + "\n# command: " + sub.get_name() + "\n# seed: " + std::to_string(seed) + "\n";
    for (const auto *opt : sub.get_options()) {
        if (opt->get_name() == "--help") continue;
        std::string value;
        const auto &res = opt->results();
        for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
        if (res.empty() && opt->get_expected_min() == 0) value = "false";
        else if (res.empty()) value = opt->get_default_str().empty() ? "unset" : opt->get_default_str();
        out += "# " + opt->get_name() + "=" + value + "\n";
    }
    for (const auto &w : warnings) out += "# warning: " + w + "\n";
    return out;
}

/// Trait label for a summary-statistics file: its name without directory or extension.
inline std::string trait_name(const std::string &path) { return std::filesystem::path(path).stem().string(); }

inline void emit(const std::string &path, const std::string &text, std::ostream &out) {
    if (path.empty() || path == "-") out << text;
    else write_text_file(path, text);
}

// ---------------------------------------------------------------------------

inline BmaInput read_bma_input(const std::string &beta_x_path, const std::string &beta_y_path, const ColumnMap &cols) {
    BmaInput in;
    auto fx = open_input(beta_x_path);
    std::string line;
    std::vector<std::string> header;
    while (header.empty() && std::getline(fx, line)) header = split_ws(line);
    if (header.size() < 2) throw Error(ErrorKind::MissingColumn, beta_x_path + ": header needs SNP and exposure names");
    in.exposures.assign(header.begin() + 1, header.end());
    std::vector<std::vector<double>> rows;
    std::size_t row = 0;
    while (std::getline(fx, line)) {
        auto tok = split_ws(line);
        if (tok.empty()) continue;
        ++row;
        if (tok.size() != header.size())
            throw Error(ErrorKind::RowWidthMismatch, beta_x_path + " row " + std::to_string(row));
        std::vector<double> v;
        for (std::size_t j = 1; j < tok.size(); ++j) {
            auto d = parse_double(tok[j]);
            if (!d) throw Error(ErrorKind::InvalidValue, beta_x_path + " row " + std::to_string(row) + ": '" + tok[j] + "'");
            v.push_back(*d);
        }
        in.snps.push_back(tok[0]);
        rows.push_back(std::move(v));
    }
    if (rows.empty()) throw Error(ErrorKind::EmptyMatrix, beta_x_path + " has no data rows");

    auto fy = open_input(beta_y_path);
    header.clear();
    while (header.empty() && std::getline(fy, line)) header = split_ws(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const auto &name : {cols.rsid, cols.beta, cols.se})
        if (!col.count(name)) throw Error(ErrorKind::MissingColumn, beta_y_path + ": no column named '" + name + "'");
    std::map<std::string, std::pair<double, double>> y;
    row = 0;
    while (std::getline(fy, line)) {
        auto tok = split_ws(line);
        if (tok.empty()) continue;
        ++row;
        if (tok.size() != header.size()) throw Error(ErrorKind::RowWidthMismatch, beta_y_path + " row " + std::to_string(row));
        auto b = parse_double(tok[col[cols.beta]]), s = parse_double(tok[col[cols.se]]);
        if (!b || !s || !(*s > 0.0)) throw Error(ErrorKind::InvalidValue, beta_y_path + " row " + std::to_string(row));
        y[tok[col[cols.rsid]]] = {*b, *s};
    }
    const auto n = static_cast<Eigen::Index>(in.snps.size()), k = static_cast<Eigen::Index>(in.exposures.size());
    in.beta_x.resize(n, k);
    in.beta_y.resize(n);
    in.se_y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto &snp = in.snps[static_cast<std::size_t>(i)];
        auto it = y.find(snp);
        if (it == y.end())
            throw Error(ErrorKind::DimensionMismatch, snp + " is in " + beta_x_path + " but not in " + beta_y_path);
        for (Eigen::Index m = 0; m < k; ++m) in.beta_x(i, m) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
        in.beta_y(i) = it->second.first;
        in.se_y(i) = it->second.second;
    }
    if (y.size() != in.snps.size())
        throw Error(ErrorKind::DimensionMismatch, beta_x_path + " and " + beta_y_path + " list different SNP sets");
    return in;
}

inline const std::vector<std::string> &mr_method_list() {
    static const std::vector<std::string> names{"mr_wald_ratio", "mr_ivw", "mr_egger_regression", "mr_weighted_median"};
    return names;
}

// ---------------------------------------------------------------------------

/// Parses `argv` and runs one subcommand. Returns the process exit status.
inline int run(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
    CLI::App app{"Mendelian randomization workflows for multi-omics summary statistics"};
    app.set_config("--config", "", "key=value configuration file; command-line flags override it");
    app.require_subcommand(1);
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    app.add_option("--seed", seed, "random seed")->capture_default_str();
    app.add_option("--jobs", jobs, "worker threads across proteins, CpG sites, loci or replicates")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    // twmr
    auto *twmr = app.add_subcommand("twmr", "TWMR on <stem>.matrix + <stem>.ld, writing <stem>.alpha");
    std::vector<std::string> stems;
    double n_gwas = 0.0, n_qtl = 0.0;
    bool ld_r2 = false;
    twmr->add_option("stem", stems, "file stem(s)")->required();
    twmr->add_option("--n-gwas", n_gwas, "GWAS sample size")->required()->check(CLI::PositiveNumber);
    twmr->add_option("--n-qtl", n_qtl, "eQTL sample size")->required()->check(CLI::PositiveNumber);
    twmr->add_flag("--ld-r2", ld_r2, "the .ld file stores r^2 instead of signed r");

    // mr
    auto *mr = app.add_subcommand("mr", "univariable two-sample MR");
    std::string exp_path, out_path, mr_out;
    std::vector<std::string> methods;
    bool list_methods = false, ivw_random = false, wald_second = false;
    std::size_t n_boot = 1000;
    std::string palindromes = "infer";
    Columns mr_cols;
    mr->add_option("--exposure", exp_path, "exposure summary statistics");
    mr->add_option("--outcome", out_path, "outcome summary statistics");
    mr->add_option("--methods", methods, "comma-separated subset of the method list")->delimiter(',');
    mr->add_flag("--list-methods", list_methods, "print the available methods and exit");
    mr->add_flag("--ivw-random", ivw_random, "multiplicative random-effects IVW");
    mr->add_flag("--wald-second-order", wald_second, "second-order Wald ratio standard error");
    mr->add_option("--n-boot", n_boot, "weighted median bootstrap resamples")->capture_default_str();
    mr->add_option("--palindromes", palindromes, "drop | infer | keep")->capture_default_str()
        ->check(CLI::IsMember({"drop", "infer", "keep"}));
    mr->add_option("--out", mr_out, "report TSV (default stdout)");
    mr_cols.add(mr);

    // bma
    auto *bma = app.add_subcommand("bma", "MR-BMA over correlated exposures");
    std::string beta_x_path, beta_y_path, bma_out;
    BmaParams bp;
    std::size_t kmax_opt = 0, top = 10;
    bool no_weighting = false, exhaustive = false;
    Columns bma_cols;
    bma->add_option("--beta-x", beta_x_path, "SNP x exposure effects (header: SNP <exposures>)")->required();
    bma->add_option("--beta-y", beta_y_path, "outcome effects with SNP/BETA/SE columns")->required();
    bma->add_option("--kmin", bp.kmin, "minimum model size")->capture_default_str();
    bma->add_option("--kmax", kmax_opt, "maximum model size (default min(12, k))");
    bma->add_option("--prior-prob", bp.prior_prob, "prior inclusion probability")->capture_default_str();
    bma->add_option("--prior-sigma", bp.prior_sigma, "prior SD of causal effects")->capture_default_str();
    bma->add_option("--max-iter", bp.max_iter, "stochastic search iterations")->capture_default_str();
    bma->add_option("--top", top, "number of best models to report")->capture_default_str();
    bma->add_flag("--no-weighting", no_weighting, "do not divide effects by the outcome standard errors");
    bma->add_flag("--exhaustive", exhaustive, "enumerate every model with kmin <= size <= kmax");
    bma->add_option("--out", bma_out, "output prefix (<prefix>.models.tsv, <prefix>.mip.tsv)")->required();
    bma_cols.add(bma);

    // clump
    auto *cl = app.add_subcommand("clump", "LD clumping of one summary-statistics file");
    std::string assoc_path, ld_path, ld_snps_path, clump_out;
    ClumpParams cp;
    Columns cl_cols;
    cl->add_option("--assoc", assoc_path, "summary statistics")->required();
    cl->add_option("--ld", ld_path, "LD matrix (signed r)")->required();
    cl->add_option("--ld-snps", ld_snps_path, "rsid per line, in LD matrix order")->required();
    cl->add_option("--clump-p1", cp.clump_p1, "index SNP threshold")->capture_default_str();
    cl->add_option("--clump-p2", cp.clump_p2, "clumped SNP threshold")->capture_default_str();
    cl->add_option("--clump-r2", cp.clump_r2, "r^2 threshold")->capture_default_str();
    cl->add_option("--clump-kb", cp.clump_kb, "window in kb")->capture_default_str();
    cl->add_option("--out", clump_out, "output TSV (default stdout)");
    cl_cols.add(cl);

    // pqtl
    auto *pq = app.add_subcommand("pqtl", "proteomics MR pipeline");
    std::string pqtl_path, pq_outcome, annotation_path, groups_path, pq_ld, pq_ld_snps, pq_out, protein_col = "PROTEIN";
    std::string anchor = "tss";
    PqtlPipelineConfig pcfg;
    std::size_t bonf_tests = 0;
    Columns pq_cols;
    pq->add_option("--pqtl", pqtl_path, "pQTL summary statistics with a protein column")->required();
    pq->add_option("--protein-col", protein_col, "protein column name")->capture_default_str();
    pq->add_option("--outcome", pq_outcome, "outcome summary statistics")->required();
    pq->add_option("--annotation", annotation_path, "gene annotation TSV (gene chrom tss protein)")->required();
    pq->add_option("--groups", groups_path, "pathway/PPI groups file");
    pq->add_option("--ld", pq_ld, "LD matrix for clumping");
    pq->add_option("--ld-snps", pq_ld_snps, "rsid list for --ld");
    pq->add_option("--alpha", pcfg.alpha, "family-wise level for the Bonferroni filter")->capture_default_str();
    pq->add_option("--bonferroni-tests", bonf_tests, "Bonferroni denominator (default: number of pQTL rows)");
    pq->add_option("--clump-r2", pcfg.clump_r2, "r^2 threshold")->capture_default_str();
    pq->add_option("--clump-kb", pcfg.clump_kb, "window in kb")->capture_default_str();
    pq->add_option("--max-proteins", pcfg.pleiotropy.max_proteins, "pleiotropy threshold")->capture_default_str();
    pq->add_flag("--majority-group", pcfg.pleiotropy.majority, "a group covering most proteins suffices");
    pq->add_option("--window", pcfg.window, "cis window in bp")->capture_default_str();
    pq->add_option("--anchor", anchor, "tss | lead")->capture_default_str()->check(CLI::IsMember({"tss", "lead"}));
    pq->add_option("--n-boot", pcfg.mr.median.n_boot, "weighted median bootstrap resamples")->capture_default_str();
    pq->add_option("--out", pq_out, "report TSV (default stdout)");
    pq_cols.add(pq);

    // mediate
    auto *md = app.add_subcommand("mediate", "two-step epigenetic MR");
    std::string md_exp, md_meth, md_out_path, md_out, cpg_col = "CPG";
    MediationConfig mcfg;
    Columns md_cols;
    md->add_option("--exposure", md_exp, "exposure instruments")->required();
    md->add_option("--methylation", md_meth, "SNP-methylation associations with a CpG column")->required();
    md->add_option("--cpg-col", cpg_col, "CpG column name")->capture_default_str();
    md->add_option("--outcome", md_out_path, "outcome summary statistics")->required();
    md->add_option("--alpha", mcfg.alpha, "joint-significance level")->capture_default_str();
    md->add_flag("--bonferroni", mcfg.bonferroni, "divide alpha by the number of CpG sites");
    md->add_option("--instrument-p", mcfg.instrument_p, "p threshold for CpG instruments")->capture_default_str();
    md->add_option("--out", md_out, "report TSV (default stdout)");
    md_cols.add(md);

    // simulate
    auto *sim = app.add_subcommand("simulate", "write synthetic .matrix/.ld/.truth files");
    SimSpec spec;
    std::string sim_stem;
    std::size_t replicates = 1;
    sim->add_option("--out", sim_stem, "output stem")->required();
    sim->add_option("--n-snps", spec.n_snps, "number of SNPs")->capture_default_str();
    sim->add_option("--k", spec.k_exposures, "number of exposures")->capture_default_str();
    sim->add_option("--alpha", spec.true_alpha, "true causal effects")->delimiter(',')->capture_default_str();
    sim->add_option("--ld-rho", spec.ld_rho, "AR(1) LD parameter")->capture_default_str();
    sim->add_option("--n-gwas", spec.n_gwas, "GWAS sample size")->capture_default_str();
    sim->add_option("--n-qtl", spec.n_qtl, "QTL sample size")->capture_default_str();
    sim->add_option("--pleiotropy-sd", spec.pleiotropy_sd, "SD of direct SNP effects")->capture_default_str();
    sim->add_option("--replicates", replicates, "number of replicates (<stem>_<r> when > 1)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return exit_code(ErrorKind::InvalidConfig);
    }

    try {
        if (twmr->parsed()) {
            LdReadOptions lo;
            lo.values_are_r2 = ld_r2;
            std::vector<TwmrFit> fits(stems.size());
            // every locus is fitted before anything is written
            parallel_for(stems.size(), jobs, [&](std::size_t i) { fits[i] = twmr_fit(twmr_load_files(stems[i], n_gwas, n_qtl, lo)); });
            for (std::size_t i = 0; i < stems.size(); ++i) {
                write_text_file(stems[i] + ".alpha", format_alpha(fits[i].results));
                std::string meta = metadata(*twmr, seed);
                meta += "# stem: " + stems[i] + "\n# ld_ridge: " + format_num(fits[i].ld_ridge) +
                        "\n# condition_number: " + format_num(fits[i].condition_number) + "\n";
                write_text_file(stems[i] + ".alpha.meta", meta);
            }
            return 0;
        }

        if (mr->parsed()) {
            if (list_methods) {
                for (const auto &m : mr_method_list()) out << m << "\n";
                return 0;
            }
            if (exp_path.empty() || out_path.empty())
                throw Error(ErrorKind::InvalidConfig, "--exposure and --outcome are required");
            for (const auto &m : methods)
                if (std::find(mr_method_list().begin(), mr_method_list().end(), m) == mr_method_list().end())
                    throw Error(ErrorKind::InvalidConfig, "unknown method '" + m + "' (see --list-methods)");
            HarmonizeOptions ho;
            ho.palindromes = palindrome_policy(palindromes);
            auto exposure = parse_assoc_table(exp_path, mr_cols.map, TraitKind::exposure, trait_name(exp_path));
            auto outcome = parse_assoc_table(out_path, mr_cols.map, TraitKind::gwas_outcome, trait_name(out_path));
            auto pairs = usable_pairs(harmonize(exposure, outcome, ho));
            if (pairs.empty()) throw Error(ErrorKind::NoInstruments, "no SNPs left after harmonization");
            std::vector<std::string> chosen = methods;
            if (chosen.empty()) {
                if (pairs.size() == 1) chosen = {"mr_wald_ratio"};
                else chosen = {"mr_ivw"};
                if (pairs.size() >= 3) chosen.insert(chosen.end(), {"mr_egger_regression", "mr_weighted_median"});
            }
            std::vector<MrEstimate> rows;
            for (const auto &m : chosen) {
                if (m == "mr_wald_ratio") {
                    if (pairs.size() != 1)
                        throw Error(ErrorKind::InvalidConfig, "mr_wald_ratio applies to exactly one instrument");
                    rows.push_back(wald_ratio(pairs.front(), wald_second ? WaldSe::second_order : WaldSe::first_order));
                } else if (m == "mr_ivw") {
                    rows.push_back(ivw(pairs, ivw_random ? IvwModel::multiplicative_random : IvwModel::fixed));
                } else if (m == "mr_egger_regression") {
                    auto e = egger(pairs);
                    rows.push_back(e.slope);
                    rows.push_back(e.intercept);
                } else {
                    rows.push_back(weighted_median(pairs, {n_boot, seed}));
                }
            }
            std::string text = metadata(*mr, seed) + "method\testimate\tse\tp\tn_snps\n";
            for (const auto &r : rows)
                text += std::string(to_string(r.method)) + "\t" + format_num(r.estimate) + "\t" + format_num(r.se) + "\t" +
                        format_num(r.pvalue) + "\t" + std::to_string(r.n_snps) + "\n";
            emit(mr_out, text, out);
            return 0;
        }

        if (bma->parsed()) {
            auto input = read_bma_input(beta_x_path, beta_y_path, bma_cols.map);
            input.outcome = beta_y_path;
            const auto k = input.exposures.size();
            bp.kmax = kmax_opt ? kmax_opt : std::min<std::size_t>(BmaParams::kRecommendedKmax, k);
            bp.seed = seed;
            const auto warnings = bp.validate(k);
            for (const auto &w : warnings) err << "warning: " << w << "\n";
            const auto design = weight_input(input, !no_weighting);
            const auto report = exhaustive ? exhaustive_search(design.x, design.y, bp) : search(design.x, design.y, bp);
            const auto best = report_best_models(report, top);
            std::string meta = metadata(*bma, seed, warnings);
            meta += "# resolved_kmax: " + std::to_string(bp.kmax) + "\n# search: " +
                    (report.exhaustive ? "exhaustive" : "shotgun") + "\n# normalized over " +
                    std::to_string(report.top_models.size()) + " models\n";
            write_text_file(bma_out + ".models.tsv", meta + format_models(best, input.exposures));
            write_text_file(bma_out + ".mip.tsv", meta + format_mip(best, input.exposures));
            return 0;
        }

        if (cl->parsed()) {
            cp.validate();
            auto assoc = parse_assoc_table(assoc_path, cl_cols.map, TraitKind::exposure, trait_name(assoc_path));
            auto ld = parse_ld_file(ld_path, parse_snp_list(ld_snps_path));
            const auto clumps = clump(assoc, ld, cp);
            std::string text = metadata(*cl, seed) + "index\tn_members\tmembers\n";
            for (const auto &c : clumps) {
                std::string members;
                for (std::size_t i = 0; i < c.members.size(); ++i) members += (i ? "," : "") + c.members[i];
                text += c.index + "\t" + std::to_string(c.members.size()) + "\t" + (members.empty() ? "-" : members) + "\n";
            }
            emit(clump_out, text, out);
            return 0;
        }

        if (pq->parsed()) {
            if (bonf_tests) pcfg.bonferroni_tests = bonf_tests;
            pcfg.anchor = anchor == "lead" ? WindowAnchor::lead_pqtl : WindowAnchor::tss;
            pcfg.seed = seed;
            if (pq_ld.empty() != pq_ld_snps.empty())
                throw Error(ErrorKind::InvalidConfig, "--ld and --ld-snps must be given together");
            pcfg.clump = !pq_ld.empty();
            auto tables = parse_assoc_tables(pqtl_path, protein_col, pq_cols.map, TraitKind::pqtl);
            auto outcome = parse_assoc_table(pq_outcome, pq_cols.map, TraitKind::gwas_outcome, trait_name(pq_outcome));
            auto annotation = parse_annotation(annotation_path);
            PathwayGroups groups;
            if (!groups_path.empty()) groups = parse_groups(groups_path);
            std::unique_ptr<LdMatrix> ld;
            if (pcfg.clump) ld = std::make_unique<LdMatrix>(parse_ld_file(pq_ld, parse_snp_list(pq_ld_snps)));
            for (const auto &t : tables) annotation.at(t.trait_name());
            const auto report = run_pqtl_pipeline(tables, outcome, annotation, groups, ld.get(), pcfg, jobs);
            std::string meta = metadata(*pq, seed);
            meta += "# bonferroni_threshold: " + format_num(report.bonferroni_threshold) + "\n";
            emit(pq_out, meta + format_pqtl_report(report), out);
            return 0;
        }

        if (md->parsed()) {
            auto exposure = parse_assoc_table(md_exp, md_cols.map, TraitKind::exposure, trait_name(md_exp));
            auto cpgs = parse_assoc_tables(md_meth, cpg_col, md_cols.map, TraitKind::methylation);
            auto outcome = parse_assoc_table(md_out_path, md_cols.map, TraitKind::gwas_outcome, trait_name(md_out_path));
            const auto rows = run_mediation(exposure, cpgs, outcome, mcfg, jobs);
            emit(md_out, metadata(*md, seed) + format_mediation(rows), out);
            return 0;
        }

        if (sim->parsed()) {
            spec.seed = seed;
            if (spec.true_alpha.size() != spec.k_exposures && spec.true_alpha.size() == 1)
                spec.true_alpha.assign(spec.k_exposures, spec.true_alpha.front());
            spec.validate();
            if (replicates < 1) throw Error(ErrorKind::InvalidConfig, "--replicates must be at least 1");
            parallel_for(replicates, jobs, [&](std::size_t r) {
                SimSpec s = spec;
                std::string stem = sim_stem;
                if (replicates > 1) {
                    s.seed = derive_seed(seed, "replicate/" + std::to_string(r));
                    stem += "_" + std::to_string(r + 1);
                }
                write_sim_files(stem, generate(s), s);
                write_text_file(stem + ".meta", metadata(*sim, seed) + "# replicate_seed: " + std::to_string(s.seed) + "\n");
            });
            return 0;
        }
    } catch (const Error &e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    }
    return exit_code(ErrorKind::InvalidConfig);
}

} // namespace xmr::cli

#endif // XMR_TOOLS_CLI_APP_HPP
