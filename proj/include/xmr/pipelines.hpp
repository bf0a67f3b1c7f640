#ifndef XMR_PIPELINES_HPP
#define XMR_PIPELINES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "error.hpp"
#include "ld.hpp"
#include "sumstats.hpp"
#include "uni_mr.hpp"
#include "util.hpp"

namespace xmr {

// ---------------------------------------------------------------------------
// annotation and pathway inputs

struct GeneAnnotation {
    std::string gene;
    std::string chrom;
    std::int64_t tss = 1;
    std::string protein;
};

/// "chr6" and "6" name the same chromosome.
inline std::string normalize_chrom(std::string_view c) {
    if (c.size() > 3 && (c.substr(0, 3) == "chr" || c.substr(0, 3) == "CHR")) c.remove_prefix(3);
    return std::string(c);
}

class AnnotationTable {
public:
    AnnotationTable() = default;
    explicit AnnotationTable(std::vector<GeneAnnotation> rows) {
        for (auto &r : rows) {
            if (r.tss < 1) throw Error(ErrorKind::InvalidValue, "tss of " + r.gene + " must be >= 1");
            by_protein_[r.protein] = std::move(r);
        }
    }

    const GeneAnnotation &at(const std::string &protein) const {
        auto it = by_protein_.find(protein);
        if (it == by_protein_.end()) throw Error(ErrorKind::UnknownProtein, "no gene annotation for protein " + protein);
        return it->second;
    }
    bool contains(const std::string &protein) const { return by_protein_.count(protein) != 0; }

private:
    std::map<std::string, GeneAnnotation> by_protein_;
};

/// Annotation TSV with header columns gene, chrom, tss, protein.
inline AnnotationTable parse_annotation(const std::string &path) {
    auto in = open_input(path);
    std::string line;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) header = split_ws(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char *name : {"gene", "chrom", "tss", "protein"})
        if (!col.count(name)) throw Error(ErrorKind::MissingColumn, path + ": no column named '" + name + "'");
    std::vector<GeneAnnotation> rows;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        auto tok = split_ws(line);
        if (tok.empty()) continue;
        ++row;
        if (tok.size() != header.size()) throw Error(ErrorKind::InvalidValue, path + " row " + std::to_string(row) + ": wrong field count");
        auto tss = parse_int(tok[col["tss"]]);
        if (!tss || *tss < 1) throw Error(ErrorKind::InvalidValue, path + " row " + std::to_string(row) + ", field tss");
        rows.push_back({tok[col["gene"]], tok[col["chrom"]], *tss, tok[col["protein"]]});
    }
    return AnnotationTable(std::move(rows));
}

/// Named protein sets from pathway or interaction-network exports. Groups may overlap.
struct PathwayGroups {
    std::vector<std::pair<std::string, std::set<std::string>>> groups;
};

/// One group per line: "name<TAB>protein1,protein2,...".
inline PathwayGroups parse_groups(const std::string &path) {
    auto in = open_input(path);
    PathwayGroups out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (split_ws(line).empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error(ErrorKind::InvalidValue, path + " line " + std::to_string(line_no) + ": expected name<TAB>members");
        std::set<std::string> members;
        for (auto &p : split_on(std::string_view(line).substr(tab + 1), ','))
            if (auto t = split_ws(p); !t.empty()) members.insert(t[0]);
        out.groups.emplace_back(line.substr(0, tab), std::move(members));
    }
    return out;
}

// ---------------------------------------------------------------------------
// instrument filters

enum class QtlLabel { cis, trans };

inline const char *to_string(QtlLabel l) { return l == QtlLabel::cis ? "cis" : "trans"; }

inline constexpr std::int64_t kCisWindow = 500000;

/// cis iff on the anchor's chromosome and within `window` bp of it (inclusive).
inline QtlLabel classify_cis_trans(const SnpRecord &snp, const std::string &anchor_chrom, std::int64_t anchor_pos,
                                   std::int64_t window = kCisWindow) {
    if (normalize_chrom(snp.chrom) != normalize_chrom(anchor_chrom)) return QtlLabel::trans;
    const auto dist = snp.pos > anchor_pos ? snp.pos - anchor_pos : anchor_pos - snp.pos;
    return dist <= window ? QtlLabel::cis : QtlLabel::trans;
}

inline QtlLabel classify_cis_trans(const SnpRecord &snp, const GeneAnnotation &ann, std::int64_t window = kCisWindow) {
    return classify_cis_trans(snp, ann.chrom, ann.tss, window);
}

inline constexpr std::int64_t kMhcStart = 26000000;
inline constexpr std::int64_t kMhcEnd = 34000000;

inline bool in_mhc(const SnpRecord &r) {
    return normalize_chrom(r.chrom) == "6" && r.pos >= kMhcStart && r.pos <= kMhcEnd;
}

/// Drops SNPs in chr6:26,000,000-34,000,000, bounds inclusive.
inline std::vector<SnpRecord> mhc_filter(const std::vector<SnpRecord> &snps) {
    std::vector<SnpRecord> out;
    std::copy_if(snps.begin(), snps.end(), std::back_inserter(out), [](const SnpRecord &r) { return !in_mhc(r); });
    return out;
}

/// Keeps records with p <= alpha / tests.
inline std::vector<SnpRecord> bonferroni_filter(const std::vector<SnpRecord> &snps, std::size_t tests, double alpha = 0.05) {
    const double threshold = alpha / static_cast<double>(std::max<std::size_t>(tests, 1));
    std::vector<SnpRecord> out;
    std::copy_if(snps.begin(), snps.end(), std::back_inserter(out), [&](const SnpRecord &r) { return r.pvalue <= threshold; });
    return out;
}

enum class PleiotropyRule { few_proteins, vertical_pleiotropy, excluded };

inline const char *to_string(PleiotropyRule r) {
    switch (r) {
    case PleiotropyRule::few_proteins: return "retained_below_threshold";
    case PleiotropyRule::vertical_pleiotropy: return "retained_vertical_pleiotropy";
    case PleiotropyRule::excluded: return "excluded_pleiotropic";
    }
    return "?";
}

struct PleiotropyAudit {
    std::string snp;
    std::size_t n_proteins = 0;
    PleiotropyRule rule = PleiotropyRule::few_proteins;
    std::string group; // covering group for vertical pleiotropy
};

struct PleiotropyOptions {
    std::size_t max_proteins = 5; // SNPs hitting this many proteins or more need a covering group
    bool majority = false;        // accept a group covering more than half instead of all
};

struct PleiotropyResult {
    std::vector<std::string> retained;
    std::vector<PleiotropyAudit> audit;
};

inline PleiotropyResult pleiotropy_filter(const std::map<std::string, std::set<std::string>> &pqtl_map,
                                          const PathwayGroups &groups, const PleiotropyOptions &opt = {}) {
    PleiotropyResult out;
    for (const auto &[snp, proteins] : pqtl_map) {
        PleiotropyAudit a{snp, proteins.size(), PleiotropyRule::few_proteins, {}};
        if (proteins.size() >= opt.max_proteins) {
            a.rule = PleiotropyRule::excluded;
            for (const auto &[name, members] : groups.groups) {
                const auto covered = static_cast<std::size_t>(std::count_if(
                    proteins.begin(), proteins.end(), [&](const std::string &p) { return members.count(p) != 0; }));
                const bool ok = opt.majority ? 2 * covered > proteins.size() : covered == proteins.size();
                if (ok) {
                    a.rule = PleiotropyRule::vertical_pleiotropy;
                    a.group = name;
                    break;
                }
            }
        }
        if (a.rule != PleiotropyRule::excluded) out.retained.push_back(snp);
        out.audit.push_back(std::move(a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// per-protein MR

struct Instrument {
    SnpRecord record;
    QtlLabel label = QtlLabel::cis;
    std::vector<std::string> provenance; // filters passed, in order
};

struct InstrumentSet {
    std::string protein;
    std::vector<Instrument> snps;
};

enum class MrMode { cis_only, cis_plus_trans, trans_only };

inline const char *to_string(MrMode m) {
    switch (m) {
    case MrMode::cis_only: return "cis_only";
    case MrMode::cis_plus_trans: return "cis_plus_trans";
    case MrMode::trans_only: return "trans_only";
    }
    return "?";
}

struct ProteinMrOptions {
    HarmonizeOptions harmonize;
    WeightedMedianOptions median;
};

/// One instrument: Wald ratio. Two or more: IVW. Three or more adds the
/// Egger slope and intercept and the weighted median as sensitivity rows.
inline std::vector<MrEstimate> protein_mr(const std::string &protein, const InstrumentSet &instruments,
                                          const AssocTable &outcome, MrMode mode, const ProteinMrOptions &opt = {}) {
    std::vector<SnpRecord> chosen;
    for (const auto &ins : instruments.snps) {
        const bool take = mode == MrMode::cis_plus_trans || (mode == MrMode::cis_only && ins.label == QtlLabel::cis) ||
                          (mode == MrMode::trans_only && ins.label == QtlLabel::trans);
        if (take) chosen.push_back(ins.record);
    }
    if (chosen.empty())
        throw Error(ErrorKind::NoInstruments, protein + " has no " + to_string(mode) + " instruments");
    const AssocTable exposure(protein, TraitKind::pqtl, std::move(chosen));
    std::vector<HarmonizedPair> pairs;
    try {
        pairs = usable_pairs(harmonize(exposure, outcome, opt.harmonize));
    } catch (const Error &e) {
        if (e.kind() != ErrorKind::NoOverlap) throw;
    }
    if (pairs.empty())
        throw Error(ErrorKind::NoInstruments, protein + " has no " + std::string(to_string(mode)) +
                                                  " instruments left after harmonization");

    std::vector<MrEstimate> out;
    if (pairs.size() == 1) {
        out.push_back(wald_ratio(pairs.front()));
        return out;
    }
    out.push_back(ivw(pairs));
    if (pairs.size() >= 3) {
        try {
            auto e = egger(pairs);
            out.push_back(e.slope);
            out.push_back(e.intercept);
        } catch (const Error &e) {
            if (e.kind() != ErrorKind::DegenerateDesign) throw;
        }
        out.push_back(weighted_median(pairs, opt.median));
    }
    return out;
}

/// True iff every estimate has the same strict sign. A zero estimate is sign
/// indeterminate and makes the result false. Empty for fewer than two estimates.
inline std::optional<bool> direction_consistency(const std::map<MrMode, MrEstimate> &results) {
    if (results.size() < 2) return std::nullopt;
    int sign = 0;
    for (const auto &[mode, est] : results) {
        const int s = est.estimate > 0.0 ? 1 : (est.estimate < 0.0 ? -1 : 0);
        if (s == 0) return false;
        if (sign == 0) sign = s;
        if (s != sign) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// proteomics workflow

enum class WindowAnchor { tss, lead_pqtl };

struct PqtlPipelineConfig {
    double alpha = 0.05;
    std::optional<std::size_t> bonferroni_tests; // defaults to the number of SNP-protein rows
    bool clump = true;                           // requires an LD matrix
    double clump_r2 = 0.01;
    double clump_kb = 1000.0;
    PleiotropyOptions pleiotropy;
    std::int64_t window = kCisWindow;
    WindowAnchor anchor = WindowAnchor::tss;
    ProteinMrOptions mr;
    std::uint64_t seed = 1;
};

struct PqtlReportRow {
    std::string protein;
    MrMode mode = MrMode::cis_only;
    MrEstimate estimate;
    std::optional<bool> consistent;
};

struct PqtlReport {
    std::vector<PqtlReportRow> rows;
    std::vector<PleiotropyAudit> pleiotropy;
    std::vector<InstrumentSet> instruments;
    double bonferroni_threshold = 0.0;
};

/// pQTL selection (Bonferroni, MHC exclusion, clumping), the pleiotropy
/// filter, cis/trans labelling, and MR per protein in the three modes.
inline PqtlReport run_pqtl_pipeline(const std::vector<AssocTable> &pqtl, const AssocTable &outcome,
                                    const AnnotationTable &annotation, const PathwayGroups &groups,
                                    const LdMatrix *ld, const PqtlPipelineConfig &cfg = {}, unsigned jobs = 1) {
    PqtlReport rep;
    std::size_t tests = 0;
    for (const auto &t : pqtl) tests += t.size();
    if (cfg.bonferroni_tests) tests = *cfg.bonferroni_tests;
    rep.bonferroni_threshold = cfg.alpha / static_cast<double>(std::max<std::size_t>(tests, 1));

    // Step 1
    std::vector<std::vector<SnpRecord>> selected(pqtl.size());
    parallel_for(pqtl.size(), jobs, [&](std::size_t i) {
        auto recs = mhc_filter(bonferroni_filter(pqtl[i].records(), tests, cfg.alpha));
        if (cfg.clump && ld) {
            ClumpParams cp{1.0, 1.0, cfg.clump_r2, cfg.clump_kb};
            std::set<std::string> keep;
            for (const auto &s : index_snps(clump(recs, *ld, cp))) keep.insert(s);
            std::erase_if(recs, [&](const SnpRecord &r) { return !keep.count(r.rsid); });
        }
        selected[i] = std::move(recs);
    });

    // Step 2
    std::map<std::string, std::set<std::string>> snp_proteins;
    for (std::size_t i = 0; i < pqtl.size(); ++i)
        for (const auto &r : selected[i]) snp_proteins[r.rsid].insert(pqtl[i].trait_name());
    auto pleio = pleiotropy_filter(snp_proteins, groups, cfg.pleiotropy);
    const std::set<std::string> valid(pleio.retained.begin(), pleio.retained.end());
    rep.pleiotropy = std::move(pleio.audit);

    // Steps 3 and 4
    std::vector<InstrumentSet> sets(pqtl.size());
    std::vector<std::vector<PqtlReportRow>> rows(pqtl.size());
    parallel_for(pqtl.size(), jobs, [&](std::size_t i) {
        const auto &protein = pqtl[i].trait_name();
        const auto &ann = annotation.at(protein);
        std::string anchor_chrom = ann.chrom;
        std::int64_t anchor_pos = ann.tss;
        if (cfg.anchor == WindowAnchor::lead_pqtl) {
            const SnpRecord *lead = nullptr;
            for (const auto &r : selected[i])
                if (normalize_chrom(r.chrom) == normalize_chrom(ann.chrom) && (!lead || r.pvalue < lead->pvalue)) lead = &r;
            if (lead) anchor_pos = lead->pos;
        }
        InstrumentSet set{protein, {}};
        for (const auto &r : selected[i]) {
            if (!valid.count(r.rsid)) continue;
            set.snps.push_back({r, classify_cis_trans(r, anchor_chrom, anchor_pos, cfg.window),
                                {"bonferroni", "mhc", cfg.clump && ld ? "clumped" : "unclumped", "pleiotropy"}});
        }
        std::map<MrMode, MrEstimate> primary;
        std::vector<PqtlReportRow> prow;
        for (MrMode mode : {MrMode::cis_only, MrMode::cis_plus_trans, MrMode::trans_only}) {
            ProteinMrOptions mo = cfg.mr;
            mo.median.seed = derive_seed(cfg.seed, protein + "/" + to_string(mode));
            try {
                for (const auto &est : protein_mr(protein, set, outcome, mode, mo)) {
                    if (est.method == MrMethod::wald_ratio || est.method == MrMethod::ivw) primary[mode] = est;
                    prow.push_back({protein, mode, est, std::nullopt});
                }
            } catch (const Error &e) {
                if (e.kind() != ErrorKind::NoInstruments) throw;
            }
        }
        const auto consistent = direction_consistency(primary);
        for (auto &r : prow) r.consistent = consistent;
        rows[i] = std::move(prow);
        sets[i] = std::move(set);
    });
    for (auto &r : rows) std::move(r.begin(), r.end(), std::back_inserter(rep.rows));
    rep.instruments = std::move(sets);
    return rep;
}

inline std::string format_pqtl_report(const PqtlReport &rep) {
    std::string out = "protein\tmode\tmethod\testimate\tse\tp\tn_snps\tconsistent\n";
    for (const auto &r : rep.rows)
        out += r.protein + "\t" + to_string(r.mode) + "\t" + to_string(r.estimate.method) + "\t" +
               format_num(r.estimate.estimate) + "\t" + format_num(r.estimate.se) + "\t" + format_num(r.estimate.pvalue) +
               "\t" + std::to_string(r.estimate.n_snps) + "\t" +
               (r.consistent ? (*r.consistent ? "true" : "false") : "NA") + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// two-step epigenetic mediation

struct MediationResult {
    std::string exposure;
    std::string cpg_site;
    std::string outcome;
    MrEstimate step1;
    MrEstimate step2;
    bool is_mediator = false;
    double indirect_effect = 0.0;
    double indirect_se = 0.0;
    bool overlapping_instruments = false; // the two steps share a SNP
};

inline MrEstimate single_or_ivw(const std::vector<HarmonizedPair> &pairs) {
    if (pairs.empty()) throw Error(ErrorKind::EmptyInstrumentSet, "no usable instruments");
    return pairs.size() == 1 ? wald_ratio(pairs.front()) : ivw(pairs);
}

/// Exposure -> methylation and methylation -> outcome estimated separately;
/// the CpG site is a mediator when both p-values are <= alpha. The indirect
/// effect is the product theta1 * theta2 with a first-order (Sobel) SE.
inline MediationResult two_step_mediation(const std::vector<HarmonizedPair> &step1_input,
                                          const std::vector<HarmonizedPair> &step2_input, double alpha = 0.05,
                                          std::string exposure = {}, std::string cpg_site = {}, std::string outcome = {}) {
    MediationResult r;
    r.exposure = std::move(exposure);
    r.cpg_site = std::move(cpg_site);
    r.outcome = std::move(outcome);
    std::set<std::string> first;
    for (const auto &p : step1_input) first.insert(p.rsid);
    r.overlapping_instruments = std::any_of(step2_input.begin(), step2_input.end(),
                                            [&](const HarmonizedPair &p) { return first.count(p.rsid) != 0; });
    r.step1 = single_or_ivw(step1_input);
    r.step2 = single_or_ivw(step2_input);
    r.is_mediator = r.step1.pvalue <= alpha && r.step2.pvalue <= alpha;
    const double t1 = r.step1.estimate, t2 = r.step2.estimate;
    r.indirect_effect = t1 * t2;
    r.indirect_se = std::sqrt(t1 * t1 * r.step2.se * r.step2.se + t2 * t2 * r.step1.se * r.step1.se);
    return r;
}

struct MediationConfig {
    double alpha = 0.05;
    bool bonferroni = false;       // divide alpha by the number of CpG sites
    double instrument_p = 5e-8;    // step-2 instruments: SNP-methylation p at most this
    HarmonizeOptions harmonize;
};

struct MediationRow {
    MediationResult result;
    std::string status = "ok"; // error kind when a step could not be estimated
};

/// Runs the two-step test for every CpG site. `exposure` holds the exposure
/// instruments; each `methylation` table holds SNP effects on one CpG site.
inline std::vector<MediationRow> run_mediation(const AssocTable &exposure, const std::vector<AssocTable> &methylation,
                                               const AssocTable &outcome, const MediationConfig &cfg = {},
                                               unsigned jobs = 1) {
    const double alpha =
        cfg.bonferroni ? cfg.alpha / static_cast<double>(std::max<std::size_t>(methylation.size(), 1)) : cfg.alpha;
    std::vector<MediationRow> rows(methylation.size());
    parallel_for(methylation.size(), jobs, [&](std::size_t i) {
        const auto &cpg = methylation[i];
        auto &row = rows[i];
        row.result.exposure = exposure.trait_name();
        row.result.cpg_site = cpg.trait_name();
        row.result.outcome = outcome.trait_name();
        try {
            auto step1 = usable_pairs(harmonize(exposure, cpg, cfg.harmonize));
            std::vector<SnpRecord> ins;
            for (const auto &r : cpg.records())
                if (r.pvalue <= cfg.instrument_p) ins.push_back(r);
            if (ins.empty()) throw Error(ErrorKind::NoInstruments, cpg.trait_name() + " has no instruments");
            auto step2 = usable_pairs(harmonize(AssocTable(cpg.trait_name(), TraitKind::mqtl, std::move(ins)), outcome,
                                                cfg.harmonize));
            row.result = two_step_mediation(step1, step2, alpha, exposure.trait_name(), cpg.trait_name(),
                                            outcome.trait_name());
        } catch (const Error &e) {
            row.status = to_string(e.kind());
        }
    });
    return rows;
}

inline std::string format_mediation(const std::vector<MediationRow> &rows) {
    std::string out = "exposure\tcpg\toutcome\ttheta1\tse1\tp1\tn1\ttheta2\tse2\tp2\tn2\tindirect\tindirect_se\t"
                      "is_mediator\toverlap\tstatus\n";
    for (const auto &row : rows) {
        const auto &r = row.result;
        out += r.exposure + "\t" + r.cpg_site + "\t" + r.outcome + "\t";
        if (row.status != "ok") {
            out += "NA\tNA\tNA\tNA\tNA\tNA\tNA\tNA\tNA\tNA\tNA\tfalse\tNA\t" + row.status + "\n";
            continue;
        }
        out += format_num(r.step1.estimate) + "\t" + format_num(r.step1.se) + "\t" + format_num(r.step1.pvalue) + "\t" +
               std::to_string(r.step1.n_snps) + "\t" + format_num(r.step2.estimate) + "\t" + format_num(r.step2.se) +
               "\t" + format_num(r.step2.pvalue) + "\t" + std::to_string(r.step2.n_snps) + "\t" +
               format_num(r.indirect_effect) + "\t" + format_num(r.indirect_se) + "\t" +
               (r.is_mediator ? "true" : "false") + "\t" + (r.overlapping_instruments ? "true" : "false") + "\tok\n";
    }
    return out;
}

} // namespace xmr

#endif // XMR_PIPELINES_HPP
