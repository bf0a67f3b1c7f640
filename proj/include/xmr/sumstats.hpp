#ifndef XMR_SUMSTATS_HPP
#define XMR_SUMSTATS_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "util.hpp"

namespace xmr {

/// Per-SNP summary statistics for one trait. `pos == 0` means the position
/// is unknown; `n` and `eaf` are optional.
struct SnpRecord {
    std::string rsid;
    std::string chrom;
    std::int64_t pos = 0;
    std::string effect_allele;
    std::string other_allele;
    double beta = 0.0;
    double se = 1.0;
    double pvalue = 1.0;
    std::optional<double> n;
    std::optional<double> eaf;
};

enum class TraitKind { gwas_outcome, eqtl, pqtl, mqtl, methylation, exposure };

inline std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

/// Returns an empty string when the record is valid, otherwise the name of
/// the first offending field.
inline std::string invalid_field(const SnpRecord &r) {
    if (r.rsid.empty()) return "rsid";
    if (!std::isfinite(r.beta)) return "beta";
    if (!(r.se > 0.0) || !std::isfinite(r.se)) return "se";
    if (!(r.pvalue >= 0.0 && r.pvalue <= 1.0)) return "pvalue";
    if (r.pos < 0) return "pos";
    if (r.effect_allele.empty()) return "effect_allele";
    if (r.other_allele.empty()) return "other_allele";
    if (r.effect_allele == r.other_allele) return "other_allele";
    if (r.n && !(*r.n > 0.0)) return "n";
    if (r.eaf && !(*r.eaf >= 0.0 && *r.eaf <= 1.0)) return "eaf";
    return {};
}

/// Summary statistics of one GWAS/QTL study. Immutable once built; rsids are unique.
class AssocTable {
public:
    AssocTable() = default;

    AssocTable(std::string trait_name, TraitKind kind, std::vector<SnpRecord> records)
        : trait_name_(std::move(trait_name)), kind_(kind), records_(std::move(records)) {
        index_.reserve(records_.size());
        for (std::size_t i = 0; i < records_.size(); ++i) {
            auto &r = records_[i];
            r.effect_allele = upper(r.effect_allele);
            r.other_allele = upper(r.other_allele);
            auto bad = invalid_field(r);
            if (!bad.empty())
                throw Error(ErrorKind::InvalidValue, "record " + std::to_string(i + 1) + " (" + r.rsid + "), field " + bad);
            if (!index_.emplace(r.rsid, i).second)
                throw Error(ErrorKind::DuplicateSnp, r.rsid + " appears twice in " + trait_name_);
        }
    }

    const std::string &trait_name() const { return trait_name_; }
    TraitKind kind() const { return kind_; }
    const std::vector<SnpRecord> &records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    const SnpRecord *find(const std::string &rsid) const {
        auto it = index_.find(rsid);
        return it == index_.end() ? nullptr : &records_[it->second];
    }

private:
    std::string trait_name_;
    TraitKind kind_ = TraitKind::exposure;
    std::vector<SnpRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// .matrix files

/// n x k exposure-effect matrix plus the outcome effect column.
/// A zero entry in `beta` means the SNP is not a QTL for that trait.
struct EffectMatrix {
    std::vector<std::string> snps;
    std::vector<std::string> traits;
    Eigen::MatrixXd beta;
    Eigen::VectorXd outcome_beta;

    EffectMatrix() = default;
    EffectMatrix(std::vector<std::string> snps_, std::vector<std::string> traits_, Eigen::MatrixXd beta_,
                 Eigen::VectorXd outcome_)
        : snps(std::move(snps_)), traits(std::move(traits_)), beta(std::move(beta_)), outcome_beta(std::move(outcome_)) {
        validate();
    }

    std::size_t n() const { return snps.size(); }
    std::size_t k() const { return traits.size(); }

    void validate() const {
        if (static_cast<std::size_t>(beta.rows()) != snps.size() || static_cast<std::size_t>(beta.cols()) != traits.size() ||
            static_cast<std::size_t>(outcome_beta.size()) != snps.size())
            throw Error(ErrorKind::DimensionMismatch,
                        "effect matrix is " + std::to_string(beta.rows()) + "x" + std::to_string(beta.cols()) + " for " +
                            std::to_string(snps.size()) + " SNPs, " + std::to_string(traits.size()) + " traits and " +
                            std::to_string(outcome_beta.size()) + " outcome effects");
        std::unordered_set<std::string> seen;
        for (const auto &s : snps)
            if (!seen.insert(s).second) throw Error(ErrorKind::DuplicateSnp, s);
    }
};

inline EffectMatrix read_matrix(std::istream &in, const std::string &label) {
    std::string line;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        header = split_ws(line);
    }
    if (header.empty()) throw Error(ErrorKind::EmptyMatrix, label + " is empty");
    if (header.front() != "GENES" || header.back() != "BETA_GWAS" || header.size() < 3)
        throw Error(ErrorKind::MissingColumn, label + ": header must read 'GENES <trait1> ... <traitk> BETA_GWAS'");
    const std::size_t width = header.size();
    const std::size_t k = width - 2;

    std::vector<std::string> snps;
    std::vector<double> values;
    std::unordered_set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != width)
            throw Error(ErrorKind::RowWidthMismatch, label + " line " + std::to_string(line_no) + ": expected " +
                                                         std::to_string(width) + " fields, found " + std::to_string(tok.size()));
        if (!seen.insert(tok[0]).second)
            throw Error(ErrorKind::DuplicateSnp, label + " line " + std::to_string(line_no) + ": " + tok[0]);
        snps.push_back(tok[0]);
        for (std::size_t j = 1; j < width; ++j) {
            auto v = parse_double(tok[j]);
            if (!v || !std::isfinite(*v))
                throw Error(ErrorKind::InvalidValue,
                            label + " line " + std::to_string(line_no) + ", column " + header[j] + ": '" + tok[j] + "'");
            values.push_back(*v);
        }
    }
    if (snps.empty()) throw Error(ErrorKind::EmptyMatrix, label + " has a header but no data rows");

    const auto n = static_cast<Eigen::Index>(snps.size());
    Eigen::MatrixXd beta(n, static_cast<Eigen::Index>(k));
    Eigen::VectorXd outcome(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) beta(i, static_cast<Eigen::Index>(j)) = values[static_cast<std::size_t>(i) * (k + 1) + j];
        outcome(i) = values[static_cast<std::size_t>(i) * (k + 1) + k];
    }
    return EffectMatrix(std::move(snps), std::vector<std::string>(header.begin() + 1, header.end() - 1), std::move(beta),
                        std::move(outcome));
}

inline EffectMatrix parse_matrix_file(const std::string &path) {
    auto in = open_input(path);
    return read_matrix(in, path);
}

/// Tab-delimited `.matrix` text. Values use the shortest exact scientific form,
/// so files written with three-decimal mantissas reproduce byte for byte.
inline std::string format_matrix(const EffectMatrix &m) {
    std::string out = "GENES";
    for (const auto &t : m.traits) out += "\t" + t;
    out += "\tBETA_GWAS\n";
    for (std::size_t i = 0; i < m.n(); ++i) {
        out += m.snps[i];
        for (std::size_t j = 0; j < m.k(); ++j)
            out += "\t" + format_sci(m.beta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        out += "\t" + format_sci(m.outcome_beta(static_cast<Eigen::Index>(i))) + "\n";
    }
    return out;
}

inline void write_text_file(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::FileNotFound, "cannot open file [" + path + "] to write");
    out << text;
    if (!out) throw Error(ErrorKind::FileNotFound, "failed writing [" + path + "]");
}

inline void write_matrix_file(const std::string &path, const EffectMatrix &m) { write_text_file(path, format_matrix(m)); }

// ---------------------------------------------------------------------------
// generic summary-statistics TSV

/// Header names of the columns holding each field. Optional columns
/// (chrom, pos, n, eaf) are skipped when absent from the file.
struct ColumnMap {
    std::string rsid = "SNP";
    std::string chrom = "CHR";
    std::string pos = "BP";
    std::string effect_allele = "A1";
    std::string other_allele = "A2";
    std::string beta = "BETA";
    std::string se = "SE";
    std::string pvalue = "P";
    std::string n = "N";
    std::string eaf = "EAF";
};

namespace detail {

struct RowReader {
    std::vector<std::string> header;
    std::map<std::string, std::size_t> col;
    std::string label;

    std::optional<std::size_t> find(const std::string &name) const {
        if (name.empty()) return std::nullopt;
        auto it = col.find(name);
        if (it == col.end()) return std::nullopt;
        return it->second;
    }
    std::size_t require(const std::string &name) const {
        auto c = find(name);
        if (!c) throw Error(ErrorKind::MissingColumn, label + ": no column named '" + name + "'");
        return *c;
    }
};

inline double field_double(const std::vector<std::string> &tok, std::size_t c, std::size_t row, const std::string &field,
                           const std::string &label) {
    auto v = parse_double(tok[c]);
    if (!v) throw Error(ErrorKind::InvalidValue, label + " row " + std::to_string(row) + ", field " + field + ": '" + tok[c] + "'");
    return *v;
}

} // namespace detail

/// Rows of a summary-statistics file, optionally split by a grouping column
/// (e.g. protein or CpG). Groups keep first-appearance order.
struct GroupedRecords {
    std::vector<std::string> groups;
    std::map<std::string, std::vector<SnpRecord>> records;
};

inline GroupedRecords read_assoc_rows(std::istream &in, const std::string &label, const ColumnMap &cols,
                                      const std::string &group_column) {
    detail::RowReader rr;
    rr.label = label;
    std::string line;
    while (rr.header.empty() && std::getline(in, line)) rr.header = split_ws(line);
    if (rr.header.empty()) throw Error(ErrorKind::MissingColumn, label + " has no header");
    for (std::size_t i = 0; i < rr.header.size(); ++i) rr.col.emplace(rr.header[i], i);

    const auto c_rsid = rr.require(cols.rsid);
    const auto c_ea = rr.require(cols.effect_allele);
    const auto c_oa = rr.require(cols.other_allele);
    const auto c_beta = rr.require(cols.beta);
    const auto c_se = rr.require(cols.se);
    const auto c_p = rr.require(cols.pvalue);
    const auto c_chr = rr.find(cols.chrom);
    const auto c_pos = rr.find(cols.pos);
    const auto c_n = rr.find(cols.n);
    const auto c_eaf = rr.find(cols.eaf);
    std::optional<std::size_t> c_group;
    if (!group_column.empty()) c_group = rr.require(group_column);

    GroupedRecords out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        auto tok = split_ws(line);
        if (tok.empty()) continue;
        ++row;
        if (tok.size() != rr.header.size())
            throw Error(ErrorKind::InvalidValue, label + " row " + std::to_string(row) + ": expected " +
                                                     std::to_string(rr.header.size()) + " fields, found " +
                                                     std::to_string(tok.size()));
        SnpRecord r;
        r.rsid = tok[c_rsid];
        r.effect_allele = upper(tok[c_ea]);
        r.other_allele = upper(tok[c_oa]);
        r.beta = detail::field_double(tok, c_beta, row, "beta", label);
        r.se = detail::field_double(tok, c_se, row, "se", label);
        r.pvalue = detail::field_double(tok, c_p, row, "pvalue", label);
        if (c_chr) r.chrom = tok[*c_chr];
        if (c_pos) {
            auto p = parse_int(tok[*c_pos]);
            if (!p || *p < 1) throw Error(ErrorKind::InvalidValue, label + " row " + std::to_string(row) + ", field pos");
            r.pos = *p;
        }
        if (c_n && tok[*c_n] != "NA") r.n = detail::field_double(tok, *c_n, row, "n", label);
        if (c_eaf && tok[*c_eaf] != "NA") r.eaf = detail::field_double(tok, *c_eaf, row, "eaf", label);
        auto bad = invalid_field(r);
        if (!bad.empty()) throw Error(ErrorKind::InvalidValue, label + " row " + std::to_string(row) + ", field " + bad);

        std::string g = c_group ? tok[*c_group] : std::string();
        auto [it, fresh] = out.records.try_emplace(g);
        if (fresh) out.groups.push_back(g);
        it->second.push_back(std::move(r));
    }
    return out;
}

inline AssocTable parse_assoc_table(const std::string &path, const ColumnMap &cols = {},
                                    TraitKind kind = TraitKind::exposure, std::string trait_name = {}) {
    auto in = open_input(path);
    auto rows = read_assoc_rows(in, path, cols, {});
    if (trait_name.empty()) trait_name = path;
    std::vector<SnpRecord> recs;
    if (!rows.groups.empty()) recs = std::move(rows.records.begin()->second);
    return AssocTable(std::move(trait_name), kind, std::move(recs));
}

/// One table per distinct value of `group_column`, in first-appearance order.
inline std::vector<AssocTable> parse_assoc_tables(const std::string &path, const std::string &group_column,
                                                  const ColumnMap &cols = {}, TraitKind kind = TraitKind::exposure) {
    auto in = open_input(path);
    auto rows = read_assoc_rows(in, path, cols, group_column);
    std::vector<AssocTable> out;
    out.reserve(rows.groups.size());
    for (const auto &g : rows.groups) out.emplace_back(g, kind, std::move(rows.records[g]));
    return out;
}

inline std::string format_assoc_table(const AssocTable &t, const ColumnMap &cols = {}) {
    std::string out = cols.rsid + "\t" + cols.chrom + "\t" + cols.pos + "\t" + cols.effect_allele + "\t" +
                      cols.other_allele + "\t" + cols.beta + "\t" + cols.se + "\t" + cols.pvalue + "\t" + cols.n +
                      "\t" + cols.eaf + "\n";
    for (const auto &r : t.records()) {
        out += r.rsid + "\t" + (r.chrom.empty() ? std::string("NA") : r.chrom) + "\t" + std::to_string(r.pos) + "\t" +
               r.effect_allele + "\t" + r.other_allele + "\t" + format_num(r.beta) + "\t" + format_num(r.se) + "\t" +
               format_num(r.pvalue) + "\t" + (r.n ? format_num(*r.n) : std::string("NA")) + "\t" +
               (r.eaf ? format_num(*r.eaf) : std::string("NA")) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// allele harmonization

enum class HarmonizeAction { kept, sign_flipped, dropped_palindromic, dropped_allele_mismatch };

inline const char *to_string(HarmonizeAction a) {
    switch (a) {
    case HarmonizeAction::kept: return "kept";
    case HarmonizeAction::sign_flipped: return "sign_flipped";
    case HarmonizeAction::dropped_palindromic: return "dropped_palindromic";
    case HarmonizeAction::dropped_allele_mismatch: return "dropped_allele_mismatch";
    }
    return "?";
}

/// How A/T and C/G SNPs are treated.
///  - drop: always drop them
///  - infer_from_eaf: drop when either frequency is missing or inside the
///    ambiguous band, otherwise resolve the strand from the frequencies
///  - keep: align on allele labels only
enum class PalindromePolicy { drop, infer_from_eaf, keep };

/// Exposure and outcome effects of one SNP aligned to the exposure's effect
/// allele. Any sign change is applied to the outcome side only.
struct HarmonizedPair {
    std::string rsid;
    double beta_exposure = 0.0;
    double se_exposure = 1.0;
    double beta_outcome = 0.0;
    double se_outcome = 1.0;
    HarmonizeAction action = HarmonizeAction::kept;
    std::string effect_allele;
    std::string other_allele;
    std::optional<double> eaf_exposure;
    std::optional<double> eaf_outcome;

    bool usable() const { return action == HarmonizeAction::kept || action == HarmonizeAction::sign_flipped; }
};

struct HarmonizeOptions {
    PalindromePolicy palindromes = PalindromePolicy::infer_from_eaf;
    double ambiguous_low = 0.42;
    double ambiguous_high = 0.58;
};

inline std::string complement(const std::string &allele) {
    std::string out = allele;
    for (auto &c : out) {
        switch (c) {
        case 'A': c = 'T'; break;
        case 'T': c = 'A'; break;
        case 'C': c = 'G'; break;
        case 'G': c = 'C'; break;
        default: break;
        }
    }
    return out;
}

inline bool is_palindromic(const std::string &a, const std::string &b) {
    return (a == "A" && b == "T") || (a == "T" && b == "A") || (a == "C" && b == "G") || (a == "G" && b == "C");
}

/// Aligns one outcome record against the exposure record of the same SNP.
inline HarmonizedPair harmonize_one(const SnpRecord &exp, const SnpRecord &out, const HarmonizeOptions &opt = {}) {
    HarmonizedPair hp;
    hp.rsid = exp.rsid;
    hp.beta_exposure = exp.beta;
    hp.se_exposure = exp.se;
    hp.beta_outcome = out.beta;
    hp.se_outcome = out.se;
    hp.effect_allele = exp.effect_allele;
    hp.other_allele = exp.other_allele;
    hp.eaf_exposure = exp.eaf;
    hp.eaf_outcome = out.eaf;

    const auto &e1 = exp.effect_allele, &o1 = exp.other_allele;
    const auto &e2 = out.effect_allele, &o2 = out.other_allele;
    const bool same = e2 == e1 && o2 == o1;
    const bool swapped = e2 == o1 && o2 == e1;

    auto flip = [&] {
        hp.beta_outcome = -out.beta;
        if (out.eaf) hp.eaf_outcome = 1.0 - *out.eaf;
        hp.action = HarmonizeAction::sign_flipped;
    };

    if (is_palindromic(e1, o1)) {
        if (!same && !swapped) {
            hp.action = HarmonizeAction::dropped_allele_mismatch;
            return hp;
        }
        switch (opt.palindromes) {
        case PalindromePolicy::drop:
            hp.action = HarmonizeAction::dropped_palindromic;
            return hp;
        case PalindromePolicy::keep:
            if (swapped) flip();
            return hp;
        case PalindromePolicy::infer_from_eaf: {
            auto ambiguous = [&](double f) { return f >= opt.ambiguous_low && f <= opt.ambiguous_high; };
            if (!exp.eaf || !out.eaf || ambiguous(*exp.eaf) || ambiguous(*out.eaf)) {
                hp.action = HarmonizeAction::dropped_palindromic;
                return hp;
            }
            // outcome frequency of the exposure's effect allele, assuming a shared strand
            const double f_out = same ? *out.eaf : 1.0 - *out.eaf;
            const bool strand_agrees = (*exp.eaf < 0.5) == (f_out < 0.5);
            // a label swap or a strand flip each reverse the allele; both cancel
            if (swapped != !strand_agrees) {
                flip();
                if (!strand_agrees) hp.eaf_outcome = 1.0 - f_out;
            } else if (!strand_agrees) {
                hp.eaf_outcome = 1.0 - f_out;
            }
            return hp;
        }
        }
    }

    if (same) return hp;
    if (swapped) {
        flip();
        return hp;
    }
    const auto ce2 = complement(e2), co2 = complement(o2);
    if (ce2 == e1 && co2 == o1) return hp;
    if (ce2 == o1 && co2 == e1) {
        flip();
        return hp;
    }
    hp.action = HarmonizeAction::dropped_allele_mismatch;
    return hp;
}

/// Pairs every exposure SNP that also appears in the outcome table, in
/// exposure order. Dropped SNPs stay in the result with their reason.
inline std::vector<HarmonizedPair> harmonize(const AssocTable &exposure, const AssocTable &outcome,
                                             const HarmonizeOptions &opt = {}) {
    std::vector<HarmonizedPair> out;
    for (const auto &rec : exposure.records()) {
        const auto *o = outcome.find(rec.rsid);
        if (!o) continue;
        out.push_back(harmonize_one(rec, *o, opt));
    }
    if (out.empty())
        throw Error(ErrorKind::NoOverlap,
                    "no SNPs shared between " + exposure.trait_name() + " and " + outcome.trait_name());
    return out;
}

inline std::vector<HarmonizedPair> usable_pairs(const std::vector<HarmonizedPair> &pairs) {
    std::vector<HarmonizedPair> out;
    std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out), [](const auto &p) { return p.usable(); });
    return out;
}

} // namespace xmr

#endif // XMR_SUMSTATS_HPP
