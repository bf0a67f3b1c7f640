#ifndef XMR_LD_HPP
#define XMR_LD_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "sumstats.hpp"
#include "util.hpp"

namespace xmr {

/// Signed LD correlations between an ordered list of SNPs.
class LdMatrix {
public:
    static constexpr double kTolerance = 1e-8;

    LdMatrix() = default;

    LdMatrix(std::vector<std::string> snps, Eigen::MatrixXd r) : snps_(std::move(snps)), r_(std::move(r)) {
        const auto n = static_cast<Eigen::Index>(snps_.size());
        if (r_.rows() != n || r_.cols() != n)
            throw Error(ErrorKind::DimensionMismatch, "LD matrix is " + std::to_string(r_.rows()) + "x" +
                                                          std::to_string(r_.cols()) + " for " +
                                                          std::to_string(snps_.size()) + " SNPs");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::fabs(r_(i, i) - 1.0) > kTolerance)
                throw Error(ErrorKind::OutOfRange, "LD diagonal entry " + std::to_string(i + 1) + " is " + format_num(r_(i, i)));
            for (Eigen::Index j = 0; j < n; ++j) {
                const double v = r_(i, j);
                if (!std::isfinite(v) || v < -1.0 - kTolerance || v > 1.0 + kTolerance)
                    throw Error(ErrorKind::OutOfRange, "LD entry (" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                                           ") = " + format_num(v) + " is outside [-1, 1]");
                if (j > i && std::fabs(v - r_(j, i)) > kTolerance)
                    throw Error(ErrorKind::NotSymmetric, "LD entries (" + std::to_string(i + 1) + "," +
                                                             std::to_string(j + 1) + ") and its transpose differ");
            }
        }
        index_.reserve(snps_.size());
        for (std::size_t i = 0; i < snps_.size(); ++i)
            if (!index_.emplace(snps_[i], i).second) throw Error(ErrorKind::DuplicateSnp, snps_[i] + " in LD matrix");
    }

    const std::vector<std::string> &snps() const { return snps_; }
    const Eigen::MatrixXd &r() const { return r_; }
    std::size_t size() const { return snps_.size(); }

    std::optional<std::size_t> index_of(const std::string &rsid) const {
        auto it = index_.find(rsid);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    double r2(std::size_t i, std::size_t j) const {
        const double v = r_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        return v * v;
    }

    /// Sub-matrix over `rsids`, in that order.
    LdMatrix subset(const std::vector<std::string> &rsids) const {
        std::vector<std::size_t> idx;
        idx.reserve(rsids.size());
        for (const auto &s : rsids) {
            auto i = index_of(s);
            if (!i) throw Error(ErrorKind::MissingLd, s + " is not in the LD reference");
            idx.push_back(*i);
        }
        Eigen::MatrixXd sub(idx.size(), idx.size());
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = 0; b < idx.size(); ++b)
                sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                    r_(static_cast<Eigen::Index>(idx[a]), static_cast<Eigen::Index>(idx[b]));
        return LdMatrix(rsids, std::move(sub));
    }

private:
    std::vector<std::string> snps_;
    Eigen::MatrixXd r_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct LdReadOptions {
    // The file holds r^2 rather than signed r. Entries are square-rooted and
    // the sign information is lost.
    bool values_are_r2 = false;
};

inline LdMatrix read_ld(std::istream &in, const std::string &label, const std::vector<std::string> &snps,
                        const LdReadOptions &opt = {}) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto tok = split_ws(line);
        if (tok.empty()) continue;
        std::vector<double> row;
        row.reserve(tok.size());
        for (const auto &t : tok) {
            auto v = parse_double(t);
            if (!v) throw Error(ErrorKind::InvalidValue, label + " line " + std::to_string(line_no) + ": '" + t + "'");
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    const std::size_t n = snps.size();
    if (rows.size() != n)
        throw Error(ErrorKind::DimensionMismatch, label + " has " + std::to_string(rows.size()) + " rows but " +
                                                      std::to_string(n) + " SNPs are expected");
    Eigen::MatrixXd r(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n)
            throw Error(ErrorKind::DimensionMismatch, label + " row " + std::to_string(i + 1) + " has " +
                                                          std::to_string(rows[i].size()) + " columns but " +
                                                          std::to_string(n) + " SNPs are expected");
        for (std::size_t j = 0; j < n; ++j) {
            double v = rows[i][j];
            if (opt.values_are_r2) {
                if (v < 0.0 || v > 1.0 + LdMatrix::kTolerance)
                    throw Error(ErrorKind::OutOfRange, label + ": r^2 entry " + format_num(v) + " outside [0, 1]");
                v = std::sqrt(std::min(v, 1.0));
            }
            r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return LdMatrix(snps, std::move(r));
}

inline LdMatrix parse_ld_file(const std::string &path, const std::vector<std::string> &snps, const LdReadOptions &opt = {}) {
    auto in = open_input(path);
    return read_ld(in, path, snps, opt);
}

inline std::string format_ld(const LdMatrix &ld) {
    std::string out;
    const auto &r = ld.r();
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        for (Eigen::Index j = 0; j < r.cols(); ++j) {
            if (j) out += '\t';
            out += format_num(r(i, j));
        }
        out += '\n';
    }
    return out;
}

inline void write_ld_file(const std::string &path, const LdMatrix &ld) { write_text_file(path, format_ld(ld)); }

/// Reads a one-rsid-per-line SNP list (first token of each line).
inline std::vector<std::string> parse_snp_list(const std::string &path) {
    auto in = open_input(path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto tok = split_ws(line);
        if (!tok.empty()) out.push_back(tok[0]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// clumping

struct ClumpParams {
    double clump_p1 = 5e-8;
    double clump_p2 = 5e-8;
    double clump_r2 = 0.01;
    double clump_kb = 1000.0;

    void validate() const {
        if (!(clump_p1 > 0.0) || !(clump_p2 > 0.0) || !(clump_kb > 0.0))
            throw Error(ErrorKind::InvalidConfig, "clump_p1, clump_p2 and clump_kb must be positive");
        if (!(clump_r2 > 0.0 && clump_r2 <= 1.0)) throw Error(ErrorKind::InvalidConfig, "clump_r2 must lie in (0, 1]");
    }
};

struct Clump {
    std::string index;
    std::vector<std::string> members; // excludes the index SNP
};

/// Greedy plink-style clumping. The smallest-p unclumped SNP with p <= clump_p1
/// becomes an index; every unclumped SNP on the same chromosome within
/// clump_kb with p <= clump_p2 and r^2 >= clump_r2 joins its clump. Ties in p
/// go to the smaller position, then the smaller rsid.
inline std::vector<Clump> clump(const std::vector<SnpRecord> &snps, const LdMatrix &ld, const ClumpParams &params = {}) {
    params.validate();
    const std::size_t n = snps.size();
    std::vector<std::size_t> ld_idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto li = ld.index_of(snps[i].rsid);
        if (!li) throw Error(ErrorKind::MissingLd, snps[i].rsid + " is not in the LD reference");
        ld_idx[i] = *li;
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(snps[a].pvalue, snps[a].pos, snps[a].rsid) < std::tie(snps[b].pvalue, snps[b].pos, snps[b].rsid);
    });

    // candidates per chromosome sorted by position, for the window scan
    std::unordered_map<std::string, std::vector<std::size_t>> by_chrom;
    for (std::size_t i = 0; i < n; ++i)
        if (snps[i].pvalue <= params.clump_p2) by_chrom[snps[i].chrom].push_back(i);
    for (auto &[chrom, v] : by_chrom)
        std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(snps[a].pos, snps[a].rsid) < std::tie(snps[b].pos, snps[b].rsid);
        });

    const auto window = static_cast<std::int64_t>(std::llround(params.clump_kb * 1000.0));
    std::vector<char> assigned(n, 0);
    std::vector<Clump> out;
    for (std::size_t idx : order) {
        const auto &lead = snps[idx];
        if (lead.pvalue > params.clump_p1) break;
        if (assigned[idx]) continue;
        assigned[idx] = 1;
        Clump c;
        c.index = lead.rsid;
        auto it = by_chrom.find(lead.chrom);
        if (it != by_chrom.end()) {
            const auto &cand = it->second;
            auto lo = std::lower_bound(cand.begin(), cand.end(), lead.pos - window,
                                       [&](std::size_t a, std::int64_t p) { return snps[a].pos < p; });
            std::vector<std::size_t> joined;
            for (auto jt = lo; jt != cand.end() && snps[*jt].pos <= lead.pos + window; ++jt) {
                const std::size_t j = *jt;
                if (assigned[j]) continue;
                if (ld.r2(ld_idx[idx], ld_idx[j]) >= params.clump_r2) joined.push_back(j);
            }
            // members listed in significance order
            std::sort(joined.begin(), joined.end(), [&](std::size_t a, std::size_t b) {
                return std::tie(snps[a].pvalue, snps[a].pos, snps[a].rsid) <
                       std::tie(snps[b].pvalue, snps[b].pos, snps[b].rsid);
            });
            for (std::size_t j : joined) {
                assigned[j] = 1;
                c.members.push_back(snps[j].rsid);
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

inline std::vector<Clump> clump(const AssocTable &assoc, const LdMatrix &ld, const ClumpParams &params = {}) {
    return clump(assoc.records(), ld, params);
}

inline std::vector<std::string> index_snps(const std::vector<Clump> &clumps) {
    std::vector<std::string> out;
    out.reserve(clumps.size());
    for (const auto &c : clumps) out.push_back(c.index);
    return out;
}

} // namespace xmr

#endif // XMR_LD_HPP
