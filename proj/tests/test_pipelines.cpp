#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "xmr/pipelines.hpp"

using namespace xmr;

namespace {

ErrorKind kind_of(auto &&fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an xmr::Error";
    return ErrorKind::InvalidConfig;
}

SnpRecord snp(const std::string &rsid, const std::string &chrom, std::int64_t pos, double beta = 0.1, double se = 0.01,
              double p = 1e-20) {
    SnpRecord r;
    r.rsid = rsid;
    r.chrom = chrom;
    r.pos = pos;
    r.effect_allele = "A";
    r.other_allele = "C";
    r.beta = beta;
    r.se = se;
    r.pvalue = p;
    return r;
}

HarmonizedPair hp(const std::string &id, double bx, double by, double se_y) {
    HarmonizedPair p;
    p.rsid = id;
    p.beta_exposure = bx;
    p.beta_outcome = by;
    p.se_outcome = se_y;
    p.se_exposure = 0.01;
    return p;
}

MrEstimate est(double v) {
    MrEstimate e;
    e.estimate = v;
    return e;
}

std::set<std::string> proteins(int n) {
    std::set<std::string> out;
    for (int i = 0; i < n; ++i) out.insert("P" + std::to_string(i));
    return out;
}

} // namespace

TEST(CisTrans, WindowBoundaries) {
    GeneAnnotation g{"GENE", "1", 1'000'000, "PROT"};
    EXPECT_EQ(classify_cis_trans(snp("a", "1", 1'400'000), g), QtlLabel::cis);
    EXPECT_EQ(classify_cis_trans(snp("a", "1", 1'600'000), g), QtlLabel::trans);
    EXPECT_EQ(classify_cis_trans(snp("a", "1", 1'500'000), g), QtlLabel::cis);
    EXPECT_EQ(classify_cis_trans(snp("a", "1", 500'000), g), QtlLabel::cis);
    EXPECT_EQ(classify_cis_trans(snp("a", "1", 1'500'001), g), QtlLabel::trans);
    EXPECT_EQ(classify_cis_trans(snp("a", "1", 499'999), g), QtlLabel::trans);
    EXPECT_EQ(classify_cis_trans(snp("a", "2", 1'000'000), g), QtlLabel::trans);
    EXPECT_EQ(classify_cis_trans(snp("a", "chr1", 1'000'000), g), QtlLabel::cis);
}

TEST(CisTrans, UnknownProtein) {
    AnnotationTable t({{"GENE", "1", 100, "PROT"}});
    EXPECT_EQ(t.at("PROT").gene, "GENE");
    EXPECT_EQ(kind_of([&] { t.at("OTHER"); }), ErrorKind::UnknownProtein);
}

TEST(Mhc, BoundariesInclusive) {
    EXPECT_TRUE(in_mhc(snp("a", "6", 30'000'000)));
    EXPECT_TRUE(in_mhc(snp("a", "6", 26'000'000)));
    EXPECT_TRUE(in_mhc(snp("a", "6", 34'000'000)));
    EXPECT_TRUE(in_mhc(snp("a", "chr6", 34'000'000)));
    EXPECT_FALSE(in_mhc(snp("a", "6", 25'999'999)));
    EXPECT_FALSE(in_mhc(snp("a", "6", 34'000'001)));
    EXPECT_FALSE(in_mhc(snp("a", "7", 30'000'000)));
}

TEST(Mhc, FilterIsIdempotent) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::int64_t> pos(20'000'000, 40'000'000);
    std::vector<SnpRecord> v;
    for (int i = 0; i < 300; ++i) v.push_back(snp("rs" + std::to_string(i), i % 3 ? "6" : "5", pos(rng)));
    auto once = mhc_filter(v);
    auto twice = mhc_filter(once);
    ASSERT_EQ(once.size(), twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].rsid, twice[i].rsid);
    EXPECT_LT(once.size(), v.size());
    for (const auto &r : once) EXPECT_FALSE(in_mhc(r));
}

TEST(Bonferroni, ThresholdIsAlphaOverTests) {
    std::vector<SnpRecord> v{snp("a", "1", 1, 0.1, 0.01, 0.05 / 100), snp("b", "1", 2, 0.1, 0.01, 0.05 / 100 * 1.0001)};
    auto kept = bonferroni_filter(v, 100);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].rsid, "a");
}

TEST(Pleiotropy, ThresholdAndGroups) {
    std::map<std::string, std::set<std::string>> m{{"four", proteins(4)}, {"five", proteins(5)}};
    auto r = pleiotropy_filter(m, {});
    EXPECT_EQ(r.retained, std::vector<std::string>{"four"});
    PathwayGroups g;
    g.groups.push_back({"partial", proteins(4)});
    EXPECT_EQ(pleiotropy_filter(m, g).retained, std::vector<std::string>{"four"});
    g.groups.push_back({"pathway", proteins(6)});
    r = pleiotropy_filter(m, g);
    EXPECT_EQ(r.retained, (std::vector<std::string>{"five", "four"}));
    for (const auto &a : r.audit)
        if (a.snp == "five") {
            EXPECT_EQ(a.rule, PleiotropyRule::vertical_pleiotropy);
            EXPECT_EQ(a.group, "pathway");
        }
    PleiotropyOptions majority;
    majority.majority = true;
    PathwayGroups partial;
    partial.groups.push_back({"partial", proteins(3)});
    EXPECT_EQ(pleiotropy_filter(m, partial, majority).retained.size(), 2u);
    EXPECT_EQ(pleiotropy_filter(m, partial).retained.size(), 1u);
}

TEST(Pleiotropy, AddingGroupsNeverRemoves) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> count(1, 9), prot(0, 11);
    for (int t = 0; t < 50; ++t) {
        std::map<std::string, std::set<std::string>> m;
        for (int s = 0; s < 20; ++s) {
            std::set<std::string> ps;
            for (int c = count(rng); c > 0; --c) ps.insert("P" + std::to_string(prot(rng)));
            m["rs" + std::to_string(s)] = ps;
        }
        PathwayGroups g;
        auto before = pleiotropy_filter(m, g).retained;
        for (int k = 0; k < 4; ++k) {
            std::set<std::string> grp;
            for (int c = 0; c < 8; ++c) grp.insert("P" + std::to_string(prot(rng)));
            g.groups.push_back({"g" + std::to_string(k), grp});
            auto after = pleiotropy_filter(m, g).retained;
            EXPECT_TRUE(std::includes(after.begin(), after.end(), before.begin(), before.end()));
            before = after;
        }
    }
}

TEST(ProteinMr, RowCountsFollowInstrumentCount) {
    std::vector<SnpRecord> out_recs;
    InstrumentSet set{"PROT", {}};
    for (int i = 0; i < 4; ++i) {
        auto r = snp("rs" + std::to_string(i), "1", 1000 * (i + 1), 0.1 + 0.02 * i);
        set.snps.push_back({r, i == 0 ? QtlLabel::cis : QtlLabel::trans, {}});
        out_recs.push_back(snp(r.rsid, "1", r.pos, 0.03 * (i + 1), 0.01));
    }
    AssocTable outcome("y", TraitKind::gwas_outcome, out_recs);
    auto cis = protein_mr("PROT", set, outcome, MrMode::cis_only);
    ASSERT_EQ(cis.size(), 1u);
    EXPECT_EQ(cis[0].method, MrMethod::wald_ratio);
    auto two = set;
    two.snps.resize(2);
    auto ivw_only = protein_mr("PROT", two, outcome, MrMode::cis_plus_trans);
    ASSERT_EQ(ivw_only.size(), 1u);
    EXPECT_EQ(ivw_only[0].method, MrMethod::ivw);
    auto all = protein_mr("PROT", set, outcome, MrMode::cis_plus_trans);
    ASSERT_EQ(all.size(), 4u);
    EXPECT_EQ(all[0].method, MrMethod::ivw);
    EXPECT_EQ(all[1].method, MrMethod::egger_slope);
    EXPECT_EQ(all[2].method, MrMethod::egger_intercept);
    EXPECT_EQ(all[3].method, MrMethod::weighted_median);
    EXPECT_EQ(protein_mr("PROT", two, outcome, MrMode::trans_only).at(0).method, MrMethod::wald_ratio);
    auto cis_only = set;
    cis_only.snps.resize(1);
    EXPECT_EQ(kind_of([&] { protein_mr("PROT", cis_only, outcome, MrMode::trans_only); }), ErrorKind::NoInstruments);
}

TEST(DirectionConsistency, Examples) {
    using M = MrMode;
    EXPECT_EQ(direction_consistency({{M::cis_only, est(0.3)}, {M::cis_plus_trans, est(0.1)}, {M::trans_only, est(0.2)}}), true);
    EXPECT_EQ(direction_consistency({{M::cis_only, est(0.3)}, {M::cis_plus_trans, est(-0.1)}, {M::trans_only, est(0.2)}}), false);
    EXPECT_EQ(direction_consistency({{M::cis_only, est(0.3)}, {M::cis_plus_trans, est(0.0)}}), false);
    EXPECT_FALSE(direction_consistency({{M::cis_only, est(0.3)}}).has_value());
}

TEST(DirectionConsistency, GlobalSignFlipInvariant) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> z;
    for (int t = 0; t < 200; ++t) {
        std::map<MrMode, MrEstimate> a, b;
        for (MrMode m : {MrMode::cis_only, MrMode::cis_plus_trans, MrMode::trans_only}) {
            const double v = t % 7 == 0 ? 0.0 : z(rng) + (t % 2 ? 2.0 : 0.0);
            a[m] = est(v);
            b[m] = est(-v);
        }
        EXPECT_EQ(direction_consistency(a), direction_consistency(b));
    }
}

// z = 3.29 gives p ~ 0.001, z = 1.28 gives p ~ 0.2.
TEST(Mediation, JointSignificanceTruthTable) {
    const std::vector<HarmonizedPair> strong1{hp("a", 0.1, 0.0329, 0.01)}, weak1{hp("a", 0.1, 0.0128, 0.01)};
    const std::vector<HarmonizedPair> strong2{hp("b", 0.1, 0.0329, 0.01)}, weak2{hp("b", 0.1, 0.0128, 0.01)};
    EXPECT_TRUE(two_step_mediation(strong1, strong2, 0.05).is_mediator);
    EXPECT_FALSE(two_step_mediation(strong1, weak2, 0.05).is_mediator);
    EXPECT_FALSE(two_step_mediation(weak1, strong2, 0.05).is_mediator);
    EXPECT_FALSE(two_step_mediation(weak1, weak2, 0.05).is_mediator);
    auto r = two_step_mediation(strong1, strong2, 0.05);
    EXPECT_LT(r.step1.pvalue, 0.0011);
    EXPECT_GT(r.step1.pvalue, 0.0009);
    EXPECT_FALSE(r.overlapping_instruments);
    EXPECT_TRUE(two_step_mediation(strong1, strong1, 0.05).overlapping_instruments);
}

TEST(Mediation, ProductAndSobelSe) {
    auto r = two_step_mediation({hp("a", 0.2, 0.1, 0.01)}, {hp("b", 0.5, 0.2, 0.02)});
    EXPECT_DOUBLE_EQ(r.step1.estimate, 0.5);
    EXPECT_DOUBLE_EQ(r.step2.estimate, 0.4);
    EXPECT_NEAR(r.indirect_effect, 0.2, 1e-15);
    const double se1 = 0.05, se2 = 0.04;
    EXPECT_NEAR(r.indirect_se, std::sqrt(0.25 * se2 * se2 + 0.16 * se1 * se1), 1e-15);
}

TEST(Mediation, SeAgreesWithMonteCarlo) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> z;
    for (auto [t1, s1, t2, s2] : {std::array<double, 4>{0.5, 0.1, 0.4, 0.08}, {-0.3, 0.05, 0.8, 0.2}, {1.2, 0.3, -0.2, 0.05}}) {
        auto r = two_step_mediation({hp("a", 1.0, t1, s1)}, {hp("b", 1.0, t2, s2)});
        double sum = 0, sum2 = 0;
        const int draws = 200000;
        for (int i = 0; i < draws; ++i) {
            const double v = (t1 + s1 * z(rng)) * (t2 + s2 * z(rng));
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / draws, sd = std::sqrt(sum2 / draws - mean * mean);
        EXPECT_LT(std::fabs(r.indirect_se - sd) / sd, 0.10);
    }
}

TEST(Mediation, RunOverCpgSites) {
    AssocTable exposure("x", TraitKind::exposure, {snp("e1", "1", 100, 0.2, 0.01)});
    AssocTable cpg1("cg1", TraitKind::methylation, {snp("e1", "1", 100, 0.1, 0.01), snp("m1", "2", 100, 0.3, 0.01, 1e-10)});
    AssocTable cpg2("cg2", TraitKind::methylation, {snp("e1", "1", 100, 0.1, 0.01, 0.5)});
    AssocTable outcome("y", TraitKind::gwas_outcome, {snp("m1", "2", 100, 0.06, 0.01)});
    auto rows = run_mediation(exposure, {cpg1, cpg2}, outcome);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].status, "ok");
    EXPECT_TRUE(rows[0].result.is_mediator);
    EXPECT_NEAR(rows[0].result.indirect_effect, 0.5 * 0.2, 1e-12);
    EXPECT_NE(rows[1].status, "ok");
    const auto text = format_mediation(rows);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

namespace {

struct Panel {
    std::vector<AssocTable> pqtl;
    AssocTable outcome;
    AnnotationTable annotation;
};

// P1 on chr1 (TSS 1 Mb) with a cis pQTL, two trans pQTLs, an MHC pQTL and a
// weak SNP. P2 on chr2 shares one trans pQTL and has its own cis pQTL.
Panel toy_panel() {
    Panel p;
    p.pqtl.emplace_back("P1", TraitKind::pqtl,
                        std::vector<SnpRecord>{snp("c1", "1", 1'200'000, 0.20, 0.01, 1e-30), snp("t1", "2", 5'000'000, 0.10, 0.01, 1e-20),
                                               snp("t2", "3", 9'000'000, 0.15, 0.01, 1e-15), snp("h1", "6", 30'000'000, 0.3, 0.01, 1e-40),
                                               snp("w1", "4", 1'000, 0.01, 0.01, 0.3)});
    p.pqtl.emplace_back("P2", TraitKind::pqtl,
                        std::vector<SnpRecord>{snp("c2", "2", 7'500'000, -0.2, 0.01, 1e-25), snp("t1", "2", 5'000'000, 0.1, 0.01, 1e-12)});
    std::vector<SnpRecord> out;
    for (auto [id, chrom, pos, b] : std::vector<std::tuple<std::string, std::string, std::int64_t, double>>{
             {"c1", "1", 1'200'000, 0.061}, {"t1", "2", 5'000'000, 0.029}, {"t2", "3", 9'000'000, 0.046},
             {"h1", "6", 30'000'000, 0.5}, {"w1", "4", 1'000, 0.0}, {"c2", "2", 7'500'000, 0.05}})
        out.push_back(snp(id, chrom, pos, b, 0.005));
    p.outcome = AssocTable("y", TraitKind::gwas_outcome, out);
    p.annotation = AnnotationTable({{"G1", "1", 1'000'000, "P1"}, {"G2", "2", 7'000'000, "P2"}});
    return p;
}

} // namespace

TEST(PqtlPipeline, EndToEnd) {
    auto p = toy_panel();
    auto rep = run_pqtl_pipeline(p.pqtl, p.outcome, p.annotation, {}, nullptr);
    EXPECT_DOUBLE_EQ(rep.bonferroni_threshold, 0.05 / 7);
    ASSERT_EQ(rep.instruments.size(), 2u);
    EXPECT_EQ(rep.instruments[0].snps.size(), 3u); // h1 in MHC, w1 not significant
    std::map<std::string, int> rows_per;
    for (const auto &r : rep.rows) ++rows_per[r.protein + "/" + to_string(r.mode)];
    EXPECT_EQ(rows_per["P1/cis_only"], 1);
    EXPECT_EQ(rows_per["P1/cis_plus_trans"], 4);
    EXPECT_EQ(rows_per["P1/trans_only"], 1);
    EXPECT_EQ(rows_per["P2/cis_only"], 1);
    EXPECT_EQ(rows_per["P2/cis_plus_trans"], 1);
    EXPECT_EQ(rows_per["P2/trans_only"], 1);
    for (const auto &r : rep.rows) {
        // P2: cis estimate negative, trans positive
        EXPECT_EQ(r.consistent, r.protein == "P1");
    }
    const auto text = format_pqtl_report(rep);
    EXPECT_EQ(text.substr(0, text.find('\n')), "protein\tmode\tmethod\testimate\tse\tp\tn_snps\tconsistent");
}

TEST(PqtlPipeline, JobsDoNotChangeOutput) {
    auto p = toy_panel();
    const auto a = format_pqtl_report(run_pqtl_pipeline(p.pqtl, p.outcome, p.annotation, {}, nullptr, {}, 1));
    const auto b = format_pqtl_report(run_pqtl_pipeline(p.pqtl, p.outcome, p.annotation, {}, nullptr, {}, 4));
    EXPECT_EQ(a, b);
}

TEST(PqtlPipeline, LeadPqtlAnchor) {
    auto p = toy_panel();
    PqtlPipelineConfig cfg;
    cfg.anchor = WindowAnchor::lead_pqtl;
    auto rep = run_pqtl_pipeline(p.pqtl, p.outcome, p.annotation, {}, nullptr, cfg);
    // P2's lead chr2 pQTL is c2 at 7.5 Mb; t1 at 5 Mb stays trans.
    for (const auto &ins : rep.instruments[1].snps)
        EXPECT_EQ(ins.label, ins.record.rsid == "c2" ? QtlLabel::cis : QtlLabel::trans);
}

TEST(PqtlPipeline, MissingAnnotation) {
    auto p = toy_panel();
    AnnotationTable partial({{"G1", "1", 1'000'000, "P1"}});
    EXPECT_EQ(kind_of([&] { run_pqtl_pipeline(p.pqtl, p.outcome, partial, {}, nullptr); }), ErrorKind::UnknownProtein);
}

TEST(PipelineFiles, AnnotationAndGroups) {
    testutil::TempDir dir;
    auto ann = parse_annotation(dir.write("a.tsv", "gene\tchrom\ttss\tprotein\nIL6\tchr7\t22727200\tIL6P\n"));
    EXPECT_EQ(ann.at("IL6P").tss, 22727200);
    auto g = parse_groups(dir.write("g.tsv", "pathway1\tA, B,C\n\nnet2\tD\n"));
    ASSERT_EQ(g.groups.size(), 2u);
    EXPECT_EQ(g.groups[0].second, (std::set<std::string>{"A", "B", "C"}));
    EXPECT_EQ(kind_of([&] { parse_annotation(dir.write("b.tsv", "gene\tchrom\tprotein\nX\t1\tY\n")); }), ErrorKind::MissingColumn);
    EXPECT_EQ(kind_of([&] { parse_groups(dir.write("h.tsv", "no tab here\n")); }), ErrorKind::InvalidValue);
}
