#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xmr/simgen.hpp"

using namespace xmr;

TEST(Simgen, Ar1Matrix) {
    EXPECT_EQ(ar1_matrix(4, 0.0), Eigen::MatrixXd::Identity(4, 4));
    auto c = ar1_matrix(4, 0.5);
    EXPECT_DOUBLE_EQ(c(0, 3), 0.125);
    EXPECT_DOUBLE_EQ(c(2, 1), 0.5);
}

TEST(Simgen, ZeroRhoGivesIdentityLd) {
    SimSpec spec;
    spec.ld_rho = 0.0;
    auto d = generate(spec);
    EXPECT_EQ(d.ld.r(), Eigen::MatrixXd::Identity(50, 50));
}

TEST(Simgen, ShapesAndNames) {
    auto d = generate({});
    EXPECT_EQ(d.effects.n(), 50u);
    EXPECT_EQ(d.effects.traits, (std::vector<std::string>{"gene1", "gene2", "gene3"}));
    EXPECT_EQ(d.ld.snps(), d.effects.snps);
    EXPECT_EQ(d.exposures.size(), 3u);
    EXPECT_EQ(d.outcome.size(), 50u);
    EXPECT_DOUBLE_EQ(d.outcome.records()[0].se, 1.0 / std::sqrt(1e5));
    EXPECT_EQ(d.pleiotropy, Eigen::VectorXd::Zero(50));
}

TEST(Simgen, SeedDeterminesOutput) {
    SimSpec a;
    a.seed = 5;
    auto x = generate(a), y = generate(a);
    EXPECT_EQ(x.effects.beta, y.effects.beta);
    EXPECT_EQ(x.effects.outcome_beta, y.effects.outcome_beta);
    a.seed = 6;
    EXPECT_NE(generate(a).effects.beta, x.effects.beta);
}

TEST(Simgen, InvalidSpecs) {
    SimSpec s;
    s.true_alpha = {0.1};
    EXPECT_THROW(generate(s), Error);
    s = {};
    s.ld_rho = 1.0;
    EXPECT_THROW(generate(s), Error);
}

// Sampling noise sqrt(N)(E - E_true) has covariance C.
TEST(Simgen, NoiseCovarianceConverges) {
    SimSpec spec;
    spec.n_snps = 5;
    spec.k_exposures = 1;
    spec.true_alpha = {0.0};
    spec.ld_rho = 0.6;
    spec.n_qtl = 1e4;
    const int reps = 10000;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(5, 5);
    for (int r = 0; r < reps; ++r) {
        spec.seed = static_cast<std::uint64_t>(r + 1);
        auto d = generate(spec);
        Eigen::VectorXd noise = (d.effects.beta.col(0) - d.true_effects.col(0)) * std::sqrt(spec.n_qtl);
        acc += noise * noise.transpose();
    }
    acc /= reps;
    EXPECT_LT((acc - ar1_matrix(5, 0.6)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Simgen, WritesParsableFiles) {
    testutil::TempDir dir;
    SimSpec spec;
    auto d = generate(spec);
    write_sim_files(dir.file("s"), d, spec);
    auto m = parse_matrix_file(dir.file("s.matrix"));
    EXPECT_EQ(m.snps, d.effects.snps);
    EXPECT_LT((m.beta - d.effects.beta).cwiseAbs().maxCoeff(), 1e-15);
    auto ld = parse_ld_file(dir.file("s.ld"), m.snps);
    EXPECT_LT((ld.r() - d.ld.r()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(testutil::slurp(dir.file("s.truth")), "gene\talpha\ngene1\t0.2\ngene2\t-0.1\ngene3\t0\n");
}
