#include <gtest/gtest.h>

#include <set>

#include "gmra/build.hpp"
#include "gmra/eval.hpp"
#include "oracles.hpp"

using namespace gmra;

namespace {

// Smallest proper subtree holding every qualifying node, by enumeration.
template <typename Tree>
std::vector<bool> exhaustive_smallest(const oracle::SmallTree& t, const std::vector<bool>& q) {
    std::vector<bool> best;
    Index best_size = kNone;
    oracle::for_each_proper_subtree(t, [&](const std::vector<bool>& in) {
        for (Index v = 0; v < t.size(); ++v)
            if (q[v] && !in[v]) return;
        const Index size = static_cast<Index>(std::count(in.begin(), in.end(), true));
        if (best_size == kNone || size < best_size) {
            best_size = size;
            best = in;
        }
    });
    return best;
}

oracle::SmallTree as_small(const TreeTopology& topo) {
    oracle::SmallTree t;
    t.parents = topo.parents;
    t.kids = topo.child_lists;
    return t;
}

GmraModel z_model(int d, Index n, std::uint64_t seed, int max_levels = 40) {
    BuildConfig c;
    c.d = static_cast<Index>(d);
    c.seed = seed;
    c.max_levels = max_levels;
    return build_model(synth_manifold({ManifoldFamily::Z, d, 0.0, seed}, n), c);
}

}  // namespace

TEST(Threshold, ClosedForm) {
    EXPECT_NEAR(tau_n(100, 1.0), 0.214597, 1e-6);
    EXPECT_NEAR(tau_n(100, 1.0, 5), 4.551077, 1e-6);
    EXPECT_EQ(tau_n(12345, 0.0), 0.0);
    EXPECT_NEAR(tau_n(1e4, 2.0), 2.0 * 0.0303485, 1e-6);
    EXPECT_THROW(tau_n(1, 1.0), UsageError);
}

TEST(Subtree, HandBuiltThreeLevels) {
    // root -> A, B; A -> A1, A2; B -> B1
    TreeTopology t;
    const Index root = t.add(kNone, 0), a = t.add(root, 1), b = t.add(root, 1);
    const Index a1 = t.add(a, 2), a2 = t.add(a, 2), b1 = t.add(b, 2);
    const std::vector<double> delta = {1.0, 0.3, 0.0, 0.0, 0.0, 0.0};
    for (double tau : {2.0, 1.0, 0.5, 0.3, 0.1, 0.0}) {
        std::vector<bool> q(t.size());
        for (Index v = 0; v < t.size(); ++v) q[v] = delta[v] >= tau;
        const auto got = smallest_subtree(t, q);
        EXPECT_EQ(got, exhaustive_smallest<TreeTopology>(as_small(t), q)) << "tau " << tau;
        const auto leaves = outer_leaves(t, got);
        if (tau > 1.0) EXPECT_EQ(leaves, (std::vector<Index>{a, b}));
        if (tau == 1.0 || tau == 0.5) EXPECT_EQ(leaves, (std::vector<Index>{a, b}));
        if (tau == 0.3 || tau == 0.1) EXPECT_EQ(leaves, (std::vector<Index>{b, a1, a2}));
        if (tau == 0.0) EXPECT_EQ(leaves, (std::vector<Index>{a1, a2, b1}));
    }
}

TEST(Subtree, RandomTreesMatchEnumeration) {
    Rng rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        const auto t = oracle::random_tree(1 + rng.below(16), rng);
        std::vector<bool> q(t.size());
        for (Index v = 0; v < t.size(); ++v) q[v] = rng.uniform() < 0.2;
        const auto got = smallest_subtree(t, q);
        ASSERT_EQ(got, exhaustive_smallest<oracle::SmallTree>(t, q));
        // outer leaves tile the tree: every leaf of the full tree sits under exactly one of them
        const auto leaves = outer_leaves(t, got);
        std::set<Index> ls(leaves.begin(), leaves.end());
        for (Index v = 0; v < t.size(); ++v) {
            if (!t.children(v).empty()) continue;
            int hits = 0;
            for (Index u = v; u != kNone; u = t.parent(u)) hits += ls.count(u) ? 1 : 0;
            ASSERT_EQ(hits, 1);
        }
    }
}

TEST(Truncate, SmallModelMatchesEnumeration) {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const auto m = z_model(1, 60, seed, 3);
        const auto topo = data_master_topology(m);
        if (topo.size() > 20) continue;
        for (auto kind : {CriterionKind::scale_dependent_l2, CriterionKind::scale_independent_linf}) {
            for (double tau : tau_grid(m, kind, 6)) {
                std::vector<bool> q(topo.size());
                for (Index v = 0; v < topo.size(); ++v) {
                    const auto& s = m.summary(topo.cell_of[v]);
                    const double val = kind == CriterionKind::scale_dependent_l2 ? s.delta : s.delta_inf;
                    const double bar = kind == CriterionKind::scale_dependent_l2 ? std::pow(0.5, topo.scales[v]) * tau : tau;
                    q[v] = val >= bar;
                }
                const auto want = exhaustive_smallest<oracle::SmallTree>(as_small(topo), q);
                const auto t = truncate(m, {kind, tau});
                std::vector<Index> want_cells;
                for (Index v = 0; v < topo.size(); ++v)
                    if (want[v]) want_cells.push_back(topo.cell_of[v]);
                ASSERT_EQ(t.subtree, want_cells);
                ++checked;
            }
        }
    }
    EXPECT_GT(checked, 20);
}

TEST(Truncate, ExtremeThresholds) {
    const auto m = z_model(2, 4000, 3);
    const auto topo = data_master_topology(m);
    const auto big = truncate(m, {CriterionKind::scale_dependent_l2, 1e9});
    EXPECT_EQ(big.subtree, std::vector<Index>{0});
    std::vector<Index> kids;
    for (Index k : m.tree.children(0))
        if (m.has_summary(k)) kids.push_back(k);
    EXPECT_EQ(big.partition.cells, kids);

    const auto zero = truncate(m, {CriterionKind::scale_dependent_l2, 0.0});
    EXPECT_EQ(zero.subtree.size(), topo.size());
    std::vector<Index> leaves;
    for (Index v = 0; v < topo.size(); ++v)
        if (topo.children(v).empty()) leaves.push_back(topo.cell_of[v]);
    EXPECT_EQ(zero.partition.cells, leaves);
    EXPECT_THROW(truncate(m, {CriterionKind::scale_dependent_l2, -1.0}), UsageError);
    EXPECT_THROW(truncate(m, {CriterionKind::orthogonal, 1.0}), UsageError);
}

// Partition cells share no training point. A point whose chain ends inside the truncated subtree
// (above every partition cell) is projected in its deepest cell. The training error computed cell by
// cell from member lists equals the chain-based evaluation.
TEST(Partition, TilesTheTrainingSetAndErrorIsPerCell) {
    const std::uint64_t seed = 5;
    const auto m = z_model(2, 6000, seed);
    const auto train = synth_manifold({ManifoldFamily::Z, 2, 0.0, seed}, 6000).subset(m.split.statistics_half);
    for (double tau : tau_grid(m, CriterionKind::scale_dependent_l2, 7)) {
        const auto part = truncate(m, {CriterionKind::scale_dependent_l2, tau}).partition;
        std::vector<int> owner(train.size(), 0);
        double sq = 0.0;
        for (Index c : part.cells) {
            const auto& s = m.summary(c);
            const Eigen::MatrixXd P = s.basis * s.basis.transpose();
            for (Index i : m.tree.cells[c].members) {
                ++owner[i];
                const Vector x = train.row(i).transpose();
                sq += (x - s.center - P * (x - s.center)).squaredNorm();
            }
        }
        const auto deepest = m.deepest_cells();
        Index stopped = 0;
        for (Index i = 0; i < train.size(); ++i) {
            ASSERT_LE(owner[i], 1);
            if (owner[i] == 1) continue;
            const Vector x = train.row(i).transpose();
            if (deepest[i] == kNone) {
                sq += (x - m.global_mean).squaredNorm();
                continue;
            }
            ++stopped;
            for (Index c = deepest[i]; c != kNone; c = m.tree.parent(c)) ASSERT_FALSE(part.in_partition[c]);
            sq += (x - project(m.summary(deepest[i]), x)).squaredNorm();
        }
        EXPECT_LT(stopped, train.size() / 10);
        EXPECT_NEAR(partition_l2(m, part, train), std::sqrt(sq / static_cast<double>(train.size())), 1e-12);
    }
}

TEST(Partition, UniformPartitionIsScaleJ) {
    const auto m = z_model(2, 4000, 9);
    const auto test = synth_manifold({ManifoldFamily::Z, 2, 0.0, 77}, 500);
    for (int j = m.tree.j_min(); j <= deepest_scale(m); ++j) {
        const auto part = uniform_partition(m, j);
        for (Index c : part.cells) EXPECT_LE(m.tree.cells[c].scale, j);
        EXPECT_NEAR(error_report(m, part, test).absolute_l2, error_report(m, j, test).absolute_l2, 1e-12) << j;
    }
}

TEST(Sweep, SizesGrowAsThresholdFalls) {
    const auto m = z_model(2, 6000, 11);
    const auto train = synth_manifold({ManifoldFamily::Z, 2, 0.0, 11}, 6000).subset(m.split.statistics_half);
    for (auto kind : {CriterionKind::scale_dependent_l2, CriterionKind::scale_independent_l2,
                      CriterionKind::scale_dependent_linf, CriterionKind::scale_independent_linf}) {
        const auto grid = tau_grid(m, kind, 12);
        for (Index i = 1; i < grid.size(); ++i) ASSERT_LT(grid[i], grid[i - 1]);
        const auto rows = partition_sweep(m, kind, grid, train);
        for (Index i = 1; i < rows.size(); ++i) {
            EXPECT_GE(rows[i].partition_size, rows[i - 1].partition_size);
            EXPECT_GE(rows[i].weighted_complexity, rows[i - 1].weighted_complexity);
        }
        // the full tree reproduces the finest training error
        const std::vector<double> zero{0.0};
        const auto full = partition_sweep(m, kind, zero, train);
        EXPECT_LE(full[0].train_l2, rows.back().train_l2 + 1e-12);
    }
    EXPECT_THROW(partition_sweep(m, CriterionKind::scale_dependent_l2, std::span<const double>{}, train), UsageError);
}

TEST(Encoding, AdaptiveCodesDecodeToTheProjection) {
    const auto m = z_model(2, 4000, 13);
    const auto test = synth_manifold({ManifoldFamily::Z, 2, 0.01, 78}, 500);
    const auto part = truncate(m, {CriterionKind::scale_dependent_l2, tau_n(static_cast<double>(m.n_train), 0.5)}).partition;
    for (Index i = 0; i < test.size(); ++i) {
        const Vector x = test.row(i).transpose();
        const auto e = encode(m, part, x);
        ASSERT_NEAR((decode(m, e) - adaptive_projector(m, part, x)).norm(), 0.0, 1e-10);
    }
}
