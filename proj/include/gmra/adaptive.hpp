#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmra.hpp"

namespace gmra {

/// kappa * sqrt(ln(n)^power / n).
inline double tau_n(double n, double kappa, int power = 1) {
    if (!(n >= 2.0)) throw UsageError("tau_n needs n >= 2");
    if (!(kappa >= 0.0)) throw UsageError("tau_n needs kappa >= 0");
    return kappa * std::sqrt(std::pow(std::log(n), power) / n);
}

enum class CriterionKind {
    scale_dependent_l2,
    scale_independent_l2,
    scale_dependent_linf,
    scale_independent_linf,
    orthogonal,
};

inline std::string_view to_string(CriterionKind k) {
    switch (k) {
        case CriterionKind::scale_dependent_l2: return "scale_dependent_l2";
        case CriterionKind::scale_independent_l2: return "scale_independent_l2";
        case CriterionKind::scale_dependent_linf: return "scale_dependent_linf";
        case CriterionKind::scale_independent_linf: return "scale_independent_linf";
        case CriterionKind::orthogonal: return "orthogonal";
    }
    return "?";
}

inline bool scale_dependent(CriterionKind k) {
    return k == CriterionKind::scale_dependent_l2 || k == CriterionKind::scale_dependent_linf ||
           k == CriterionKind::orthogonal;
}

struct RefinementCriterion {
    CriterionKind kind = CriterionKind::scale_dependent_l2;
    double tau = 0.0;
};

/// Plain rooted tree; nodes are 0..size()-1 with the root at 0.
struct TreeTopology {
    std::vector<Index> parents;
    std::vector<std::vector<Index>> child_lists;
    std::vector<int> scales;
    std::vector<Index> cell_of;  // tree cell id per node when built from a model

    Index size() const { return parents.size(); }
    Index root() const { return 0; }
    Index parent(Index v) const { return parents[v]; }
    const std::vector<Index>& children(Index v) const { return child_lists[v]; }

    /// Appends a node; parents must precede children.
    Index add(Index parent, int scale) {
        const Index v = parents.size();
        parents.push_back(parent);
        child_lists.emplace_back();
        scales.push_back(scale);
        if (parent != kNone) child_lists[parent].push_back(v);
        return v;
    }
};

/// The data master tree as a compact topology (nodes in cell-id order).
inline TreeTopology data_master_topology(const GmraModel& model) {
    TreeTopology topo;
    std::vector<Index> node_of(model.tree.size(), kNone);
    for (Index c = 0; c < model.tree.size(); ++c) {
        if (!model.has_summary(c)) continue;
        const Index p = model.tree.parent(c);
        node_of[c] = topo.add(p == kNone ? kNone : node_of[p], model.tree.cells[c].scale);
        topo.cell_of.push_back(c);
    }
    return topo;
}

/// Smallest proper subtree containing every qualifying node: the root plus all their root paths.
template <typename Tree>
std::vector<bool> smallest_subtree(const Tree& tree, const std::vector<bool>& qualifies) {
    std::vector<bool> in(tree.size(), false);
    in[tree.root()] = true;
    for (Index v = 0; v < tree.size(); ++v) {
        if (!qualifies[v]) continue;
        for (Index u = v; u != kNone && !in[u]; u = tree.parent(u)) in[u] = true;
    }
    return in;
}

/// Outer leaves of a proper subtree: children outside it, plus its own nodes that have no children at all.
template <typename Tree>
std::vector<Index> outer_leaves(const Tree& tree, const std::vector<bool>& subtree) {
    std::vector<Index> out;
    for (Index v = 0; v < tree.size(); ++v) {
        if (!subtree[v]) continue;
        const auto& ch = tree.children(v);
        if (ch.empty()) out.push_back(v);
        for (Index c : ch)
            if (!subtree[c]) out.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct Partition {
    std::vector<Index> cells;        // tree cell ids, ascending
    std::vector<bool> in_partition;  // per tree cell
    std::string provenance;
    double tau = 0.0;
    double weighted_complexity = 0.0;  // sum over the truncated subtree of gamma^(2j)
    double leaf_complexity = 0.0;      // the same sum over the partition cells only
    Index subtree_size = 0;
    bool ortho = false;  // project with the orthogonal-variant bases

    Index size() const { return cells.size(); }
};

inline Partition make_partition(const GmraModel& model, const TreeTopology& topo, const std::vector<bool>& subtree) {
    Partition part;
    part.in_partition.assign(model.tree.size(), false);
    for (Index v : outer_leaves(topo, subtree)) {
        part.cells.push_back(topo.cell_of[v]);
        part.in_partition[topo.cell_of[v]] = true;
        part.leaf_complexity += std::pow(model.tree.gamma(), 2.0 * topo.scales[v]);
    }
    std::sort(part.cells.begin(), part.cells.end());
    for (Index v = 0; v < topo.size(); ++v) {
        if (!subtree[v]) continue;
        ++part.subtree_size;
        part.weighted_complexity += std::pow(model.tree.gamma(), 2.0 * topo.scales[v]);
    }
    return part;
}

inline double criterion_value(const CellSummary& s, CriterionKind kind) {
    switch (kind) {
        case CriterionKind::scale_dependent_l2:
        case CriterionKind::scale_independent_l2: return s.delta;
        case CriterionKind::scale_dependent_linf:
        case CriterionKind::scale_independent_linf: return s.delta_inf;
        case CriterionKind::orthogonal: return s.delta_ortho;
    }
    return 0.0;
}

struct Truncation {
    std::vector<Index> subtree;  // tree cell ids
    Partition partition;
};

/// Keeps every cell whose refinement quantity reaches gamma^j * tau (or tau when scale independent),
/// closes upward to a proper subtree and returns its outer leaves.
inline Truncation truncate(const GmraModel& model, const RefinementCriterion& crit, const TreeTopology& topo) {
    if (!(crit.tau >= 0.0)) throw UsageError("threshold must be >= 0");
    if (crit.kind == CriterionKind::orthogonal && !model.has_ortho)
        throw UsageError("orthogonal criterion needs a model built with the orthogonal variant");
    std::vector<bool> qualifies(topo.size(), false);
    for (Index v = 0; v < topo.size(); ++v) {
        const double value = criterion_value(model.summary(topo.cell_of[v]), crit.kind);
        const double bar = scale_dependent(crit.kind) ? std::pow(model.tree.gamma(), topo.scales[v]) * crit.tau : crit.tau;
        qualifies[v] = value >= bar;
    }
    const auto in = smallest_subtree(topo, qualifies);
    Truncation out;
    for (Index v = 0; v < topo.size(); ++v)
        if (in[v]) out.subtree.push_back(topo.cell_of[v]);
    out.partition = make_partition(model, topo, in);
    out.partition.provenance = "adaptive(" + std::string(to_string(crit.kind)) + ")";
    out.partition.tau = crit.tau;
    out.partition.ortho = crit.kind == CriterionKind::orthogonal;
    return out;
}

inline Truncation truncate(const GmraModel& model, const RefinementCriterion& crit) {
    return truncate(model, crit, data_master_topology(model));
}

/// Cells of scale j plus shallower data-master leaves; every point reaching scale j lands in one.
inline Partition uniform_partition(const GmraModel& model, int j, bool ortho = false) {
    const auto topo = data_master_topology(model);
    std::vector<bool> in(topo.size(), false);
    for (Index v = 0; v < topo.size(); ++v) in[v] = topo.scales[v] < j;
    in[0] = true;
    auto part = make_partition(model, topo, in);
    // A root that is itself finer than j: the partition is the root alone.
    if (j <= model.tree.j_min()) {
        part.cells = {topo.cell_of[0]};
        part.in_partition.assign(model.tree.size(), false);
        part.in_partition[topo.cell_of[0]] = true;
        part.subtree_size = 0;
        part.weighted_complexity = 0.0;
        part.leaf_complexity = std::pow(model.tree.gamma(), 2.0 * topo.scales[0]);
    }
    part.provenance = "uniform(" + std::to_string(j) + ")";
    part.ortho = ortho;
    return part;
}

/// Cell used for x: the partition cell on its chain, else the deepest chain cell; kNone for outliers.
inline Index partition_cell(const Partition& part, const std::vector<Index>& chain) {
    if (chain.empty()) return kNone;
    for (Index c : chain)
        if (part.in_partition[c]) return c;
    return chain.back();
}

template <typename Derived>
Index partition_cell(const GmraModel& model, const Partition& part, const Eigen::MatrixBase<Derived>& x) {
    return partition_cell(part, model.chain(x));
}

template <typename Derived>
Vector adaptive_projector(const GmraModel& model, const Partition& part, const Eigen::MatrixBase<Derived>& x) {
    const Vector v = x;
    const Index c = partition_cell(model, part, v);
    if (c == kNone) return model.global_mean;
    return part.ortho ? project_ortho(model.summary(c), v) : project(model.summary(c), v);
}

template <typename Derived>
Encoding encode(const GmraModel& model, const Partition& part, const Eigen::MatrixBase<Derived>& x) {
    const Vector v = x;
    return model.encode_in_cell(partition_cell(model, part, v), v, part.ortho);
}

inline Vector decode(const GmraModel& model, const Encoding& e, bool ortho = false) { return model.decode(e, ortho); }

struct SweepRow {
    double tau = 0.0;
    CriterionKind kind = CriterionKind::scale_dependent_l2;
    Index partition_size = 0;
    double weighted_complexity = 0.0;
    double leaf_complexity = 0.0;
    double train_l2 = 0.0;
    double test_l2 = std::numeric_limits<double>::quiet_NaN();
    double test_linf = std::numeric_limits<double>::quiet_NaN();
};

/// Root-mean-square distance from points to their partition approximation.
inline double partition_l2(const GmraModel& model, const Partition& part, const PointCloud& cloud,
                           const std::vector<std::vector<Index>>& chains, double* linf = nullptr) {
    double sum = 0.0;
    double worst = 0.0;
    for (Index i = 0; i < cloud.size(); ++i) {
        const Vector x = cloud.row(i).transpose();
        const Index c = partition_cell(part, chains[i]);
        Vector y = c == kNone ? model.global_mean
                              : (part.ortho ? project_ortho(model.summary(c), x) : project(model.summary(c), x));
        const double e = (x - y).squaredNorm();
        sum += e;
        worst = std::max(worst, e);
    }
    if (linf) *linf = std::sqrt(worst);
    return std::sqrt(sum / static_cast<double>(cloud.size()));
}

inline double partition_l2(const GmraModel& model, const Partition& part, const PointCloud& cloud,
                           double* linf = nullptr) {
    return partition_l2(model, part, cloud, compute_chains(model, cloud), linf);
}

/// One row per threshold; `train` is the statistics half the model was fitted on.
inline std::vector<SweepRow> partition_sweep(const GmraModel& model, CriterionKind kind, std::span<const double> taus,
                                             const PointCloud& train, const PointCloud* test = nullptr) {
    if (taus.empty()) throw UsageError("partition_sweep: empty threshold grid");
    const auto topo = data_master_topology(model);
    const auto train_chains = compute_chains(model, train);
    std::vector<std::vector<Index>> test_chains;
    if (test) test_chains = compute_chains(model, *test);
    std::vector<SweepRow> rows(taus.size());
    parallel_for(taus.size(), model.config.threads, [&](Index i) {
        const auto t = truncate(model, {kind, taus[i]}, topo);
        SweepRow& r = rows[i];
        r.tau = taus[i];
        r.kind = kind;
        r.partition_size = t.partition.size();
        r.weighted_complexity = t.partition.weighted_complexity;
        r.leaf_complexity = t.partition.leaf_complexity;
        r.train_l2 = partition_l2(model, t.partition, train, train_chains);
        if (test) r.test_l2 = partition_l2(model, t.partition, *test, test_chains, &r.test_linf);
    });
    return rows;
}

}  // namespace gmra
