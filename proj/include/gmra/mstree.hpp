#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "covertree.hpp"
#include "parallel.hpp"
#include "pointset.hpp"
#include "types.hpp"

namespace gmra {

/// simple: finest cells are Voronoi regions of the finest net, coarser cells are unions of children.
/// strict: cells grow from balls of radius radius(j)/4 around net members, Voronoi inside the parent.
enum class CellMode { simple, strict };

inline const char* to_string(CellMode m) { return m == CellMode::simple ? "simple" : "strict"; }

struct Cell {
    int scale = 0;
    Index k = 0;        // position in the net level
    Index center = 0;   // anchor row (net member)
    Index parent = kNone;
    std::vector<Index> children;
    std::vector<Index> members;  // statistics-half point indices
    bool kept = true;            // false once pruned from the data master tree
};

/// Cells {C_{j,k}} for j in [j_min, j_max], one per net member per level.
/// Cell ids are dense: scale-major, then net position.
class MultiscaleTree {
public:
    CellMode mode = CellMode::simple;
    Matrix anchors;  // construction-half coordinates; nets index these rows
    CoverNets nets;
    std::vector<Cell> cells;
    std::vector<Index> offsets;  // first cell id per scale
    std::vector<Index> outliers; // assigned indices that fell outside the root cell
    bool is_data_master = false;

    int j_min() const { return nets.j_min; }
    int j_max() const { return nets.j_max; }
    double gamma() const { return nets.gamma; }
    double radius(int j) const { return nets.radius(j); }
    /// Radius of the ball guaranteed to contain every member of a scale-j cell (3*2^-j at gamma=1/2).
    double outer_radius(int j) const { return radius(j) * (2.0 - gamma()) / (1.0 - gamma()); }
    double inner_radius(int j) const { return radius(j) / 4.0; }

    Index size() const { return cells.size(); }
    Index root() const { return 0; }
    Index id(int j, Index k) const { return offsets[static_cast<Index>(j - j_min())] + k; }
    Index num_at_scale(int j) const { return nets.level_size(j); }
    const Cell& cell(Index id) const { return cells[id]; }
    const double* center_ptr(Index id) const { return detail::row_ptr(anchors, cells[id].center); }
    Index dim() const { return static_cast<Index>(anchors.cols()); }

    // Tree-like interface shared with the generic subtree algorithms.
    Index parent(Index id) const { return cells[id].parent; }
    const std::vector<Index>& children(Index id) const { return cells[id].children; }

    /// Root-to-deepest chain of cell ids containing x (empty when x lies outside the root cell),
    /// descending no deeper than max_scale.
    std::vector<Index> locate(const double* x, int max_scale) const {
        return mode == CellMode::simple ? locate_simple(x, max_scale) : locate_strict(x, max_scale);
    }
    std::vector<Index> locate(const double* x) const { return locate(x, j_max()); }

    /// Chain cut at the first cell pruned from the data master tree.
    std::vector<Index> locate_kept(const double* x) const {
        auto chain = locate(x);
        auto it = std::find_if(chain.begin(), chain.end(), [&](Index c) { return !cells[c].kept; });
        chain.erase(it, chain.end());
        return chain;
    }

    /// Ancestor of `id` at scale j (j <= scale of id).
    Index ancestor(Index id, int j) const {
        while (cells[id].scale > j) id = cells[id].parent;
        return id;
    }

    void init_cells() {
        cells.clear();
        offsets.clear();
        for (int j = j_min(); j <= j_max(); ++j) {
            offsets.push_back(cells.size());
            for (Index k = 0; k < nets.level_size(j); ++k) {
                Cell c;
                c.scale = j;
                c.k = k;
                c.center = nets.members[k];
                cells.push_back(std::move(c));
            }
        }
    }

    void link_children() {
        for (auto& c : cells) c.children.clear();
        for (Index id = 0; id < cells.size(); ++id)
            if (cells[id].parent != kNone) cells[cells[id].parent].children.push_back(id);
    }

private:
    double dist(const double* x, Index id) const {
        return std::sqrt(detail::squared_distance(x, center_ptr(id), dim()));
    }

    std::vector<Index> chain_from_leaf(Index leaf) const {
        std::vector<Index> chain;
        for (Index c = leaf; c != kNone; c = cells[c].parent) chain.push_back(c);
        std::reverse(chain.begin(), chain.end());
        return chain;
    }

    std::vector<Index> locate_simple(const double* x, int max_scale) const {
        const auto [pos, d] = nearest_member(anchors, nets, x, max_scale);
        (void)d;
        auto chain = chain_from_leaf(id(max_scale, pos));
        Index keep = 0;
        while (keep < chain.size() && dist(x, chain[keep]) <= outer_radius(cells[chain[keep]].scale)) ++keep;
        chain.resize(keep);
        return chain;
    }

    /// Net members whose inner ball contains x, at most one per level, coarse to fine.
    std::vector<std::pair<int, Index>> ball_hits(const double* x, int max_scale) const {
        std::vector<std::pair<int, Index>> hits;
        std::vector<std::pair<Index, double>> frontier{{0, std::sqrt(detail::squared_distance(
                                                               x, detail::row_ptr(anchors, nets.members[0]), dim()))}};
        std::vector<std::pair<Index, double>> next;
        for (int l = j_min(); l <= max_scale; ++l) {
            const double ball = inner_radius(l);
            for (auto& [q, d] : frontier)
                if (d < ball) hits.emplace_back(l, q);
            if (l == max_scale) break;
            double reach = 0.0;
            for (int t = l; t < max_scale; ++t) reach += radius(t);
            next.clear();
            for (auto& [q, d] : frontier) {
                if (d >= ball + reach) continue;
                nets.for_each_child(l, q, [&](Index c) {
                    next.emplace_back(c, c == q ? d
                                               : std::sqrt(detail::squared_distance(
                                                     x, detail::row_ptr(anchors, nets.members[c]), dim())));
                });
            }
            std::swap(frontier, next);
        }
        return hits;
    }

    std::vector<Index> locate_strict(const double* x, int max_scale) const {
        const auto hits = ball_hits(x, max_scale);
        std::vector<Index> chain;
        const bool root_hit = !hits.empty() && hits.front().first == j_min();
        if (!root_hit && dist(x, root()) > outer_radius(j_min())) return chain;
        chain.push_back(root());
        for (int j = j_min(); j < max_scale; ++j) {
            const Index cur = chain.back();
            const auto& ch = cells[cur].children;
            if (ch.empty()) break;
            Index next = kNone;
            for (auto& [level, pos] : hits) {
                if (level < j + 1) continue;
                const Index a = ancestor(id(level, pos), j + 1);
                if (cells[a].parent == cur) {
                    next = a;
                    break;
                }
            }
            if (next == kNone) {
                double best = std::numeric_limits<double>::infinity();
                for (Index c : ch) {
                    const double dc = dist(x, c);
                    if (dc < best || (dc == best && next != kNone && cells[c].center < cells[next].center)) {
                        best = dc;
                        next = c;
                    }
                }
                if (best > outer_radius(j + 1)) break;
            }
            chain.push_back(next);
        }
        return chain;
    }
};

/// Cells whose tree structure is the cover-tree parent relation.
inline MultiscaleTree build_cells_simple(Matrix anchors, CoverNets nets) {
    MultiscaleTree tree;
    tree.mode = CellMode::simple;
    tree.anchors = std::move(anchors);
    tree.nets = std::move(nets);
    tree.init_cells();
    for (int j = tree.j_min() + 1; j <= tree.j_max(); ++j)
        for (Index k = 0; k < tree.num_at_scale(j); ++k)
            tree.cells[tree.id(j, k)].parent = tree.id(j - 1, tree.nets.parent(j, k));
    tree.link_children();
    return tree;
}

/// Cells built top-down: a member entering the net at scale j+1 becomes a child of the
/// scale-j cell that contains it, with inner balls taking precedence over Voronoi regions.
inline MultiscaleTree build_cells_strict(Matrix anchors, CoverNets nets) {
    MultiscaleTree tree;
    tree.mode = CellMode::strict;
    tree.anchors = std::move(anchors);
    tree.nets = std::move(nets);
    tree.init_cells();
    for (int j = tree.j_min(); j < tree.j_max(); ++j) {
        for (Index k = 0; k < tree.num_at_scale(j + 1); ++k) {
            Index parent = kNone;
            if (tree.nets.entry[k] <= j) {
                parent = tree.id(j, k);
            } else {
                const auto chain = tree.locate(detail::row_ptr(tree.anchors, tree.nets.members[k]), j);
                if (!chain.empty() && tree.cells[chain.back()].scale == j) parent = chain.back();
                else parent = tree.id(j, tree.nets.cover_parent[k]);
            }
            tree.cells[tree.id(j + 1, k)].parent = parent;
        }
        // Children of scale-j cells are final before the next level descends through them.
        for (Index k = 0; k < tree.num_at_scale(j + 1); ++k) {
            const Index c = tree.id(j + 1, k);
            tree.cells[tree.cells[c].parent].children.push_back(c);
        }
    }
    return tree;
}

/// Assigns rows of `cloud` to every cell on their root-to-deepest chain.
/// Points outside the root cell go to `outliers`.
inline MultiscaleTree assign_points(MultiscaleTree tree, const PointCloud& cloud, std::span<const Index> indices,
                                    int threads = 1) {
    if (cloud.dim() != tree.dim()) throw DataError("assign_points: dimension mismatch");
    for (auto& c : tree.cells) c.members.clear();
    tree.outliers.clear();
    std::vector<std::vector<Index>> chains(indices.size());
    const auto visit = detail::spatial_order(cloud.data, indices);
    parallel_for(indices.size(), threads, [&](Index r) {
        const Index i = visit[r];
        chains[i] = tree.locate(detail::row_ptr(cloud.data, indices[i]));
    });
    for (Index i = 0; i < indices.size(); ++i) {
        if (chains[i].empty()) tree.outliers.push_back(indices[i]);
        for (Index c : chains[i]) tree.cells[c].members.push_back(indices[i]);
    }
    return tree;
}

/// Largest proper subtree whose leaves all have count >= min_count.
/// A node stays iff some child subtree stays, or it has no surviving child and count >= min_count.
/// Returns an empty mask when even the root fails.
template <typename Tree>
std::vector<bool> largest_valid_subtree(const Tree& tree, std::span<const Index> counts, Index min_count) {
    const Index n = tree.size();
    std::vector<bool> keep(n, false);
    // Post-order via reverse BFS order.
    std::vector<Index> order{tree.root()};
    for (Index i = 0; i < order.size(); ++i)
        for (Index c : tree.children(order[i])) order.push_back(c);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Index v = *it;
        bool any_child = false;
        for (Index c : tree.children(v)) any_child = any_child || keep[c];
        keep[v] = any_child || counts[v] >= min_count;
    }
    if (!keep[tree.root()]) return {};
    return keep;
}

/// Prunes cells so that every leaf of what remains holds at least d statistics points.
inline MultiscaleTree truncate_to_data_master(MultiscaleTree tree, Index d) {
    std::vector<Index> counts(tree.size());
    for (Index i = 0; i < tree.size(); ++i) counts[i] = tree.cells[i].members.size();
    auto keep = largest_valid_subtree(tree, counts, d);
    if (keep.empty())
        throw DataError("root cell holds " + std::to_string(counts[0]) + " points, fewer than d = " +
                        std::to_string(d));
    // Respect an earlier truncation: never resurrect pruned cells.
    for (Index i = 0; i < tree.size(); ++i) tree.cells[i].kept = tree.cells[i].kept && keep[i];
    tree.is_data_master = true;
    return tree;
}

}  // namespace gmra
