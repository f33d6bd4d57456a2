#pragma once

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "types.hpp"

namespace gmra {

namespace detail {

inline double squared_distance(const double* a, const double* b, Index dim) {
    double s = 0.0;
    for (Index c = 0; c < dim; ++c) {
        const double t = a[c] - b[c];
        s += t * t;
    }
    return s;
}

inline const double* row_ptr(const Matrix& m, Index i) { return m.data() + i * static_cast<Index>(m.cols()); }

/// Positions 0..rows.size()-1 sorted along a Z-order curve through the listed rows. Only used to
/// visit points in a cache-friendly order where the visiting order does not affect results.
inline std::vector<Index> spatial_order(const Matrix& m, std::span<const Index> rows) {
    const Index dim = static_cast<Index>(m.cols());
    std::vector<Index> order(rows.size());
    for (Index i = 0; i < rows.size(); ++i) order[i] = i;
    if (rows.empty() || dim == 0) return order;
    std::vector<double> lo(dim, std::numeric_limits<double>::infinity()), hi(dim, -std::numeric_limits<double>::infinity());
    for (Index r : rows)
        for (Index c = 0; c < dim; ++c) {
            lo[c] = std::min(lo[c], row_ptr(m, r)[c]);
            hi[c] = std::max(hi[c], row_ptr(m, r)[c]);
        }
    const int bits = static_cast<int>(std::max<Index>(1, std::min<Index>(21, 63 / dim)));
    const double cells = static_cast<double>((std::uint64_t{1} << bits) - 1);
    std::vector<std::uint64_t> key(rows.size(), 0);
    for (Index i = 0; i < rows.size(); ++i) {
        const double* x = row_ptr(m, rows[i]);
        std::uint64_t k = 0;
        std::vector<std::uint64_t> q(dim);
        for (Index c = 0; c < dim; ++c)
            q[c] = hi[c] > lo[c] ? static_cast<std::uint64_t>((x[c] - lo[c]) / (hi[c] - lo[c]) * cells) : 0;
        for (int b = bits - 1; b >= 0; --b)
            for (Index c = 0; c < dim && c < 63; ++c) k = (k << 1) | ((q[c] >> b) & 1u);
        key[i] = k;
    }
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return key[a] < key[b]; });
    return order;
}

}  // namespace detail

/// Leveled nets T_{j_min} ⊆ ... ⊆ T_{j_max} over a subset of rows of a point matrix.
///
/// Nesting lets every member keep one position for all levels at or below its entry:
/// level j holds positions [0, level_size(j)). A position entering at level j+1 has a
/// cover parent at level j within radius(j); at later levels each member is its own parent.
struct CoverNets {
    double gamma = 0.5;
    int j_min = 0;
    int j_max = 0;
    std::vector<Index> members;      // point index per position
    std::vector<int> entry;          // first level containing the position
    std::vector<Index> cover_parent; // position at level entry-1, kNone for the root
    std::vector<std::vector<Index>> adopted;  // positions whose cover parent is this one, by entry level
    std::vector<Index> sizes;        // level_size per level, indexed by j - j_min

    double radius(int j) const { return std::pow(gamma, j); }
    int num_levels() const { return j_max - j_min + 1; }
    Index level_size(int j) const { return sizes.at(static_cast<Index>(j - j_min)); }
    Index root_point() const { return members.front(); }

    /// Cover parent of position k viewed as a member of level j (j > j_min).
    Index parent(int j, Index k) const { return entry[k] == j ? cover_parent[k] : k; }

    /// Positions at level j+1 whose parent at level j is k (k itself first).
    template <typename Fn>
    void for_each_child(int j, Index k, Fn&& fn) const {
        fn(k);
        for (Index q : adopted[k]) {
            if (entry[q] == j + 1) fn(q);
            else if (entry[q] > j + 1) break;
        }
    }

    std::vector<Index> children(int j, Index k) const {
        std::vector<Index> out;
        if (j < j_max) for_each_child(j, k, [&](Index q) { out.push_back(q); });
        return out;
    }

    /// Upper bound on the distance from a level-j member to any of its descendants.
    double descendant_bound(int j) const {
        double s = 0.0;
        for (int l = j; l < j_max; ++l) s += radius(l);
        return s;
    }
};

/// Builds nets by top-down greedy insertion in the order of `indices`.
///
/// Level j_min is the largest j with gamma^j >= max distance from the root (indices[0]).
/// A point joins level j+1 when it is farther than gamma^{j+1} from every member already there;
/// it is parented to its nearest level-j member. Construction stops once every point is a member
/// (exact duplicates never join) or after `max_levels` refinements.
inline CoverNets build_cover_nets(const Matrix& points, std::span<const Index> indices, int max_levels,
                                  double gamma = 0.5) {
    if (indices.empty()) throw DataError("build_cover_nets: empty index list");
    if (!(gamma > 0.0 && gamma < 1.0)) throw UsageError("radius ratio must lie in (0,1)");
    if (max_levels < 0) throw UsageError("max_levels must be >= 0");
    const Index dim = static_cast<Index>(points.cols());
    const Index count = indices.size();
    auto pt = [&](Index local) { return detail::row_ptr(points, indices[local]); };
    auto mp = [&](Index pointIndex) { return detail::row_ptr(points, pointIndex); };

    CoverNets nets;
    nets.gamma = gamma;
    const Index root = indices[0];

    std::vector<Index> owner(count, 0);
    std::vector<double> owner_dist(count, 0.0);
    std::vector<Index> position_of(count, kNone);
    position_of[0] = 0;
    double max_dist = 0.0;
    for (Index t = 0; t < count; ++t) {
        owner_dist[t] = std::sqrt(detail::squared_distance(pt(t), mp(root), dim));
        max_dist = std::max(max_dist, owner_dist[t]);
    }
    int j = 0;
    if (max_dist > 0.0) {
        j = static_cast<int>(std::floor(std::log(max_dist) / std::log(gamma)));
        while (nets.radius(j) < max_dist) --j;
        while (nets.radius(j + 1) >= max_dist) ++j;
    }
    nets.j_min = j;
    nets.members.push_back(root);
    nets.entry.push_back(j);
    nets.cover_parent.push_back(kNone);
    nets.adopted.emplace_back();
    nets.sizes.push_back(1);

    // Relatives of a level-j member: members of level j within rel_factor * radius(j).
    // rel_factor >= 2/(1-gamma) keeps the relation closed from one level to the next;
    // >= 3 keeps nearest-owner searches exact.
    const double rel_factor = std::max(3.0, 2.0 / (1.0 - gamma));
    // Relatives per position, stored flat: rel_data[rel_start[m], rel_start[m] + rel_len[m]).
    std::vector<Index> rel_start{0}, rel_len{1}, rel_data{0};
    auto relatives = [&](Index m) {
        return std::span<const Index>(rel_data.data() + rel_start[m], rel_len[m]);
    };
    const auto visit = detail::spatial_order(points, indices);

    auto all_settled = [&] {
        return std::all_of(owner_dist.begin(), owner_dist.end(), [](double d) { return d == 0.0; });
    };

    while (!all_settled() && j < nets.j_min + max_levels) {
        const double r_next = nets.radius(j + 1);
        const double r_cur = nets.radius(j);
        const double r_next_sq = r_next * r_next;
        // Admission pass.
        for (Index t = 0; t < count; ++t) {
            if (position_of[t] != kNone || owner_dist[t] <= r_next) continue;
            bool separated = true;
            for (Index rel : relatives(owner[t])) {
                const double* x = pt(t);
                nets.for_each_child(j, rel, [&](Index q) {
                    if (separated && detail::squared_distance(x, mp(nets.members[q]), dim) <= r_next_sq)
                        separated = false;
                });
                if (!separated) break;
            }
            if (!separated) continue;
            const Index q = nets.members.size();
            nets.members.push_back(indices[t]);
            nets.entry.push_back(j + 1);
            nets.cover_parent.push_back(owner[t]);
            nets.adopted.emplace_back();
            nets.adopted[owner[t]].push_back(q);
            position_of[t] = q;
        }
        const Index next_size = nets.members.size();

        // Relatives at level j+1 from relatives of parents at level j.
        const double rel_sq = (rel_factor * r_next) * (rel_factor * r_next);
        std::vector<Index> next_start(next_size), next_len(next_size), next_data;
        next_data.reserve(rel_data.size() + rel_data.size() / 2);
        for (Index t : visit) {
            const Index m = position_of[t];
            if (m == kNone || m >= next_size) continue;
            const Index p = nets.parent(j + 1, m);
            const double* x = mp(nets.members[m]);
            next_start[m] = next_data.size();
            for (Index rel : relatives(p)) {
                nets.for_each_child(j, rel, [&](Index q) {
                    if (detail::squared_distance(x, mp(nets.members[q]), dim) <= rel_sq) next_data.push_back(q);
                });
            }
            next_len[m] = next_data.size() - next_start[m];
            std::sort(next_data.begin() + static_cast<std::ptrdiff_t>(next_start[m]), next_data.end());
        }

        // Owner update: nearest level-(j+1) member, ties to the smaller point index.
        for (Index t : visit) {
            if (position_of[t] != kNone) {
                owner[t] = position_of[t];
                owner_dist[t] = 0.0;
                continue;
            }
            if (owner_dist[t] == 0.0) continue;  // duplicate of a member; its owner persists
            const double* x = pt(t);
            Index best = owner[t];
            double best_sq = owner_dist[t] * owner_dist[t];
            for (Index rel : relatives(owner[t])) {
                const double d_rel = std::sqrt(detail::squared_distance(x, mp(nets.members[rel]), dim));
                if (d_rel - r_cur > std::sqrt(best_sq)) continue;
                nets.for_each_child(j, rel, [&](Index q) {
                    const double dq = detail::squared_distance(x, mp(nets.members[q]), dim);
                    if (dq < best_sq || (dq == best_sq && nets.members[q] < nets.members[best])) {
                        best_sq = dq;
                        best = q;
                    }
                });
            }
            owner[t] = best;
            owner_dist[t] = std::sqrt(best_sq);
        }
        rel_start = std::move(next_start);
        rel_len = std::move(next_len);
        rel_data = std::move(next_data);
        ++j;
        nets.sizes.push_back(next_size);
    }
    nets.j_max = j;
    return nets;
}

/// Nearest member of level `level` to x (ties to the smaller point index). Returns {position, distance}.
inline std::pair<Index, double> nearest_member(const Matrix& points, const CoverNets& nets, const double* x,
                                               int level) {
    const Index dim = static_cast<Index>(points.cols());
    auto dist = [&](Index q) { return std::sqrt(detail::squared_distance(x, detail::row_ptr(points, nets.members[q]), dim)); };
    std::vector<std::pair<Index, double>> frontier{{0, dist(0)}};
    std::vector<std::pair<Index, double>> next;
    for (int l = nets.j_min; l < level; ++l) {
        double best = frontier.front().second;
        for (auto& [q, d] : frontier) best = std::min(best, d);
        // Descendants of a level-l member reachable by `level` stay within this bound.
        double bound = 0.0;
        for (int t = l; t < level; ++t) bound += nets.radius(t);
        next.clear();
        for (auto& [q, d] : frontier) {
            if (d > best + bound) continue;
            nets.for_each_child(l, q, [&](Index c) { next.emplace_back(c, c == q ? d : dist(c)); });
        }
        std::swap(frontier, next);
    }
    std::pair<Index, double> best{kNone, std::numeric_limits<double>::infinity()};
    for (auto& [q, d] : frontier) {
        if (d < best.second || (d == best.second && nets.members[q] < nets.members[best.first])) best = {q, d};
    }
    return best;
}

/// All level-`level` members within distance < radius of x (positions, ascending).
inline std::vector<Index> members_within(const Matrix& points, const CoverNets& nets, const double* x, int level,
                                         double radius) {
    const Index dim = static_cast<Index>(points.cols());
    auto dist = [&](Index q) { return std::sqrt(detail::squared_distance(x, detail::row_ptr(points, nets.members[q]), dim)); };
    std::vector<std::pair<Index, double>> frontier{{0, dist(0)}};
    std::vector<std::pair<Index, double>> next;
    for (int l = nets.j_min; l < level; ++l) {
        double bound = 0.0;
        for (int t = l; t < level; ++t) bound += nets.radius(t);
        next.clear();
        for (auto& [q, d] : frontier) {
            if (d >= radius + bound) continue;
            nets.for_each_child(l, q, [&](Index c) { next.emplace_back(c, c == q ? d : dist(c)); });
        }
        std::swap(frontier, next);
    }
    std::vector<Index> out;
    for (auto& [q, d] : frontier)
        if (d < radius) out.push_back(q);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace gmra
