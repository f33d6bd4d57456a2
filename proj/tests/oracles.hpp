#pragma once

// Independent reference implementations used by the unit tests. Nothing here calls the
// library routine it is checking.

#include <algorithm>
#include <climits>
#include <cmath>
#include <functional>
#include <vector>

#include "gmra/mstree.hpp"
#include "gmra/random.hpp"
#include "gmra/types.hpp"

namespace oracle {

using gmra::Index;
using gmra::kNone;

inline gmra::Matrix uniform_cloud(Index n, Index dim, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    gmra::Rng rng(seed);
    gmra::Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rng.uniform(lo, hi);
    return m;
}

inline double dist(const gmra::Matrix& m, Index a, Index b) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double d = m(static_cast<Eigen::Index>(a), c) - m(static_cast<Eigen::Index>(b), c);
        s += d * d;
    }
    return std::sqrt(s);
}

inline double dist(const double* x, const double* y, Index dim) {
    double s = 0.0;
    for (Index c = 0; c < dim; ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// cyclic Jacobi eigensolver for small symmetric matrices

struct Eig {
    std::vector<double> values;                // nonincreasing
    std::vector<std::vector<double>> vectors;  // vectors[i] pairs with values[i]
};

inline Eig jacobi(std::vector<std::vector<double>> a) {
    const Index n = a.size();
    std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
    for (Index i = 0; i < n; ++i) v[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Index p = 0; p < n; ++p)
            for (Index q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-32) break;
        for (Index p = 0; p < n; ++p)
            for (Index q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Index k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (Index k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<Index> order(n);
    for (Index i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](Index x, Index y) { return a[x][x] > a[y][y]; });
    Eig out;
    for (Index i : order) {
        out.values.push_back(a[i][i]);
        std::vector<double> col(n);
        for (Index k = 0; k < n; ++k) col[k] = v[k][i];
        out.vectors.push_back(col);
    }
    return out;
}

/// Population covariance of the listed rows, as nested vectors.
inline std::vector<std::vector<double>> covariance(const gmra::Matrix& pts, const std::vector<Index>& rows,
                                                   std::vector<double>* mean_out = nullptr) {
    const Index dim = static_cast<Index>(pts.cols());
    std::vector<double> mean(dim, 0.0);
    for (Index r : rows)
        for (Index c = 0; c < dim; ++c) mean[c] += pts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (double& m : mean) m /= static_cast<double>(rows.size());
    std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
    for (Index r : rows)
        for (Index a = 0; a < dim; ++a)
            for (Index b = 0; b < dim; ++b)
                cov[a][b] += (pts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) - mean[a]) *
                             (pts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(b)) - mean[b]);
    for (auto& row : cov)
        for (double& x : row) x /= static_cast<double>(rows.size());
    if (mean_out) *mean_out = mean;
    return cov;
}

/// Orthogonal projector onto the column span of m, through the eigenvectors of its Gram matrix m m^T.
inline Eigen::MatrixXd span_projector(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
    const Index dim = static_cast<Index>(m.rows());
    std::vector<std::vector<double>> g(dim, std::vector<double>(dim, 0.0));
    for (Index a = 0; a < dim; ++a)
        for (Index b = 0; b < dim; ++b)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                g[a][b] += m(static_cast<Eigen::Index>(a), c) * m(static_cast<Eigen::Index>(b), c);
    const auto e = jacobi(g);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    const double top = e.values.empty() ? 0.0 : e.values[0];
    for (Index i = 0; i < dim; ++i) {
        if (e.values[i] <= rel_tol * top) continue;
        for (Index a = 0; a < dim; ++a)
            for (Index b = 0; b < dim; ++b)
                p(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += e.vectors[i][a] * e.vectors[i][b];
    }
    return p;
}

// ---------------------------------------------------------------------------
// trees

struct SmallTree {
    std::vector<Index> parents;  // parents[0] == kNone; parent index < child index
    std::vector<std::vector<Index>> kids;

    Index size() const { return parents.size(); }
    Index root() const { return 0; }
    Index parent(Index v) const { return parents[v]; }
    const std::vector<Index>& children(Index v) const { return kids[v]; }
};

inline SmallTree random_tree(Index nodes, gmra::Rng& rng) {
    SmallTree t;
    t.parents.assign(nodes, kNone);
    t.kids.assign(nodes, {});
    for (Index v = 1; v < nodes; ++v) {
        t.parents[v] = rng.below(v);
        t.kids[t.parents[v]].push_back(v);
    }
    return t;
}

/// Calls fn(mask) for every proper subtree (contains the root, closed under parents).
inline void for_each_proper_subtree(const SmallTree& t, const std::function<void(const std::vector<bool>&)>& fn) {
    const Index n = t.size();
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << (n - 1)); ++bits) {
        std::vector<bool> in(n, false);
        in[0] = true;
        bool closed = true;
        for (Index v = 1; v < n && closed; ++v) {
            in[v] = (bits >> (v - 1)) & 1;
            if (in[v] && !in[t.parents[v]]) closed = false;
        }
        if (closed) fn(in);
    }
}

// ---------------------------------------------------------------------------
// strict cells by the literal set recursion: base cell = hat-M ∩ parent ∩ Voronoi among siblings,
// then grown by inner balls of finer net members already inside.

struct StrictCells {
    const gmra::MultiscaleTree& t;
    std::vector<Index> par;               // derived parent per cell
    std::vector<bool> parent_ambiguous;   // anchor of the cell lies in != 1 cells one scale up
    std::vector<std::vector<int>> stage;  // per cell, per net position: stage of entry (INT_MAX never)

    explicit StrictCells(const gmra::MultiscaleTree& tree) : t(tree) {
        const Index npos = t.nets.members.size();
        par.assign(t.size(), kNone);
        parent_ambiguous.assign(t.size(), false);
        stage.assign(t.size(), std::vector<int>(npos, INT_MAX));
        for (Index p = 0; p < npos; ++p) stage[0][p] = t.j_min();
        for (int j = t.j_min() + 1; j <= t.j_max(); ++j) {
            for (Index k = 0; k < t.num_at_scale(j); ++k) {
                Index hits = 0;
                for (Index q = 0; q < t.num_at_scale(j - 1); ++q)
                    if (stage[t.id(j - 1, q)][k] != INT_MAX) {
                        par[t.id(j, k)] = t.id(j - 1, q);
                        ++hits;
                    }
                parent_ambiguous[t.id(j, k)] = hits != 1;
            }
            for (Index k = 0; k < t.num_at_scale(j); ++k) {
                const Index c = t.id(j, k);
                auto& st = stage[c];
                for (Index y = 0; y < npos; ++y)
                    if (par[c] != kNone && stage[par[c]][y] != INT_MAX && nearest_sibling(pt(y), c) == c) st[y] = j;
                for (int m = j + 1; m <= t.j_max(); ++m) {
                    std::vector<Index> add;
                    for (Index y = 0; y < npos; ++y) {
                        if (st[y] != INT_MAX) continue;
                        for (Index a = 0; a < t.num_at_scale(m); ++a)
                            if (st[a] <= m - 1 && dist(pt(y), pt(a), t.dim()) < t.inner_radius(m)) {
                                add.push_back(y);
                                break;
                            }
                    }
                    for (Index y : add) st[y] = m;
                }
            }
        }
    }

    const double* pt(Index pos) const { return t.anchors.data() + t.nets.members[pos] * t.dim(); }

    Index nearest_sibling(const double* x, Index c) const {
        const int j = t.cells[c].scale;
        Index best = kNone;
        double bd = INFINITY;
        for (Index k = 0; k < t.num_at_scale(j); ++k) {
            const Index s = t.id(j, k);
            if (par[s] != par[c]) continue;
            const double d = dist(x, pt(k), t.dim());
            if (d < bd || (d == bd && t.nets.members[k] < t.nets.members[t.cells[best].k])) {
                bd = d;
                best = s;
            }
        }
        return best;
    }

    bool in_hat_m(const double* x) const {
        for (int l = t.j_min(); l <= t.j_max(); ++l)
            for (Index k = 0; k < t.num_at_scale(l); ++k)
                if (dist(x, pt(k), t.dim()) < t.inner_radius(l)) return true;
        return false;
    }

    /// Cells containing x at each scale, coarse to fine; empty when x is outside hat-M.
    std::vector<std::vector<Index>> cells_of(const double* x) const {
        std::vector<std::vector<Index>> out;
        if (!in_hat_m(x)) return out;
        std::vector<bool> in(t.size(), false);
        in[0] = true;
        out.push_back({0});
        for (int j = t.j_min() + 1; j <= t.j_max(); ++j) {
            std::vector<Index> level;
            for (Index k = 0; k < t.num_at_scale(j); ++k) {
                const Index c = t.id(j, k);
                bool m = par[c] != kNone && in[par[c]] && nearest_sibling(x, c) == c;
                for (int l = j + 1; !m && l <= t.j_max(); ++l)
                    for (Index a = 0; a < t.num_at_scale(l); ++a)
                        if (stage[c][a] <= l - 1 && dist(x, pt(a), t.dim()) < t.inner_radius(l)) {
                            m = true;
                            break;
                        }
                if (m) {
                    in[c] = true;
                    level.push_back(c);
                }
            }
            out.push_back(level);
        }
        return out;
    }
};

}  // namespace oracle
