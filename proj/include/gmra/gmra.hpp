#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mstree.hpp"
#include "parallel.hpp"
#include "pointset.hpp"
#include "types.hpp"

namespace gmra {

/// How many principal directions a cell keeps.
struct DimMode {
    enum class Kind { fixed, energy } kind = Kind::fixed;
    double fraction = 0.5;  // energy only

    static DimMode fixed() { return {}; }
    static DimMode energy(double q) { return {Kind::energy, q}; }
};

/// "fixed" or "energy:Q".
inline DimMode parse_dim_mode(std::string_view text) {
    if (text == "fixed") return DimMode::fixed();
    if (text.starts_with("energy:")) {
        auto rest = text.substr(7);
        double q = 0.0;
        auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), q);
        if (ec == std::errc() && ptr == rest.data() + rest.size() && q > 0.0 && q <= 1.0) return DimMode::energy(q);
    }
    throw UsageError("dim mode must be 'fixed' or 'energy:Q' with Q in (0,1], got '" + std::string(text) + "'");
}

inline std::string to_string(const DimMode& m) {
    if (m.kind == DimMode::Kind::fixed) return "fixed";
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, m.fraction);
    return "energy:" + std::string(buf, end);
}

struct CellSummary {
    Index count = 0;
    Vector center;
    Vector eigenvalues;  // nonincreasing, min(count, D) entries
    Basis basis;         // D x d_eff
    Index d_eff = 0;
    double max_radius = 0.0;  // max member distance to center
    double delta = 0.0;
    double delta_inf = 0.0;
    double delta_ortho = 0.0;
    Basis ortho_basis;  // D x m, empty unless the orthogonal variant was built

    double eigenvalue(Index i) const {
        return i < static_cast<Index>(eigenvalues.size()) ? eigenvalues(static_cast<Eigen::Index>(i)) : 0.0;
    }
};

/// Mean, population covariance spectrum and top principal directions of `members` rows.
inline CellSummary local_pca(const Matrix& points, std::span<const Index> members, Index d, DimMode mode = {}) {
    if (members.empty()) throw DataError("local_pca: empty member set");
    const auto dim = points.cols();
    const auto n = static_cast<double>(members.size());
    CellSummary s;
    s.count = members.size();
    s.center = Vector::Zero(dim);
    for (Index m : members) s.center += points.row(static_cast<Eigen::Index>(m)).transpose();
    s.center /= n;
    Eigen::MatrixXd centered(static_cast<Eigen::Index>(members.size()), dim);
    for (Index i = 0; i < members.size(); ++i) {
        centered.row(static_cast<Eigen::Index>(i)) =
            points.row(static_cast<Eigen::Index>(members[i])) - s.center.transpose();
        s.max_radius = std::max(s.max_radius, centered.row(static_cast<Eigen::Index>(i)).norm());
    }
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / n;

    const Index full = static_cast<Index>(dim);
    const Index r = std::min(s.count, full);
    Vector evals = Vector::Zero(dim);
    Eigen::MatrixXd evecs = Eigen::MatrixXd::Identity(dim, dim);
    if (cov.cwiseAbs().maxCoeff() > 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        if (es.info() != Eigen::Success) throw NumericError("local_pca: eigendecomposition failed");
        evals = es.eigenvalues().reverse();
        evecs = es.eigenvectors().rowwise().reverse();
    }
    for (Eigen::Index i = 0; i < dim; ++i) evals(i) = std::max(evals(i), 0.0);
    s.eigenvalues = evals.head(static_cast<Eigen::Index>(r));

    const Index cap = std::min(d, full);
    Index keep = cap;
    if (mode.kind == DimMode::Kind::energy) {
        const double total = evals.sum();
        double acc = 0.0;
        keep = 1;
        for (Index m = 0; m < full; ++m) {
            acc += evals(static_cast<Eigen::Index>(m));
            keep = m + 1;
            if (acc >= mode.fraction * total) break;
        }
        keep = std::min(keep, cap);
    }
    if (s.count < d) {
        // Too few members to pin a d-plane: keep only the directions the data actually spans.
        Index rank = 0;
        const double top = evals.size() ? evals(0) : 0.0;
        for (Eigen::Index i = 0; i < evals.size(); ++i)
            if (evals(i) > 1e-12 * std::max(top, 1.0)) ++rank;
        keep = std::min(keep, rank);
    }
    s.d_eff = keep;
    s.basis = evecs.leftCols(static_cast<Eigen::Index>(keep));
    return s;
}

/// Affine projection c + V V^T (x - c).
template <typename Derived>
Vector project(const CellSummary& s, const Eigen::MatrixBase<Derived>& x) {
    if (x.size() != s.center.size()) throw DataError("project: dimension mismatch");
    const Vector y = x - s.center;
    return s.center + s.basis * (s.basis.transpose() * y);
}

template <typename Derived>
Vector project_ortho(const CellSummary& s, const Eigen::MatrixBase<Derived>& x) {
    if (x.size() != s.center.size()) throw DataError("project: dimension mismatch");
    const Vector y = x - s.center;
    return s.center + s.ortho_basis * (s.ortho_basis.transpose() * y);
}

struct BuildConfig {
    Index d = 1;
    DimMode dim_mode;
    double gamma = 0.5;
    CellMode mode = CellMode::simple;
    std::uint64_t seed = 0;
    int max_levels = 40;
    bool orthogonal = false;
    Index ortho_cap = 0;  // 0: ambient dimension
    int threads = 1;
};

/// Sparse code: one cell plus d_eff coefficients. Points outside the root cell get
/// k == kOutlier and no coefficients; they decode to the global mean.
struct Encoding {
    static constexpr std::uint64_t kOutlier = ~std::uint64_t{0};
    int j = 0;
    std::uint64_t k = 0;
    Vector coefficients;
};

class GmraModel {
public:
    BuildConfig config;
    MultiscaleTree tree;
    SplitPair split;
    Index n_train = 0;  // statistics-half size; the normalization for every refinement quantity
    Vector global_mean;
    std::vector<Index> summary_index;  // per cell; kNone outside the data master tree
    std::vector<CellSummary> summaries;
    bool has_ortho = false;

    Index dim() const { return tree.dim(); }
    bool has_summary(Index cell) const { return cell < summary_index.size() && summary_index[cell] != kNone; }
    const CellSummary& summary(Index cell) const {
        if (!has_summary(cell)) throw DataError("cell " + std::to_string(cell) + " has no summary");
        return summaries[summary_index[cell]];
    }
    CellSummary& summary(Index cell) { return summaries[summary_index.at(cell)]; }

    /// Root-to-deepest chain inside the data master tree.
    std::vector<Index> chain(const double* x) const { return tree.locate_kept(x); }
    template <typename Derived>
    std::vector<Index> chain(const Eigen::MatrixBase<Derived>& x) const {
        const Vector v = x;
        return chain(v.data());
    }

    /// Scale-j cell on the chain, or the deepest one when the chain stops above j.
    static Index at_scale(const MultiscaleTree& t, const std::vector<Index>& chain, int j) {
        if (chain.empty()) return kNone;
        Index best = chain.front();
        for (Index c : chain) {
            if (t.cells[c].scale > j) break;
            best = c;
        }
        return best;
    }

    template <typename Derived>
    Vector uniform_projector(int j, const Eigen::MatrixBase<Derived>& x) const {
        const Vector v = x;
        const Index c = at_scale(tree, chain(v.data()), j);
        return c == kNone ? global_mean : project(summary(c), v);
    }

    template <typename Derived>
    Vector ortho_projector(int j, const Eigen::MatrixBase<Derived>& x) const {
        if (!has_ortho) throw UsageError("model was built without the orthogonal variant");
        const Vector v = x;
        const Index c = at_scale(tree, chain(v.data()), j);
        return c == kNone ? global_mean : project_ortho(summary(c), v);
    }

    /// Coefficients against the cell's principal basis, or its nested basis when `ortho`.
    Encoding encode_in_cell(Index cell, const Vector& x, bool ortho = false) const {
        Encoding e;
        if (cell == kNone) {
            e.j = tree.j_min();
            e.k = Encoding::kOutlier;
            e.coefficients.resize(0);
            return e;
        }
        if (ortho && !has_ortho) throw UsageError("model was built without the orthogonal variant");
        const auto& s = summary(cell);
        e.j = tree.cells[cell].scale;
        e.k = tree.cells[cell].k;
        e.coefficients = (ortho ? s.ortho_basis : s.basis).transpose() * (x - s.center);
        return e;
    }

    Vector decode(const Encoding& e, bool ortho = false) const {
        if (e.k == Encoding::kOutlier) {
            if (e.coefficients.size() != 0) throw DataError("outlier code carries coefficients");
            return global_mean;
        }
        if (e.j < tree.j_min() || e.j > tree.j_max() || e.k >= tree.num_at_scale(e.j))
            throw DataError("unknown cell (" + std::to_string(e.j) + ", " + std::to_string(e.k) + ")");
        const Index cell = tree.id(e.j, static_cast<Index>(e.k));
        if (!has_summary(cell))
            throw DataError("cell (" + std::to_string(e.j) + ", " + std::to_string(e.k) + ") is outside the model");
        if (ortho && !has_ortho) throw UsageError("model was built without the orthogonal variant");
        const auto& s = summary(cell);
        const Basis& basis = ortho ? s.ortho_basis : s.basis;
        if (e.coefficients.size() != basis.cols())
            throw DataError("code has " + std::to_string(e.coefficients.size()) + " coefficients, cell expects " +
                            std::to_string(basis.cols()));
        return s.center + basis * e.coefficients;
    }

    /// Deepest data-master cell of each statistics-half point (kNone for outliers).
    std::vector<Index> deepest_cells() const {
        std::vector<Index> deepest(n_train, kNone);
        for (Index c = 0; c < tree.size(); ++c) {
            if (!has_summary(c)) continue;
            for (Index m : tree.cells[c].members) deepest[m] = c;  // ids are scale-major
        }
        return deepest;
    }
};

/// Data-master chains of every row of `cloud`, computed once for repeated evaluation.
inline std::vector<std::vector<Index>> compute_chains(const GmraModel& model, const PointCloud& cloud) {
    std::vector<std::vector<Index>> chains(cloud.size());
    parallel_for(cloud.size(), model.config.threads, [&](Index i) {
        const Vector x = cloud.row(i).transpose();
        chains[i] = model.chain(x.data());
    });
    return chains;
}

/// Fills summaries for every data-master cell from the statistics-half points `train`.
inline void compute_summaries(GmraModel& model, const PointCloud& train) {
    auto& tree = model.tree;
    model.summary_index.assign(tree.size(), kNone);
    std::vector<Index> kept;
    for (Index c = 0; c < tree.size(); ++c)
        if (tree.cells[c].kept) {
            model.summary_index[c] = kept.size();
            kept.push_back(c);
        }
    model.summaries.assign(kept.size(), {});
    parallel_for(kept.size(), model.config.threads, [&](Index i) {
        model.summaries[i] = local_pca(train.data, tree.cells[kept[i]].members, model.config.d, model.config.dim_mode);
    });
}

/// Refinement quantities: squared norm of the change from a cell's projector to its children's,
/// summed over members and divided by the global n. Members without a surviving child contribute 0.
inline void compute_deltas(GmraModel& model, const PointCloud& train) {
    const auto deepest = model.deepest_cells();
    std::vector<double> sq(model.tree.size(), 0.0);
    std::vector<double> mx(model.tree.size(), 0.0);
    for (Index i = 0; i < deepest.size(); ++i) {
        Index child = deepest[i];
        if (child == kNone) continue;
        const Vector x = train.row(i).transpose();
        Vector p_child = project(model.summary(child), x);
        for (Index c = model.tree.parent(child); c != kNone; child = c, c = model.tree.parent(c)) {
            Vector p = project(model.summary(c), x);
            const double dist_sq = (p - p_child).squaredNorm();
            sq[c] += dist_sq;
            mx[c] = std::max(mx[c], std::sqrt(dist_sq));
            p_child = std::move(p);
        }
    }
    const double n = static_cast<double>(model.n_train);
    for (Index c = 0; c < model.tree.size(); ++c) {
        if (!model.has_summary(c)) continue;
        auto& s = model.summary(c);
        s.delta = std::sqrt(sq[c] / n);
        s.delta_inf = mx[c];
    }
}

}  // namespace gmra
