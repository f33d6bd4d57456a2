#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "adaptive.hpp"
#include "gmra.hpp"

namespace gmra {

/// Columns of `candidates` orthogonalized against `base` and each other (two Gram-Schmidt passes);
/// directions whose norm falls below drop_tol are discarded.
inline Basis orthogonal_complement_part(const Basis& base, const Basis& candidates, double drop_tol = 1e-8) {
    const auto dim = candidates.rows();
    Basis out(dim, 0);
    for (Eigen::Index c = 0; c < candidates.cols(); ++c) {
        Vector v = candidates.col(c);
        for (int pass = 0; pass < 2; ++pass) {
            if (base.cols()) v -= base * (base.transpose() * v);
            if (out.cols()) v -= out * (out.transpose() * v);
        }
        const double norm = v.norm();
        if (norm < drop_tol) continue;
        out.conservativeResize(dim, out.cols() + 1);
        out.col(out.cols() - 1) = v / norm;
    }
    return out;
}

/// Nested bases: the root keeps its principal basis, each child adds the part of its own principal
/// basis orthogonal to its parent's, up to `cap` columns in total.
inline void build_ortho(GmraModel& model) {
    const Index full = model.dim();
    const Index cap = model.config.ortho_cap == 0 ? full : std::min(model.config.ortho_cap, full);
    for (Index c = 0; c < model.tree.size(); ++c) {
        if (!model.has_summary(c)) continue;
        auto& s = model.summary(c);
        const Index p = model.tree.parent(c);
        if (p == kNone) {
            s.ortho_basis = s.basis.leftCols(static_cast<Eigen::Index>(std::min<Index>(s.d_eff, cap)));
            continue;
        }
        const Basis& parent = model.summary(p).ortho_basis;
        // zero-variance principal directions are arbitrary; they must not widen the nested span
        Eigen::Index live = 0;
        while (live < s.basis.cols() && s.eigenvalue(static_cast<Index>(live)) > 1e-12 * s.eigenvalue(0)) ++live;
        Basis extra = orthogonal_complement_part(parent, s.basis.leftCols(live));
        const auto room = static_cast<Eigen::Index>(cap) - parent.cols();
        if (extra.cols() > room) extra.conservativeResize(extra.rows(), std::max<Eigen::Index>(room, 0));
        s.ortho_basis.resize(static_cast<Eigen::Index>(full), parent.cols() + extra.cols());
        s.ortho_basis << parent, extra;
    }
    model.has_ortho = true;
}

struct OrthoDeltaCheck {
    std::vector<double> direct_sq;      // per tree cell, (1/n) sum |S_j x - S_{j+1} x|^2
    std::vector<double> difference_sq;  // per tree cell, (1/n) sum (|x - S_j x|^2 - |x - S_{j+1} x|^2)
    std::vector<double> parent_residual_sq;  // per tree cell, (1/n) sum |x - S_j x|^2
    std::vector<double> energy_sq;           // per tree cell, (1/n) sum |x - c_j|^2; the scale for tolerances
    double worst_relative_gap = 0.0;
};

/// Both forms of the orthogonal refinement quantity, from scratch.
inline OrthoDeltaCheck ortho_delta_forms(const GmraModel& model, const PointCloud& train) {
    if (!model.has_ortho) throw UsageError("orthogonal bases not built");
    const Index cells = model.tree.size();
    OrthoDeltaCheck out;
    out.direct_sq.assign(cells, 0.0);
    out.difference_sq.assign(cells, 0.0);
    out.parent_residual_sq.assign(cells, 0.0);
    out.energy_sq.assign(cells, 0.0);
    const auto deepest = model.deepest_cells();
    for (Index i = 0; i < deepest.size(); ++i) {
        Index child = deepest[i];
        if (child == kNone) continue;
        const Vector x = train.row(i).transpose();
        Vector s_child = project_ortho(model.summary(child), x);
        out.parent_residual_sq[child] += (x - s_child).squaredNorm();
        out.energy_sq[child] += (x - model.summary(child).center).squaredNorm();
        for (Index c = model.tree.parent(child); c != kNone; child = c, c = model.tree.parent(c)) {
            Vector s = project_ortho(model.summary(c), x);
            const double r_parent = (x - s).squaredNorm();
            out.direct_sq[c] += (s - s_child).squaredNorm();
            out.difference_sq[c] += r_parent - (x - s_child).squaredNorm();
            out.parent_residual_sq[c] += r_parent;
            out.energy_sq[c] += (x - model.summary(c).center).squaredNorm();
            s_child = std::move(s);
        }
    }
    const double n = static_cast<double>(model.n_train);
    for (Index c = 0; c < cells; ++c) {
        out.direct_sq[c] /= n;
        out.difference_sq[c] /= n;
        out.parent_residual_sq[c] /= n;
        out.energy_sq[c] /= n;
        // once the nested basis spans everything both forms are pure round-off
        const double scale = std::max(out.energy_sq[c], 1e-300);
        out.worst_relative_gap = std::max(out.worst_relative_gap, std::abs(out.direct_sq[c] - out.difference_sq[c]) / scale);
    }
    return out;
}

/// Fills delta_ortho from the direct form. A difference form below -1e-8 (relative to the cell's
/// energy about its centre) means nesting broke.
inline OrthoDeltaCheck compute_ortho_deltas(GmraModel& model, const PointCloud& train) {
    auto forms = ortho_delta_forms(model, train);
    for (Index c = 0; c < model.tree.size(); ++c) {
        if (!model.has_summary(c)) continue;
        const double scale = forms.energy_sq[c];
        if (forms.difference_sq[c] < -1e-8 * scale - 1e-300)
            throw NumericError("orthogonal refinement identity went negative at cell " + std::to_string(c));
        model.summary(c).delta_ortho = std::sqrt(forms.direct_sq[c]);
    }
    return forms;
}

/// Adaptive orthogonal truncation with the log^5 threshold.
inline Truncation adaptive_ortho(const GmraModel& model, double kappa) {
    const double tau = tau_n(static_cast<double>(model.n_train), kappa, 5);
    auto t = truncate(model, {CriterionKind::orthogonal, tau});
    t.partition.provenance = "adaptive-ortho";
    return t;
}

namespace detail {

inline double parse_number(std::string_view text, std::string_view what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw UsageError("bad number '" + std::string(text) + "' in " + std::string(what));
    return v;
}

}  // namespace detail

/// uniform:J | adaptive:KAPPA | adaptive-linf:KAPPA | adaptive-flat:TAU | ortho:KAPPA
inline Partition partition_from_spec(const GmraModel& model, std::string_view spec) {
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) throw UsageError("partition spec needs KIND:VALUE, got '" + std::string(spec) + "'");
    const auto kind = spec.substr(0, colon);
    const auto value = spec.substr(colon + 1);
    const double n = static_cast<double>(model.n_train);
    if (kind == "uniform") {
        int j = 0;
        auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), j);
        if (ec != std::errc() || ptr != value.data() + value.size()) throw UsageError("bad scale in '" + std::string(spec) + "'");
        return uniform_partition(model, j);
    }
    const double v = detail::parse_number(value, spec);
    if (kind == "adaptive") return truncate(model, {CriterionKind::scale_dependent_l2, tau_n(n, v)}).partition;
    if (kind == "adaptive-linf") return truncate(model, {CriterionKind::scale_dependent_linf, tau_n(n, v)}).partition;
    if (kind == "adaptive-flat") return truncate(model, {CriterionKind::scale_independent_l2, v}).partition;
    if (kind == "ortho") return adaptive_ortho(model, v).partition;
    throw UsageError("unknown partition kind '" + std::string(kind) + "'");
}

}  // namespace gmra
