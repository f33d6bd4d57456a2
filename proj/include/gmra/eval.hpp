#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "adaptive.hpp"
#include "covertree.hpp"
#include "gmra.hpp"
#include "random.hpp"

namespace gmra {

struct ErrorReport {
    double absolute_l2 = 0.0;
    double absolute_linf = 0.0;
    double relative_l2 = std::numeric_limits<double>::quiet_NaN();
    double relative_linf = std::numeric_limits<double>::quiet_NaN();
    bool relative_defined = true;  // false when some test point has zero norm
    Index n_test = 0;
};

/// approx(i) returns the approximation of row i.
template <typename Approx>
ErrorReport error_report_from(const PointCloud& test, Approx&& approx) {
    if (test.size() == 0) throw DataError("error report needs test points");
    ErrorReport r;
    r.n_test = test.size();
    double sum = 0.0;
    double rel_sum = 0.0;
    double rel_max = 0.0;
    for (Index i = 0; i < test.size(); ++i) {
        const Vector x = test.row(i).transpose();
        const double e = (x - approx(i)).norm();
        sum += e * e;
        r.absolute_linf = std::max(r.absolute_linf, e);
        const double nx = x.norm();
        if (nx == 0.0) {
            r.relative_defined = false;
            continue;
        }
        rel_sum += (e / nx) * (e / nx);
        rel_max = std::max(rel_max, e / nx);
    }
    const double n = static_cast<double>(test.size());
    r.absolute_l2 = std::sqrt(sum / n);
    if (r.relative_defined) {
        r.relative_l2 = std::sqrt(rel_sum / n);
        r.relative_linf = rel_max;
    }
    return r;
}

inline ErrorReport error_report(const GmraModel& model, const Partition& part, const PointCloud& test) {
    return error_report_from(test, [&](Index i) { return adaptive_projector(model, part, test.row(i).transpose()); });
}

inline ErrorReport error_report(const GmraModel& model, int j, const PointCloud& test) {
    return error_report_from(test, [&](Index i) { return model.uniform_projector(j, test.row(i).transpose()); });
}

/// Each test point approximated by its nearest training point (exact search through cover nets).
inline ErrorReport nn_baseline(const PointCloud& train, const PointCloud& test) {
    if (train.size() == 0 || test.size() == 0) throw DataError("nearest-neighbour baseline needs points");
    if (train.dim() != test.dim()) throw DataError("nearest-neighbour baseline: dimension mismatch");
    std::vector<Index> all(train.size());
    std::iota(all.begin(), all.end(), Index{0});
    // Enough levels to separate every distinct pair; duplicates never need their own member.
    const auto nets = build_cover_nets(train.data, all, 200);
    return error_report_from(test, [&](Index i) {
        const Vector x = test.row(i).transpose();
        const auto [pos, d] = nearest_member(train.data, nets, x.data(), nets.j_max);
        (void)d;
        return Vector(train.row(nets.members[pos]).transpose());
    });
}

/// Target radius mu * (ln n / n)^(1/(2s+d-2)) (d >= 2) or mu * ln n / n (d = 1), rounded to a scale
/// j = round(-log_gamma(target)) and clamped to [lo, hi].
inline double jstar_target(double n, Index d, double s, double mu) {
    if (!(n >= 2.0) || d < 1 || !(s >= 1.0) || !(mu > 0.0)) throw UsageError("choose_jstar: bad parameters");
    const double base = std::log(n) / n;
    if (d == 1) return mu * base;
    return mu * std::pow(base, 1.0 / (2.0 * s + static_cast<double>(d) - 2.0));
}

inline int choose_jstar(double n, Index d, double s, double mu, int lo, int hi, double gamma = 0.5) {
    const double target = jstar_target(n, d, s, mu);
    const int j = static_cast<int>(std::lround(std::log(target) / std::log(gamma)));
    return std::clamp(j, lo, hi);
}

/// Finest scale holding a data-master cell.
inline int deepest_scale(const GmraModel& model) {
    int hi = model.tree.j_min();
    for (Index c = 0; c < model.tree.size(); ++c)
        if (model.has_summary(c)) hi = std::max(hi, model.tree.cells[c].scale);
    return hi;
}

/// n defaults to the statistics-half size.
inline int choose_jstar(const GmraModel& model, double s, double mu, double n = 0.0) {
    if (n == 0.0) n = static_cast<double>(model.n_train);
    return choose_jstar(n, model.config.d, s, mu, model.tree.j_min(), deepest_scale(model), model.tree.gamma());
}

struct RateFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double r_squared = std::numeric_limits<double>::quiet_NaN();
    Index points_used = 0;
    double x_lo = 0.0, x_hi = 0.0;  // range used, original units
    bool degenerate = false;        // zero or non-finite errors in the fitted range
};

/// Least squares of log10 y on log10 x over the rows with use[i] (all rows when empty).
inline RateFit fit_loglog(std::span<const double> xs, std::span<const double> ys, const std::vector<bool>& use = {}) {
    if (xs.size() != ys.size()) throw UsageError("fit_rate: xs and ys differ in length");
    std::vector<double> lx, ly;
    RateFit fit;
    for (Index i = 0; i < xs.size(); ++i) {
        if (!use.empty() && !use[i]) continue;
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
            fit.degenerate = true;
            continue;
        }
        lx.push_back(std::log10(xs[i]));
        ly.push_back(std::log10(ys[i]));
        fit.x_lo = lx.size() == 1 ? xs[i] : std::min(fit.x_lo, xs[i]);
        fit.x_hi = lx.size() == 1 ? xs[i] : std::max(fit.x_hi, xs[i]);
    }
    fit.points_used = lx.size();
    if (lx.size() < 3) {
        fit.degenerate = true;
        throw DataError("fit_rate needs at least 3 usable points, got " + std::to_string(lx.size()));
    }
    const double m = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / m;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (Index i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx == 0.0) throw DataError("fit_rate: all x values coincide");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    return fit;
}

/// Plain least squares y = a + b x (no logs).
inline RateFit fit_linear(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw UsageError("fit_linear: need matching inputs, >= 2 points");
    const double m = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / m;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (Index i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    RateFit fit;
    fit.points_used = xs.size();
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    fit.x_lo = *std::min_element(xs.begin(), xs.end());
    fit.x_hi = *std::max_element(xs.begin(), xs.end());
    return fit;
}

/// Which scales count as the straight part of an error-vs-scale curve.
struct RangePolicy {
    Index drop_coarsest = 2;
    double min_rich_fraction = 0.5;  // share of nonempty cells holding >= d points
    bool stop_at_test_minimum = true;  // finer scales are variance dominated
};

struct ScaleRow {
    int j = 0;
    Index cells = 0;            // data-master cells at scale j
    Index nonempty_cells = 0;   // master-tree cells at scale j with members
    double rich_fraction = 0.0;
    double mean_diameter = 0.0; // 2 x max member distance, averaged over data-master cells
    double train_l2 = 0.0;
    double test_l2 = 0.0;
    double test_linf = 0.0;
    bool in_fit = false;
};

/// One row per scale of the data master tree.
inline std::vector<ScaleRow> error_vs_scale(const GmraModel& model, const PointCloud* train, const PointCloud& test) {
    const auto& tree = model.tree;
    const int deepest = deepest_scale(model);
    std::vector<ScaleRow> rows;
    for (int j = tree.j_min(); j <= deepest; ++j) {
        ScaleRow r;
        r.j = j;
        Index rich = 0;
        double diam = 0.0;
        for (Index k = 0; k < tree.num_at_scale(j); ++k) {
            const Index c = tree.id(j, k);
            const Index m = tree.cells[c].members.size();
            if (m > 0) ++r.nonempty_cells;
            if (m >= model.config.d) ++rich;
            if (model.has_summary(c)) {
                ++r.cells;
                diam += 2.0 * model.summary(c).max_radius;
            }
        }
        r.rich_fraction = r.nonempty_cells ? static_cast<double>(rich) / static_cast<double>(r.nonempty_cells) : 0.0;
        r.mean_diameter = r.cells ? diam / static_cast<double>(r.cells) : 0.0;
        rows.push_back(r);
    }
    auto fill = [&](const PointCloud& cloud, bool is_test) {
        const auto chains = compute_chains(model, cloud);
        std::vector<double> sum(rows.size(), 0.0), worst(rows.size(), 0.0);
        for (Index i = 0; i < cloud.size(); ++i) {
            const Vector x = cloud.row(i).transpose();
            for (Index r = 0; r < rows.size(); ++r) {
                const Index c = GmraModel::at_scale(tree, chains[i], rows[r].j);
                const Vector y = c == kNone ? model.global_mean : project(model.summary(c), x);
                const double e = (x - y).squaredNorm();
                sum[r] += e;
                worst[r] = std::max(worst[r], e);
            }
        }
        for (Index r = 0; r < rows.size(); ++r) {
            const double l2 = std::sqrt(sum[r] / static_cast<double>(cloud.size()));
            if (is_test) {
                rows[r].test_l2 = l2;
                rows[r].test_linf = std::sqrt(worst[r]);
            } else {
                rows[r].train_l2 = l2;
            }
        }
    };
    fill(test, true);
    if (train) fill(*train, false);
    return rows;
}

struct AsEstimate {
    std::vector<ScaleRow> rows;
    RateFit fit;  // log10 L2 error against log10 mean diameter; s = slope
    double s = std::numeric_limits<double>::quiet_NaN();
    bool on_train = false;  // fitted on train_l2 rather than test_l2
};

/// Marks the fitted scales in `rows` and fits log10 error against log10 mean diameter. With
/// on_train the curve is train_l2 and test_l2 only decides where the range stops.
inline AsEstimate fit_As(std::vector<ScaleRow> rows, const RangePolicy& policy = {}, bool on_train = false) {
    AsEstimate out;
    out.rows = std::move(rows);
    out.on_train = on_train;
    Index last = out.rows.size();
    if (policy.stop_at_test_minimum && !out.rows.empty()) {
        last = 0;
        for (Index i = 1; i < out.rows.size(); ++i)
            if (out.rows[i].test_l2 < out.rows[last].test_l2) last = i;
        ++last;
    }
    std::vector<double> xs, ys;
    std::vector<bool> use;
    for (Index i = 0; i < out.rows.size(); ++i) {
        auto& r = out.rows[i];
        r.in_fit = i >= policy.drop_coarsest && i < last && r.rich_fraction >= policy.min_rich_fraction;
        xs.push_back(r.mean_diameter);
        ys.push_back(on_train ? r.train_l2 : r.test_l2);
        use.push_back(r.in_fit);
    }
    out.fit = fit_loglog(xs, ys, use);
    out.s = out.fit.slope;
    return out;
}

/// Error-vs-diameter slope. With `train` (the statistics half) the fitted curve is the empirical
/// error on it and `test` bounds the range; without it the test error is fitted directly.
inline AsEstimate estimate_As(const GmraModel& model, const PointCloud* train, const PointCloud& test,
                              const RangePolicy& policy = {}) {
    return fit_As(error_vs_scale(model, train, test), policy, train != nullptr);
}

/// Normalized criterion values (divided by gamma^j when scale dependent) at or above this fraction
/// of the largest are treated as genuine; smaller ones are round-off on flat pieces.
inline constexpr double kRoundOffFraction = 1e-9;

/// Geometric threshold grid spanning the (non round-off) criterion values present in the model.
inline std::vector<double> tau_grid(const GmraModel& model, CriterionKind kind, Index count) {
    std::vector<double> values;
    for (Index c = 0; c < model.tree.size(); ++c) {
        if (!model.has_summary(c)) continue;
        double v = criterion_value(model.summary(c), kind);
        if (scale_dependent(kind)) v /= std::pow(model.tree.gamma(), model.tree.cells[c].scale);
        if (v > 0.0) values.push_back(v);
    }
    if (values.empty() || count < 2) return {0.0};
    const double hi = *std::max_element(values.begin(), values.end());
    double lo = hi;
    for (double v : values)
        if (v >= kRoundOffFraction * hi) lo = std::min(lo, v);
    std::vector<double> grid(count);
    for (Index i = 0; i < count; ++i)
        grid[i] = hi * std::pow(lo / hi, static_cast<double>(i) / static_cast<double>(count - 1));
    return grid;
}

struct BsEstimate {
    std::vector<SweepRow> rows;
    std::vector<bool> in_fit;
    RateFit fit;  // log10 (train L2)^(d-2) against log10 weighted complexity; s = -slope
    double s = std::numeric_limits<double>::quiet_NaN();
};

/// Sweep rows used in the fit: first row of each distinct partition size, threshold not at
/// round-off level, and error still above (1 + saturation) times the smallest error of the sweep.
struct SweepPolicy {
    bool leaf_complexity = false;  // complexity of the partition cells instead of the whole truncated tree
    double saturation = 0.05;
    double round_off_fraction = kRoundOffFraction;
};

inline BsEstimate estimate_Bs(const GmraModel& model, const PointCloud& train, std::span<const double> taus,
                              CriterionKind kind = CriterionKind::scale_dependent_l2, const SweepPolicy& policy = {}) {
    if (model.config.d < 3) throw UsageError("the B_s class needs d >= 3");
    BsEstimate out;
    out.rows = partition_sweep(model, kind, taus, train);
    std::stable_sort(out.rows.begin(), out.rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.tau > b.tau; });
    double tau_max = 0.0;
    double err_min = std::numeric_limits<double>::infinity();
    for (const auto& r : out.rows) {
        tau_max = std::max(tau_max, r.tau);
        err_min = std::min(err_min, r.train_l2);
    }
    std::vector<double> xs, ys;
    Index last_size = kNone;
    for (const auto& r : out.rows) {
        const bool use = r.partition_size != last_size && r.tau >= policy.round_off_fraction * tau_max &&
                         r.train_l2 > (1.0 + policy.saturation) * err_min;
        last_size = r.partition_size;
        out.in_fit.push_back(use);
        xs.push_back(policy.leaf_complexity ? r.leaf_complexity : r.weighted_complexity);
        ys.push_back(std::pow(r.train_l2, static_cast<double>(model.config.d) - 2.0));
    }
    out.fit = fit_loglog(xs, ys, out.in_fit);
    out.s = -out.fit.slope;
    return out;
}

/// Largest observed ratio between the energy of summed refinement increments outside a random
/// proper subtree and the sum of their energies. Subtrees grow from the root, keeping each child
/// with probability 1/2. Samples with an empty complement are skipped.
inline double quasi_orthogonality_estimate(const GmraModel& model, const PointCloud& train, Index samples,
                                           std::uint64_t seed, bool ortho = false) {
    if (ortho && !model.has_ortho) throw UsageError("orthogonal bases not built");
    const auto topo = data_master_topology(model);
    const auto deepest = model.deepest_cells();
    auto proj = [&](Index c, const Vector& x) {
        return ortho ? project_ortho(model.summary(c), x) : project(model.summary(c), x);
    };
    std::vector<Index> node_of(model.tree.size(), kNone);
    for (Index v = 0; v < topo.size(); ++v) node_of[topo.cell_of[v]] = v;
    Rng rng(seed);
    double best = -1.0;
    for (Index s = 0; s < samples; ++s) {
        std::vector<bool> in(topo.size(), false);
        in[0] = true;
        for (Index v = 0; v < topo.size(); ++v)
            if (in[v])
                for (Index c : topo.children(v)) in[c] = rng.uniform() < 0.5;
        double denom = 0.0;
        for (Index v = 0; v < topo.size(); ++v) {
            if (in[v]) continue;
            const auto& sm = model.summary(topo.cell_of[v]);
            const double delta = ortho ? sm.delta_ortho : sm.delta;
            denom += delta * delta;
        }
        if (!(denom > 0.0)) continue;
        double num = 0.0;
        for (Index i = 0; i < deepest.size(); ++i) {
            if (deepest[i] == kNone) continue;
            // Increments outside the subtree form the tail of the chain and telescope.
            Index first_out = kNone;
            for (Index c = deepest[i]; c != kNone; c = model.tree.parent(c))
                if (!in[node_of[c]]) first_out = c;
            if (first_out == kNone) continue;
            const Vector x = train.row(i).transpose();
            num += (proj(first_out, x) - proj(deepest[i], x)).squaredNorm();
        }
        num /= static_cast<double>(model.n_train);
        best = std::max(best, num / denom);
    }
    if (best < 0.0) throw DataError("quasi-orthogonality: no subtree sample had a nonempty complement");
    return best;
}

}  // namespace gmra
