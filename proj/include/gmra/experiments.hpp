#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adaptive.hpp"
#include "axioms.hpp"
#include "build.hpp"
#include "eval.hpp"
#include "pointset.hpp"

namespace gmra {

// Stream tags for derive_seed.
inline constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
inline constexpr std::uint64_t kBuildStream = 0x6275696c64ULL;
inline constexpr std::uint64_t kTestNoiseStream = 0x746e6f697365ULL;

struct DataSpec {
    ManifoldFamily family = ManifoldFamily::S;
    int d = 3;
    Index n = 0;  // training points; as many again are drawn for the test set
    double sigma = 0.0;
    std::uint64_t seed = 0;
    bool noise_train_only = true;
};

struct ExperimentData {
    PointCloud train;
    PointCloud test;
};

/// 2n clean samples, split evenly into train and test, then noise on train (and on test unless
/// noise_train_only).
inline ExperimentData experiment_data(const DataSpec& spec) {
    if (spec.n < 2) throw UsageError("experiments need n >= 2");
    auto clean = synth_manifold({spec.family, spec.d, 0.0, spec.seed}, 2 * spec.n);
    const auto split = split_even(clean, derive_seed(spec.seed, kSplitStream));
    ExperimentData out{clean.subset(split.construction_half), clean.subset(split.statistics_half)};
    add_gaussian_noise(out.train.data, spec.sigma, derive_seed(spec.seed, kNoiseStream));
    if (!spec.noise_train_only) add_gaussian_noise(out.test.data, spec.sigma, derive_seed(spec.seed, kTestNoiseStream));
    return out;
}

inline GmraModel experiment_model(const DataSpec& spec, const ExperimentData& data, BuildConfig config) {
    config.d = spec.d;
    config.seed = derive_seed(spec.seed, kBuildStream);
    return build_model(data.train, config);
}

/// The statistics half of the training set: the points the summaries were fitted on.
inline PointCloud statistics_half(const GmraModel& model, const PointCloud& train) {
    return train.subset(model.split.statistics_half);
}

inline Partition adaptive_partition(const GmraModel& model, double kappa,
                                    CriterionKind kind = CriterionKind::scale_dependent_l2) {
    const double tau = tau_n(static_cast<double>(model.n_train), kappa, kind == CriterionKind::orthogonal ? 5 : 1);
    return truncate(model, {kind, tau}).partition;
}

// ---------------------------------------------------------------------------
// error vs scale

struct ErrorVsScaleResult {
    std::vector<ScaleRow> rows;  // train_l2 on the statistics half
    std::optional<AsEstimate> as;
    std::string fit_error;
};

inline ErrorVsScaleResult run_error_vs_scale(const DataSpec& spec, const BuildConfig& base,
                                             const RangePolicy& policy = {}) {
    const auto data = experiment_data(spec);
    const auto model = experiment_model(spec, data, base);
    const auto stats = statistics_half(model, data.train);
    ErrorVsScaleResult out;
    out.rows = error_vs_scale(model, &stats, data.test);
    try {
        out.as = fit_As(out.rows, policy, true);
        out.rows = out.as->rows;
    } catch (const DataError& e) {
        out.fit_error = e.what();
    }
    return out;
}

// ---------------------------------------------------------------------------
// error vs partition size

struct PartitionRow {
    double tau = 0.0;  // 0 for uniform rows
    int j = 0;         // uniform rows only
    Index size = 0;
    double weighted_complexity = 0.0;
    double test_l2 = 0.0;
    bool in_fit = false;
};

struct ErrorVsPartitionResult {
    std::vector<PartitionRow> uniform;
    std::vector<PartitionRow> adaptive;
    std::optional<RateFit> uniform_fit, adaptive_fit;  // log10 test L2 against log10 partition size
    std::string fit_error;
};

/// Uniform rows use the error-vs-scale range policy. Adaptive rows keep the first row of each distinct
/// size that lies inside the fitted uniform size window and does not pass the adaptive error minimum.
inline ErrorVsPartitionResult error_vs_partition(const GmraModel& model, const PointCloud& test, Index grid = 60,
                                                 const RangePolicy& policy = {}) {
    ErrorVsPartitionResult out;
    auto scales = error_vs_scale(model, nullptr, test);
    std::optional<AsEstimate> as;
    try {
        as = fit_As(scales, policy);
        scales = as->rows;
    } catch (const DataError&) {
    }
    for (const auto& r : scales) {
        const auto part = uniform_partition(model, r.j);
        out.uniform.push_back({0.0, r.j, part.size(), part.weighted_complexity, r.test_l2, r.in_fit});
    }
    const auto taus = tau_grid(model, CriterionKind::scale_dependent_l2, grid);
    auto sweep = partition_sweep(model, CriterionKind::scale_dependent_l2, taus, test, &test);
    std::stable_sort(sweep.begin(), sweep.end(), [](const SweepRow& a, const SweepRow& b) { return a.tau > b.tau; });
    Index lo = kNone, hi = 0;
    for (const auto& r : out.uniform)
        if (r.in_fit) {
            lo = std::min(lo, r.size);
            hi = std::max(hi, r.size);
        }
    Index best = 0;
    for (Index i = 1; i < sweep.size(); ++i)
        if (sweep[i].test_l2 < sweep[best].test_l2) best = i;
    Index last = kNone;
    for (Index i = 0; i < sweep.size(); ++i) {
        const auto& r = sweep[i];
        PartitionRow row{r.tau, 0, r.partition_size, r.weighted_complexity, r.test_l2, false};
        row.in_fit = r.partition_size != last && r.partition_size >= lo && r.partition_size <= hi && i <= best;
        last = r.partition_size;
        out.adaptive.push_back(row);
    }
    auto fit = [](const std::vector<PartitionRow>& rows) {
        std::vector<double> xs, ys;
        std::vector<bool> use;
        for (const auto& r : rows) {
            xs.push_back(static_cast<double>(r.size));
            ys.push_back(r.test_l2);
            use.push_back(r.in_fit);
        }
        return fit_loglog(xs, ys, use);
    };
    try {
        out.uniform_fit = fit(out.uniform);
        out.adaptive_fit = fit(out.adaptive);
    } catch (const DataError& e) {
        out.fit_error = e.what();
    }
    return out;
}

inline ErrorVsPartitionResult run_error_vs_partition(const DataSpec& spec, const BuildConfig& base, Index grid = 60,
                                                     const RangePolicy& policy = {}) {
    const auto data = experiment_data(spec);
    const auto model = experiment_model(spec, data, base);
    return error_vs_partition(model, data.test, grid, policy);
}

// ---------------------------------------------------------------------------
// rate vs n

struct RateVsNParams {
    ManifoldFamily family = ManifoldFamily::S;
    int d = 4;
    std::vector<Index> ns;
    Index trials = 5;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> kappas{0.05, 0.1};
    double s = 2.0;  // regularity used for j*
    double mu = 1.0;
};

struct RateVsNRow {
    Index n = 0;
    double jstar_mean = 0.0;
    double gmra_l2 = 0.0;  // trial mean, uniform partition at j*
    std::vector<double> adaptive_l2;  // per kappa
    double nn_l2 = 0.0;
};

struct RateVsNResult {
    std::vector<RateVsNRow> rows;
    RateFit gmra_fit, nn_fit;  // log10 error against log10 n
    std::vector<RateFit> adaptive_fits;
};

inline std::uint64_t trial_seed(std::uint64_t base, Index n, Index trial) {
    return derive_seed(derive_seed(base, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(trial));
}

inline RateVsNResult run_rate_vs_n(const RateVsNParams& p, const BuildConfig& base) {
    if (p.ns.size() < 3 || p.trials < 1) throw UsageError("rate-vs-n needs >= 3 sample sizes and >= 1 trial");
    RateVsNResult out;
    for (Index n : p.ns) {
        RateVsNRow row;
        row.n = n;
        row.adaptive_l2.assign(p.kappas.size(), 0.0);
        for (Index t = 0; t < p.trials; ++t) {
            const DataSpec spec{p.family, p.d, n, p.sigma, trial_seed(p.seed, n, t), true};
            const auto data = experiment_data(spec);
            const auto model = experiment_model(spec, data, base);
            const int j = choose_jstar(model, p.s, p.mu, static_cast<double>(n));
            row.jstar_mean += j;
            row.gmra_l2 += error_report(model, uniform_partition(model, j), data.test).absolute_l2;
            for (Index k = 0; k < p.kappas.size(); ++k)
                row.adaptive_l2[k] += error_report(model, adaptive_partition(model, p.kappas[k]), data.test).absolute_l2;
            row.nn_l2 += nn_baseline(data.train, data.test).absolute_l2;
        }
        const double t = static_cast<double>(p.trials);
        row.jstar_mean /= t;
        row.gmra_l2 /= t;
        row.nn_l2 /= t;
        for (double& e : row.adaptive_l2) e /= t;
        out.rows.push_back(row);
    }
    std::vector<double> xs, g, nn;
    for (const auto& r : out.rows) {
        xs.push_back(static_cast<double>(r.n));
        g.push_back(r.gmra_l2);
        nn.push_back(r.nn_l2);
    }
    out.gmra_fit = fit_loglog(xs, g);
    out.nn_fit = fit_loglog(xs, nn);
    for (Index k = 0; k < p.kappas.size(); ++k) {
        std::vector<double> a;
        for (const auto& r : out.rows) a.push_back(r.adaptive_l2[k]);
        out.adaptive_fits.push_back(fit_loglog(xs, a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// noise robustness

struct NoiseParams {
    ManifoldFamily family = ManifoldFamily::S;
    int d = 4;
    Index n = 100000;
    std::vector<double> sigmas{0.0, 0.025, 0.05, 0.075, 0.1};
    Index trials = 5;
    std::uint64_t seed = 0;
    std::vector<double> kappas{0.05, 0.5, 1.0};
    double s = 2.0;
    double mu = 1.0;
};

struct NoiseRow {
    double sigma = 0.0;
    double gmra_l2 = 0.0;  // uniform at j*
    double best_l2 = 0.0;  // best uniform scale on test, per trial
    double best_j_mean = 0.0;
    std::vector<double> adaptive_l2;
};

struct NoiseResult {
    std::vector<NoiseRow> rows;
    RateFit gmra_fit, best_fit;  // plain least squares of error against sigma
    std::vector<RateFit> adaptive_fits;
};

/// Trials share their clean sample across sigmas; only the noise level changes.
inline NoiseResult run_noise_robustness(const NoiseParams& p, const BuildConfig& base) {
    if (p.sigmas.size() < 2 || p.trials < 1) throw UsageError("noise-robustness needs >= 2 sigmas and >= 1 trial");
    NoiseResult out;
    for (double sigma : p.sigmas) {
        NoiseRow row;
        row.sigma = sigma;
        row.adaptive_l2.assign(p.kappas.size(), 0.0);
        for (Index t = 0; t < p.trials; ++t) {
            const DataSpec spec{p.family, p.d, p.n, sigma, trial_seed(p.seed, p.n, t), true};
            const auto data = experiment_data(spec);
            const auto model = experiment_model(spec, data, base);
            const int j = choose_jstar(model, p.s, p.mu, static_cast<double>(p.n));
            const auto scales = error_vs_scale(model, nullptr, data.test);
            double best = std::numeric_limits<double>::infinity();
            int best_j = j;
            for (const auto& r : scales) {
                if (r.j == j) row.gmra_l2 += r.test_l2;
                if (r.test_l2 < best) {
                    best = r.test_l2;
                    best_j = r.j;
                }
            }
            row.best_l2 += best;
            row.best_j_mean += best_j;
            for (Index k = 0; k < p.kappas.size(); ++k)
                row.adaptive_l2[k] += error_report(model, adaptive_partition(model, p.kappas[k]), data.test).absolute_l2;
        }
        const double t = static_cast<double>(p.trials);
        row.gmra_l2 /= t;
        row.best_l2 /= t;
        row.best_j_mean /= t;
        for (double& e : row.adaptive_l2) e /= t;
        out.rows.push_back(row);
    }
    std::vector<double> xs, g, b;
    for (const auto& r : out.rows) {
        xs.push_back(r.sigma);
        g.push_back(r.gmra_l2);
        b.push_back(r.best_l2);
    }
    out.gmra_fit = fit_linear(xs, g);
    out.best_fit = fit_linear(xs, b);
    for (Index k = 0; k < p.kappas.size(); ++k) {
        std::vector<double> a;
        for (const auto& r : out.rows) a.push_back(r.adaptive_l2[k]);
        out.adaptive_fits.push_back(fit_linear(xs, a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// axioms and regularity

inline AxiomReport run_axiom_report(const DataSpec& spec, const BuildConfig& base, Index min_members = 2) {
    const auto data = experiment_data(spec);
    return axiom_report(experiment_model(spec, data, base), min_members);
}

inline AsEstimate run_regularity_As(const DataSpec& spec, const BuildConfig& base, const RangePolicy& policy = {}) {
    const auto data = experiment_data(spec);
    const auto model = experiment_model(spec, data, base);
    const auto stats = statistics_half(model, data.train);
    return estimate_As(model, &stats, data.test, policy);
}

inline BsEstimate run_regularity_Bs(const DataSpec& spec, const BuildConfig& base, Index grid = 60,
                                    const SweepPolicy& policy = {}) {
    const auto data = experiment_data(spec);
    const auto model = experiment_model(spec, data, base);
    const auto stats = statistics_half(model, data.train);
    const auto taus = tau_grid(model, CriterionKind::scale_dependent_l2, grid);
    return estimate_Bs(model, stats, taus, CriterionKind::scale_dependent_l2, policy);
}

}  // namespace gmra
