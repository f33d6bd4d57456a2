// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// `acceptance 2 5` runs only the listed criteria.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>

#include "gmra/axioms.hpp"
#include "gmra/experiments.hpp"
#include "gmra/io.hpp"
#include "gmra/ogmra.hpp"

using namespace gmra;

namespace {

constexpr std::uint64_t kSeed = 7;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void info(const std::string& s) { std::printf("    %s\n", s.c_str()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within(double x, double lo, double hi) { return x >= lo && x <= hi; }

struct Built {
    DataSpec spec;
    ExperimentData data;
    GmraModel model;
    PointCloud stats;
};

Built make(ManifoldFamily fam, int d, Index n, bool ortho = false, std::uint64_t seed = kSeed) {
    Built b;
    b.spec = {fam, d, n, 0.0, seed, true};
    b.data = experiment_data(b.spec);
    BuildConfig c;
    c.orthogonal = ortho;
    b.model = experiment_model(b.spec, b.data, c);
    b.stats = statistics_half(b.model, b.data.train);
    return b;
}

const Built& s3() {
    static const Built b = make(ManifoldFamily::S, 3, 100000);
    return b;
}

const Built& z3() {
    static const Built b = make(ManifoldFamily::Z, 3, 100000);
    return b;
}

// ---------------------------------------------------------------------------

Verdict structural() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string cmd = std::string("\"") + GMRA_UNIT_TESTS +
                            "\" --gtest_brief=1 --gtest_filter='CoverNets.*:MultiscaleTree.*:Partition.*:Subtree.*:"
                            "Truncate.*:LocalPca.*:Refinement.*:OrthoBasis.*:OrthoDelta.*' > /dev/null";
    const int rc = std::system(cmd.c_str());
    const double secs = seconds_since(t0);
    return {rc == 0 && secs < 60.0, fmt("oracle suites exit %d in %.1fs (limit 60s)", rc, secs)};
}

Verdict as_s_manifold() {
    const auto& b = s3();
    const auto as = estimate_As(b.model, &b.stats, b.data.test);
    for (const auto& r : as.rows)
        info(fmt("j=%d diam=%.4f train=%.3e test=%.3e%s", r.j, r.mean_diameter, r.train_l2, r.test_l2, r.in_fit ? " *" : ""));
    // build scaling: best of three wall-clock timings at each size
    auto time_build = [](Index n) {
        const DataSpec spec{ManifoldFamily::S, 3, n, 0.0, kSeed, true};
        const auto data = experiment_data(spec);
        double best = 1e300;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto m = experiment_model(spec, data, {});
            best = std::min(best, seconds_since(t0));
            (void)m;
        }
        return best;
    };
    const double t_half = time_build(50000), t_full = time_build(100000);
    const double ratio = t_full / t_half;
    const bool ok = within(as.s, 1.8, 2.4) && ratio < 2.6 && t_full < 300.0;
    return {ok, fmt("S d=3 n=1e5: s=%.3f (want [1.8,2.4], r2=%.3f, %zu scales); build %.2fs vs %.2fs at 5e4, ratio %.2f (want <2.6)",
                    as.s, as.fit.r_squared, as.fit.points_used, t_full, t_half, ratio)};
}

Verdict as_z_manifold() {
    const auto& b = z3();
    const auto as = estimate_As(b.model, &b.stats, b.data.test);
    for (const auto& r : as.rows)
        info(fmt("j=%d diam=%.4f train=%.3e test=%.3e%s", r.j, r.mean_diameter, r.train_l2, r.test_l2, r.in_fit ? " *" : ""));
    return {within(as.s, 1.3, 1.8), fmt("Z d=3 n=1e5: s=%.3f (want [1.3,1.8], r2=%.3f, %zu scales)", as.s, as.fit.r_squared,
                                        as.fit.points_used)};
}

Verdict bs_regularity() {
    struct Case {
        ManifoldFamily fam;
        int d;
        double lo, hi;
        const char* name;
    };
    const Case cases[] = {{ManifoldFamily::S, 4, 1.9, 2.3, "S d=4"},
                          {ManifoldFamily::Z, 4, 2.7, 3.5, "Z d=4"},
                          {ManifoldFamily::Z, 5, 2.2, 2.8, "Z d=5"}};
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        const auto est = run_regularity_Bs({c.fam, c.d, 100000, 0.0, kSeed, true}, {});
        const bool good = within(est.s, c.lo, c.hi);
        ok = ok && good;
        detail += fmt("%s s=%.2f [%.1f,%.1f] %s; ", c.name, est.s, c.lo, c.hi, good ? "ok" : "out");
        info(fmt("%s: s=%.3f r2=%.3f from %zu sweep rows", c.name, est.s, est.fit.r_squared, est.fit.points_used));
    }
    detail.resize(detail.size() - 2);
    return {ok, detail};
}

Verdict partition_slopes() {
    const auto rs = error_vs_partition(s3().model, s3().data.test);
    const auto rz = error_vs_partition(z3().model, z3().data.test);
    if (!rs.uniform_fit || !rz.uniform_fit) return {false, "fit failed: " + rs.fit_error + rz.fit_error};
    const double su = rs.uniform_fit->slope, sa = rs.adaptive_fit->slope;
    const double zu = rz.uniform_fit->slope, za = rz.adaptive_fit->slope;
    const bool ok = within(su, -0.87, -0.47) && within(sa, -0.87, -0.47) && within(zu, -0.65, -0.35) &&
                    within(za, -0.95, -0.55) && za < zu - 0.1;
    return {ok, fmt("S uniform %.3f adaptive %.3f (want [-0.87,-0.47]); Z uniform %.3f (want -0.5+-0.15) adaptive %.3f "
                    "(want -0.75+-0.2, and < uniform-0.1)",
                    su, sa, zu, za)};
}

Verdict rate_vs_n() {
    RateVsNParams p;
    p.family = ManifoldFamily::S;
    p.d = 4;
    for (int i = 0; i <= 6; ++i) p.ns.push_back(static_cast<Index>(1000) << i);
    p.trials = 5;
    p.seed = kSeed;
    p.kappas = {0.1};
    const auto r = run_rate_vs_n(p, {});
    for (const auto& row : r.rows)
        info(fmt("n=%zu j*=%.1f gmra=%.4e adaptive=%.4e nn=%.4e", row.n, row.jstar_mean, row.gmra_l2, row.adaptive_l2[0],
                 row.nn_l2));
    const auto& last = r.rows.back();
    const double ratio = last.adaptive_l2[0] / last.gmra_l2;
    const bool ok = r.gmra_fit.slope < r.nn_fit.slope && ratio <= 1.2;
    return {ok, fmt("S d=4: GMRA slope %.3f vs NN slope %.3f (want steeper); adaptive/GMRA at n=%zu: %.3f (want <=1.2)",
                    r.gmra_fit.slope, r.nn_fit.slope, last.n, ratio)};
}

Verdict noise() {
    NoiseParams p;
    p.family = ManifoldFamily::S;
    p.d = 4;
    p.n = 100000;
    p.trials = 5;
    p.seed = kSeed;
    p.kappas = {0.5, 1.0};
    const auto r = run_noise_robustness(p, {});
    double best_at_05 = -1.0;
    for (const auto& row : r.rows) {
        info(fmt("sigma=%.3f j*=%.4e best=%.4e (j %.1f) k0.5=%.4e k1=%.4e", row.sigma, row.gmra_l2, row.best_l2,
                 row.best_j_mean, row.adaptive_l2[0], row.adaptive_l2[1]));
        if (row.sigma == 0.05) best_at_05 = row.best_l2;
    }
    auto good = [](const RateFit& f) { return f.r_squared >= 0.9 && f.slope > 0.0; };
    const bool ok = good(r.gmra_fit) && good(r.adaptive_fits[0]) && good(r.adaptive_fits[1]) && best_at_05 < 0.05;
    return {ok, fmt("uniform slope %.3f r2 %.3f; adaptive k=0.5 slope %.3f r2 %.3f; k=1 slope %.3f r2 %.3f; best-scale error "
                    "at sigma 0.05: %.4f (want <0.05)",
                    r.gmra_fit.slope, r.gmra_fit.r_squared, r.adaptive_fits[0].slope, r.adaptive_fits[0].r_squared,
                    r.adaptive_fits[1].slope, r.adaptive_fits[1].r_squared, best_at_05)};
}

Verdict axioms() {
    const auto& m = s3().model;
    const auto rep = axiom_report(m, m.config.d + 1);
    double t3_worst = 1e300, t4_worst = 0.0;
    int t3_at = 0, t4_at = 0;
    for (Index i = 0; i < rep.per_scale.size(); ++i) {
        const auto& s = rep.per_scale[i];
        info(fmt("j=%d cells=%zu measured=%zu theta3 mean %.4f sd %.4f; theta4 mean %.4f sd %.4f", s.j, s.cell_count,
                 s.measured, s.theta3_mean, s.theta3_std, s.theta4_mean, s.theta4_std));
        if (s.measured == 0) continue;
        if (s.theta3_mean < t3_worst) {
            t3_worst = s.theta3_mean;
            t3_at = s.j;
        }
        if (i >= 2 && s.theta4_mean > t4_worst) {
            t4_worst = s.theta4_mean;
            t4_at = s.j;
        }
    }
    const bool ok = t3_worst >= 0.05 && t4_worst <= 0.5;
    return {ok, fmt("S d=3 n=1e5 per-scale means: smallest theta3 %.4f at j=%d (want >=0.05); largest theta4 past the two "
                    "coarsest scales %.4f at j=%d (want <=0.5)",
                    t3_worst, t3_at, t4_worst, t4_at)};
}

Verdict encoding_contract() {
    const auto& b = s3();
    const auto& m = b.model;
    struct Case {
        const GmraModel* model;
        Partition part;
        const PointCloud* test;
    };
    std::vector<Case> cases;
    cases.push_back({&m, uniform_partition(m, choose_jstar(m, 2.0, 1.0)), &b.data.test});
    cases.push_back({&m, adaptive_partition(m, 0.5), &b.data.test});
    Index codes = 0, violations = 0;
    double worst = 0.0;
    for (const auto& c : cases) {
        CodeSet set;
        set.ortho = c.part.ortho;
        for (Index i = 0; i < c.test->size(); ++i) set.codes.push_back(encode(*c.model, c.part, c.test->row(i).transpose()));
        const auto back = decode_codes(encode_codes(set));
        for (Index i = 0; i < c.test->size(); ++i) {
            const Vector x = c.test->row(i).transpose();
            const auto& e = back.codes[i];
            const Index cell = partition_cell(*c.model, c.part, x);
            const Index width = cell == kNone ? 0 : static_cast<Index>((c.part.ortho ? c.model->summary(cell).ortho_basis
                                                                                         : c.model->summary(cell).basis)
                                                                            .cols());
            const bool id_ok = cell == kNone ? e.k == Encoding::kOutlier
                                             : (e.j == c.model->tree.cells[cell].scale && e.k == c.model->tree.cells[cell].k);
            if (!id_ok || static_cast<Index>(e.coefficients.size()) != width || width > c.model->config.d) ++violations;
            const double gap = std::abs((x - c.model->decode(e, back.ortho)).norm() -
                                        (x - adaptive_projector(*c.model, c.part, x)).norm());
            worst = std::max(worst, gap);
            ++codes;
        }
    }
    return {violations == 0 && worst <= 1e-10,
            fmt("%zu codes (uniform at j*, adaptive kappa 0.5): %zu contract violations; worst |decode error - "
                "projector error| %.2e (want <=1e-10)",
                codes, violations, worst)};
}

Verdict orthogonal() {
    const auto b = make(ManifoldFamily::S, 3, 10000, true);
    const auto& m = b.model;
    Index cells = 0, monotone = 0, points = 0, point_monotone = 0;
    for (Index c = 0; c < m.tree.size(); ++c) {
        if (!m.has_summary(c) || m.tree.parent(c) == kNone) continue;
        const auto& s = m.summary(c);
        const auto& ps = m.summary(m.tree.parent(c));
        double child_res = 0.0, parent_res = 0.0;
        for (Index i : m.tree.cells[c].members) {
            const Vector x = b.stats.row(i).transpose();
            const double rc = (x - project_ortho(s, x)).squaredNorm(), rp = (x - project_ortho(ps, x)).squaredNorm();
            child_res += rc;
            parent_res += rp;
            ++points;
            if (std::sqrt(rc) <= std::sqrt(rp) + 1e-10) ++point_monotone;
        }
        ++cells;
        if (std::sqrt(child_res) <= std::sqrt(parent_res) + 1e-10) ++monotone;
    }
    info(fmt("pointwise residual monotonicity (not required): %zu of %zu", point_monotone, points));
    bool sizes_ok = true;
    Index last = 0;
    std::string sizes;
    for (double kappa : {1.0, 0.3, 0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5}) {
        const auto part = adaptive_partition(m, kappa, CriterionKind::orthogonal);
        sizes_ok = sizes_ok && part.size() >= last;
        last = part.size();
        sizes += std::to_string(part.size()) + " ";
    }
    info("orthogonal partition sizes over the kappa grid: " + sizes);
    const double b0 = quasi_orthogonality_estimate(m, b.stats, 500, kSeed, true);
    const double b0_plain = quasi_orthogonality_estimate(m, b.stats, 500, kSeed, false);
    const bool ok = monotone == cells && sizes_ok && b0 <= 1.0 + 1e-8;
    return {ok, fmt("S d=3 n=1e4: residual monotone in %zu of %zu cells; sweep sizes %s; B0 orthogonal %.10f (want <=1+1e-8), "
                    "plain %.4f",
                    monotone, cells, sizes_ok ? "monotone" : "NOT monotone", b0, b0_plain)};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
        {1, structural}, {2, as_s_manifold}, {3, as_z_manifold}, {4, bs_regularity}, {5, partition_slopes},
        {6, rate_vs_n},  {7, noise},         {8, axioms},        {9, encoding_contract}, {10, orthogonal},
    };
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %2d %s (%.0fs): %s\n", id, v.pass ? "PASS" : "FAIL", seconds_since(t0), v.detail.c_str());
        std::fflush(stdout);
        if (!v.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
