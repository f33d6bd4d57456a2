#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gmra/axioms.hpp"
#include "gmra/build.hpp"
#include "gmra/eval.hpp"
#include "gmra/experiments.hpp"
#include "gmra/io.hpp"
#include "gmra/ogmra.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gmra;

namespace {

// ---------------------------------------------------------------------------
// small helpers

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("gmra");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("GMRA_LOG");
    const std::string level = env ? env : "error";
    if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else spdlog::set_level(spdlog::level::err);
}

PointFormat format_for(const fs::path& p, const std::string& flag) {
    if (flag == "csv") return PointFormat::csv;
    if (flag == "binary") return PointFormat::binary;
    if (flag != "auto") throw UsageError("--format must be auto, binary or csv");
    return p.extension() == ".csv" ? PointFormat::csv : PointFormat::binary;
}

ManifoldFamily parse_family(const std::string& s) {
    if (s == "s" || s == "S") return ManifoldFamily::S;
    if (s == "z" || s == "Z") return ManifoldFamily::Z;
    throw UsageError("--manifold must be s or z");
}

CellMode parse_mode(const std::string& s) {
    if (s == "simple") return CellMode::simple;
    if (s == "strict") return CellMode::strict;
    throw UsageError("--mode must be simple or strict");
}

CriterionKind parse_kind(const std::string& s) {
    if (s == "l2" || s == "scale_dependent_l2") return CriterionKind::scale_dependent_l2;
    if (s == "linf" || s == "scale_dependent_linf") return CriterionKind::scale_dependent_linf;
    if (s == "flat" || s == "scale_independent_l2") return CriterionKind::scale_independent_l2;
    if (s == "flat-linf" || s == "scale_independent_linf") return CriterionKind::scale_independent_linf;
    if (s == "ortho" || s == "orthogonal") return CriterionKind::orthogonal;
    throw UsageError("unknown sweep criterion '" + s + "'");
}

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

json fit_json(const std::string& name, const RateFit& f) {
    return {{"name", name},       {"slope", f.slope},       {"intercept", f.intercept}, {"r_squared", f.r_squared},
            {"points_used", f.points_used}, {"x_lo", f.x_lo}, {"x_hi", f.x_hi},           {"degenerate", f.degenerate}};
}

// nlohmann writes NaN as null; that is what we want in reports.
void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    binary::write_file_atomic(path, text);
    spdlog::info("wrote {}", path);
}

/// Rows of a report as CSV; columns come from the first row's keys, in order.
std::string rows_csv(const json& rows) {
    std::string out;
    if (rows.empty()) return out;
    std::vector<std::string> cols;
    for (auto it = rows[0].begin(); it != rows[0].end(); ++it) cols.push_back(it.key());
    for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
    out += '\n';
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) out += ',';
            const auto& v = r.at(cols[c]);
            if (v.is_number_float()) out += num(v.get<double>());
            else if (v.is_null()) out += "nan";
            else if (v.is_string()) out += v.get<std::string>();
            else out += v.dump();
        }
        out += '\n';
    }
    return out;
}

json report_json(const ErrorReport& r) {
    return {{"absolute_l2", r.absolute_l2}, {"absolute_linf", r.absolute_linf}, {"relative_l2", r.relative_l2},
            {"relative_linf", r.relative_linf}, {"relative_defined", r.relative_defined}, {"n_test", r.n_test}};
}

void check_dims(const GmraModel& model, const PointCloud& cloud) {
    if (cloud.dim() != static_cast<Index>(model.global_mean.size()))
        throw DataError("point dimension " + std::to_string(cloud.dim()) + " does not match model dimension " +
                        std::to_string(model.global_mean.size()));
}

// ---------------------------------------------------------------------------
// options shared by build and experiments

struct BuildFlags {
    std::string dim_mode = "fixed";
    double gamma = 0.5;
    std::string mode = "simple";
    int max_levels = 40;
    bool orthogonal = false;
    Index ortho_cap = 0;

    void add(CLI::App* app) {
        app->add_option("--dim-mode", dim_mode, "fixed or energy:Q")->capture_default_str();
        app->add_option("--gamma", gamma, "scale ratio")->capture_default_str();
        app->add_option("--mode", mode, "simple or strict")->capture_default_str();
        app->add_option("--max-levels", max_levels)->capture_default_str();
        app->add_flag("--orthogonal", orthogonal, "also build the orthogonal variant");
        app->add_option("--ortho-cap", ortho_cap, "orthogonal basis size cap (0: ambient)");
    }

    BuildConfig config(Index d, std::uint64_t seed, int threads) const {
        BuildConfig c;
        c.d = d;
        c.dim_mode = parse_dim_mode(dim_mode);
        c.gamma = gamma;
        c.mode = parse_mode(mode);
        c.seed = seed;
        c.max_levels = max_levels;
        c.orthogonal = orthogonal;
        c.ortho_cap = ortho_cap;
        c.threads = threads;
        return c;
    }
};

struct ExperimentFlags {
    std::string name;
    std::string manifold = "s";
    int d = 3;
    Index n = 20000;
    std::uint64_t seed = 1;
    double sigma = 0.0;
    bool noisy_test = false;
    std::vector<double> kappas;
    std::vector<double> sigmas;
    std::vector<Index> ns;
    Index n_min = 1000;
    Index steps = 7;
    Index trials = 5;
    Index grid = 60;
    Index min_members = 0;
    double s = 2.0;
    double mu = 1.0;
    std::string model_class = "As";
    std::string out;
    std::string csv;
    BuildFlags build;

    DataSpec data() const { return {parse_family(manifold), d, n, sigma, seed, !noisy_test}; }
};

json experiment_params(const ExperimentFlags& f, const BuildConfig& base) {
    json p = {{"manifold", f.manifold}, {"d", f.d},         {"n", f.n},         {"seed", f.seed},
              {"sigma", f.sigma},       {"noise_train_only", !f.noisy_test}, {"build", config_to_json(base)}};
    return p;
}

json run_experiment(const ExperimentFlags& f, const BuildConfig& base) {
    json out;
    out["experiment"] = f.name;
    out["params"] = experiment_params(f, base);
    json rows = json::array();
    json fits = json::array();

    auto scale_rows = [](const std::vector<ScaleRow>& rs) {
        json a = json::array();
        for (const auto& r : rs)
            a.push_back({{"j", r.j},
                         {"cells", r.cells},
                         {"nonempty_cells", r.nonempty_cells},
                         {"rich_fraction", r.rich_fraction},
                         {"mean_diameter", r.mean_diameter},
                         {"train_l2", r.train_l2},
                         {"test_l2", r.test_l2},
                         {"test_linf", r.test_linf},
                         {"in_fit", r.in_fit}});
        return a;
    };

    if (f.name == "error-vs-scale") {
        const auto res = run_error_vs_scale(f.data(), base);
        rows = scale_rows(res.as ? res.as->rows : res.rows);
        if (res.as) fits.push_back(fit_json("As", res.as->fit));
        if (!res.fit_error.empty()) out["fit_error"] = res.fit_error;
    } else if (f.name == "error-vs-partition") {
        const auto res = run_error_vs_partition(f.data(), base, f.grid);
        for (const auto* group : {&res.uniform, &res.adaptive}) {
            const char* kind = group == &res.uniform ? "uniform" : "adaptive";
            for (const auto& r : *group)
                rows.push_back({{"kind", kind},
                                {"j", r.j},
                                {"tau", r.tau},
                                {"partition_size", r.size},
                                {"weighted_complexity", r.weighted_complexity},
                                {"test_l2", r.test_l2},
                                {"in_fit", r.in_fit}});
        }
        if (res.uniform_fit) fits.push_back(fit_json("uniform", *res.uniform_fit));
        if (res.adaptive_fit) fits.push_back(fit_json("adaptive", *res.adaptive_fit));
        if (!res.fit_error.empty()) out["fit_error"] = res.fit_error;
    } else if (f.name == "rate-vs-n") {
        RateVsNParams p;
        p.family = parse_family(f.manifold);
        p.d = f.d;
        p.ns = f.ns;
        if (p.ns.empty())
            for (Index i = 0; i < f.steps; ++i) p.ns.push_back(f.n_min << i);
        p.trials = f.trials;
        p.sigma = f.sigma;
        p.seed = f.seed;
        if (!f.kappas.empty()) p.kappas = f.kappas;
        p.s = f.s;
        p.mu = f.mu;
        out["params"]["ns"] = p.ns;
        out["params"]["trials"] = p.trials;
        out["params"]["kappas"] = p.kappas;
        const auto res = run_rate_vs_n(p, base);
        for (const auto& r : res.rows) {
            json row = {{"n", r.n}, {"jstar_mean", r.jstar_mean}, {"gmra_l2", r.gmra_l2}, {"nn_l2", r.nn_l2}};
            for (Index k = 0; k < p.kappas.size(); ++k) row["adaptive_l2_k" + num(p.kappas[k])] = r.adaptive_l2[k];
            rows.push_back(row);
        }
        fits.push_back(fit_json("gmra_jstar", res.gmra_fit));
        fits.push_back(fit_json("nn", res.nn_fit));
        for (Index k = 0; k < p.kappas.size(); ++k) fits.push_back(fit_json("adaptive_k" + num(p.kappas[k]), res.adaptive_fits[k]));
    } else if (f.name == "noise-robustness") {
        NoiseParams p;
        p.family = parse_family(f.manifold);
        p.d = f.d;
        p.n = f.n;
        if (!f.sigmas.empty()) p.sigmas = f.sigmas;
        p.trials = f.trials;
        p.seed = f.seed;
        if (!f.kappas.empty()) p.kappas = f.kappas;
        p.s = f.s;
        p.mu = f.mu;
        out["params"]["sigmas"] = p.sigmas;
        out["params"]["trials"] = p.trials;
        out["params"]["kappas"] = p.kappas;
        const auto res = run_noise_robustness(p, base);
        for (const auto& r : res.rows) {
            json row = {{"sigma", r.sigma}, {"gmra_l2", r.gmra_l2}, {"best_l2", r.best_l2}, {"best_j_mean", r.best_j_mean}};
            for (Index k = 0; k < p.kappas.size(); ++k) row["adaptive_l2_k" + num(p.kappas[k])] = r.adaptive_l2[k];
            rows.push_back(row);
        }
        fits.push_back(fit_json("gmra_jstar", res.gmra_fit));
        fits.push_back(fit_json("best_scale", res.best_fit));
        for (Index k = 0; k < p.kappas.size(); ++k) fits.push_back(fit_json("adaptive_k" + num(p.kappas[k]), res.adaptive_fits[k]));
    } else if (f.name == "axiom-report") {
        const Index floor = f.min_members ? f.min_members : static_cast<Index>(f.d) + 1;
        out["params"]["min_members"] = floor;
        const auto rep = run_axiom_report(f.data(), base, floor);
        for (const auto& a : rep.per_scale)
            rows.push_back({{"j", a.j},
                            {"cells", a.cell_count},
                            {"measured", a.measured},
                            {"skipped", a.skipped},
                            {"theta2_max", a.theta2_max},
                            {"theta3_mean", a.theta3_mean},
                            {"theta3_std", a.theta3_std},
                            {"theta3_min", a.theta3_min},
                            {"theta4_mean", a.theta4_mean},
                            {"theta4_std", a.theta4_std},
                            {"theta4_max", a.theta4_max},
                            {"theta4_undefined", a.theta4_undefined}});
        out["summary"] = {{"theta3_min", rep.theta3_min}, {"theta4_max", rep.theta4_max}};
    } else if (f.name == "regularity") {
        out["params"]["model_class"] = f.model_class;
        if (f.model_class == "As") {
            const auto res = run_regularity_As(f.data(), base);
            rows = scale_rows(res.rows);
            fits.push_back(fit_json("As", res.fit));
            out["s"] = res.s;
        } else if (f.model_class == "Bs") {
            const auto res = run_regularity_Bs(f.data(), base, f.grid);
            for (Index i = 0; i < res.rows.size(); ++i) {
                const auto& r = res.rows[i];
                rows.push_back({{"tau", r.tau},
                                {"partition_size", r.partition_size},
                                {"weighted_complexity", r.weighted_complexity},
                                {"train_l2", r.train_l2},
                                {"in_fit", static_cast<bool>(res.in_fit[i])}});
            }
            fits.push_back(fit_json("Bs", res.fit));
            out["s"] = res.s;
        } else {
            throw UsageError("--model-class must be As or Bs");
        }
    } else {
        throw UsageError("unknown experiment '" + f.name + "'");
    }
    out["rows"] = rows;
    out["fits"] = fits;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"gmra: geometric multi-resolution analysis"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads (0: auto)")->capture_default_str();

    // synth
    auto* synth = app.add_subcommand("synth", "sample an S or Z manifold");
    std::string manifold = "s", out, format = "auto";
    int d = 3;
    Index n = 1000;
    double noise = 0.0;
    std::uint64_t seed = 0;
    synth->add_option("--manifold", manifold)->required();
    synth->add_option("--d", d)->required();
    synth->add_option("--n", n)->required();
    synth->add_option("--noise", noise)->capture_default_str();
    synth->add_option("--seed", seed)->capture_default_str();
    synth->add_option("--out", out)->required();
    synth->add_option("--format", format, "auto, binary or csv")->capture_default_str();

    // build
    auto* build = app.add_subcommand("build", "build a model from a point file");
    std::string in, model_path;
    Index dim = 0;
    BuildFlags bflags;
    build->add_option("--in", in)->required();
    build->add_option("--dim", dim, "intrinsic dimension")->required();
    build->add_option("--seed", seed)->capture_default_str();
    build->add_option("--out", model_path)->required();
    build->add_option("--format", format)->capture_default_str();
    bflags.add(build);

    // encode / decode
    auto* encode = app.add_subcommand("encode", "encode points against a partition");
    std::string partition_spec;
    encode->add_option("--model", model_path)->required();
    encode->add_option("--in", in)->required();
    encode->add_option("--partition", partition_spec)->required();
    encode->add_option("--out", out)->required();
    encode->add_option("--format", format)->capture_default_str();

    auto* decode = app.add_subcommand("decode", "decode a codes file back to points");
    decode->add_option("--model", model_path)->required();
    decode->add_option("--in", in)->required();
    decode->add_option("--out", out)->required();
    decode->add_option("--format", format)->capture_default_str();

    // eval
    auto* eval = app.add_subcommand("eval", "error report or threshold sweep on a test set");
    std::string sweep_kind, train_path;
    Index grid = 60;
    eval->add_option("--model", model_path)->required();
    eval->add_option("--in", in, "test points")->required();
    eval->add_option("--partition", partition_spec);
    eval->add_option("--sweep", sweep_kind, "criterion: l2, linf, flat, flat-linf, ortho");
    eval->add_option("--train", train_path, "training file the model was built from (sweep train_l2)");
    eval->add_option("--grid", grid)->capture_default_str();
    eval->add_option("--out", out);
    eval->add_option("--format", format)->capture_default_str();

    // experiment
    auto* exp = app.add_subcommand("experiment", "run a synthetic experiment");
    ExperimentFlags ef;
    exp->add_option("name", ef.name, "rate-vs-n | error-vs-scale | error-vs-partition | noise-robustness | axiom-report | regularity")
        ->required();
    exp->add_option("--manifold", ef.manifold)->capture_default_str();
    exp->add_option("--d", ef.d)->capture_default_str();
    exp->add_option("--n", ef.n, "training points")->capture_default_str();
    exp->add_option("--seed", ef.seed)->capture_default_str();
    exp->add_option("--noise", ef.sigma, "train noise sigma")->capture_default_str();
    exp->add_flag("--noisy-test", ef.noisy_test, "add noise to the test half too");
    exp->add_option("--kappas", ef.kappas)->delimiter(',');
    exp->add_option("--sigmas", ef.sigmas)->delimiter(',');
    exp->add_option("--ns", ef.ns)->delimiter(',');
    exp->add_option("--n-min", ef.n_min)->capture_default_str();
    exp->add_option("--steps", ef.steps)->capture_default_str();
    exp->add_option("--trials", ef.trials)->capture_default_str();
    exp->add_option("--grid", ef.grid)->capture_default_str();
    exp->add_option("--min-members", ef.min_members, "axiom-report member floor (0: d+1)");
    exp->add_option("--s", ef.s, "regularity used for j*")->capture_default_str();
    exp->add_option("--mu", ef.mu)->capture_default_str();
    exp->add_option("--model-class", ef.model_class, "As or Bs")->capture_default_str();
    exp->add_option("--out", ef.out, "JSON report (default stdout)");
    exp->add_option("--csv", ef.csv, "rows as CSV");
    ef.build.add(exp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const auto t0 = std::chrono::steady_clock::now();
        if (*synth) {
            if (d < 1) throw UsageError("--d must be >= 1");
            if (!(noise >= 0.0)) throw UsageError("--noise must be >= 0");
            const auto cloud = synth_manifold({parse_family(manifold), d, noise, seed}, n);
            save_points(cloud, out, format_for(out, format));
        } else if (*build) {
            const auto cloud = load_points(in, format_for(in, format));
            auto config = bflags.config(dim, seed, threads);
            spdlog::info("building on {} points in R^{}", cloud.size(), cloud.dim());
            const auto model = build_model(cloud, config);
            save_model(model, model_path);
        } else if (*encode) {
            auto model = load_model(model_path);
            model.config.threads = threads;
            const auto cloud = load_points(in, format_for(in, format));
            check_dims(model, cloud);
            const auto part = partition_from_spec(model, partition_spec);
            CodeSet set;
            set.ortho = part.ortho;
            set.codes.resize(cloud.size());
            parallel_for(cloud.size(), threads, [&](Index i) { set.codes[i] = gmra::encode(model, part, cloud.row(i).transpose()); });
            binary::write_file_atomic(out, encode_codes(set));
        } else if (*decode) {
            const auto model = load_model(model_path);
            const auto set = decode_codes(binary::read_file(in));
            Matrix m(static_cast<Eigen::Index>(set.codes.size()), model.global_mean.size());
            for (Index i = 0; i < set.codes.size(); ++i)
                m.row(static_cast<Eigen::Index>(i)) = gmra::decode(model, set.codes[i], set.ortho).transpose();
            save_points(PointCloud(std::move(m)), out, format_for(out, format));
        } else if (*eval) {
            auto model = load_model(model_path);
            model.config.threads = threads;
            const auto test = load_points(in, format_for(in, format));
            check_dims(model, test);
            if (partition_spec.empty() == sweep_kind.empty())
                throw UsageError("eval needs exactly one of --partition or --sweep");
            if (!partition_spec.empty()) {
                const auto part = partition_from_spec(model, partition_spec);
                json j = report_json(error_report(model, part, test));
                j["partition"] = partition_spec;
                j["partition_size"] = part.size();
                write_text(out, j.dump(2) + "\n");
            } else {
                const auto kind = parse_kind(sweep_kind);
                const auto taus = tau_grid(model, kind, grid);
                std::optional<PointCloud> train;
                if (!train_path.empty()) {
                    const auto full = load_points(train_path, format_for(train_path, format));
                    check_dims(model, full);
                    if (full.size() != model.n_train * 2 && full.size() != model.n_train * 2 + 1)
                        throw DataError("--train does not look like the file the model was built from");
                    train = full.subset(split_even(full, model.config.seed).statistics_half);
                }
                // without --train the train_l2 column reports the test error
                const auto rows = partition_sweep(model, kind, taus, train ? *train : test, &test);
                std::string csv = "tau,criterion,partition_size,weighted_complexity,train_l2,test_l2,test_linf\n";
                for (const auto& r : rows)
                    csv += num(r.tau) + "," + std::string(to_string(r.kind)) + "," + std::to_string(r.partition_size) + "," +
                           num(r.weighted_complexity) + "," + num(r.train_l2) + "," + num(r.test_l2) + "," +
                           num(r.test_linf) + "\n";
                write_text(out, csv);
            }
        } else if (*exp) {
            const auto base = ef.build.config(static_cast<Index>(ef.d), 0, threads);
            const auto report = run_experiment(ef, base);
            write_text(ef.out, report.dump(2) + "\n");
            if (!ef.csv.empty()) write_text(ef.csv, rows_csv(report["rows"]));
        }
        spdlog::info("done in {:.2f}s",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const DataError& e) {
        spdlog::error("{}", e.what());
        return 3;
    } catch (const NumericError& e) {
        spdlog::error("{}", e.what());
        return 4;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 3;
    }
    return 0;
}
