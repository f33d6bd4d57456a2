#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "binary.hpp"
#include "random.hpp"
#include "types.hpp"

namespace gmra {

struct Provenance {
    std::string generator;
    std::uint64_t seed = 0;
};

/// n x D sample matrix. Immutable by convention once built.
struct PointCloud {
    Matrix data;
    std::optional<Provenance> provenance;

    PointCloud() = default;
    explicit PointCloud(Matrix m, std::optional<Provenance> p = std::nullopt)
        : data(std::move(m)), provenance(std::move(p)) {}

    Index size() const { return static_cast<Index>(data.rows()); }
    Index dim() const { return static_cast<Index>(data.cols()); }
    auto row(Index i) const { return data.row(static_cast<Eigen::Index>(i)); }

    /// Copies the listed rows into a new cloud.
    PointCloud subset(std::span<const Index> indices) const {
        Matrix m(static_cast<Eigen::Index>(indices.size()), data.cols());
        for (std::size_t i = 0; i < indices.size(); ++i)
            m.row(static_cast<Eigen::Index>(i)) = row(indices[i]);
        return PointCloud(std::move(m));
    }
};

inline void validate(const PointCloud& cloud) {
    if (cloud.size() < 1 || cloud.dim() < 1) throw DataError("point cloud must have n >= 1 and D >= 1");
    if (!cloud.data.allFinite()) throw DataError("point cloud contains non-finite values");
}

// ---------------------------------------------------------------------------
// Files

enum class PointFormat { binary, csv };

inline constexpr std::string_view kPointsMagic = "GMRAPTS1";

inline std::string encode_points_binary(const PointCloud& cloud) {
    binary::Writer w;
    w.bytes(kPointsMagic);
    w.u64(cloud.size());
    w.u64(cloud.dim());
    for (Index i = 0; i < cloud.size(); ++i)
        for (Index c = 0; c < cloud.dim(); ++c)
            w.f64(cloud.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
    return w.take();
}

inline PointCloud decode_points_binary(std::string_view bytes) {
    binary::Reader r(bytes);
    if (bytes.size() < 24 || r.bytes(8) != kPointsMagic) throw DataError("bad point file header");
    const auto n = r.u64();
    const auto dim = r.u64();
    if (n == 0 || dim == 0) throw DataError("point file declares empty dimensions");
    if (r.remaining() / 8 / dim < n || r.remaining() != n * dim * 8)
        throw DataError("point file payload does not match header (n=" + std::to_string(n) +
                        ", D=" + std::to_string(dim) + ")");
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) = r.f64();
    PointCloud cloud(std::move(m));
    validate(cloud);
    return cloud;
}

inline std::string encode_points_csv(const PointCloud& cloud) {
    std::string out;
    char buf[64];
    for (Index i = 0; i < cloud.size(); ++i) {
        for (Index c = 0; c < cloud.dim(); ++c) {
            if (c) out.push_back(',');
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf,
                                           cloud.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
            out.append(buf, end);
        }
        out.push_back('\n');
    }
    return out;
}

inline PointCloud decode_points_csv(std::string_view text) {
    std::vector<double> values;
    Index dim = 0;
    Index rows = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        Index count = 0;
        std::size_t p = 0;
        while (true) {
            auto comma = line.find(',', p);
            auto field = line.substr(p, comma == std::string_view::npos ? std::string_view::npos : comma - p);
            while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
            while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc() || ptr != field.data() + field.size())
                throw DataError("malformed CSV value on row " + std::to_string(rows + 1));
            values.push_back(v);
            ++count;
            if (comma == std::string_view::npos) break;
            p = comma + 1;
        }
        if (rows == 0) dim = count;
        else if (count != dim)
            throw DataError("CSV row " + std::to_string(rows + 1) + " has " + std::to_string(count) +
                            " columns, expected " + std::to_string(dim));
        ++rows;
    }
    if (rows == 0) throw DataError("CSV file contains no points");
    Matrix m = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    PointCloud cloud(std::move(m));
    validate(cloud);
    return cloud;
}

inline PointCloud load_points(const std::filesystem::path& path, PointFormat format) {
    const auto bytes = binary::read_file(path);
    return format == PointFormat::binary ? decode_points_binary(bytes) : decode_points_csv(bytes);
}

inline void save_points(const PointCloud& cloud, const std::filesystem::path& path,
                        PointFormat format = PointFormat::binary) {
    binary::write_file_atomic(path, format == PointFormat::binary ? encode_points_binary(cloud)
                                                                  : encode_points_csv(cloud));
}

// ---------------------------------------------------------------------------
// Splitting

/// construction_half builds the tree; statistics_half feeds the local PCA.
struct SplitPair {
    std::vector<Index> construction_half;
    std::vector<Index> statistics_half;
};

/// Seeded random permutation cut in the middle; the construction half gets the extra point when n is odd.
inline SplitPair split_even(Index n, std::uint64_t seed) {
    if (n < 2) throw DataError("split_even needs at least 2 points");
    std::vector<Index> perm(n);
    for (Index i = 0; i < n; ++i) perm[i] = i;
    Rng rng(seed);
    rng.shuffle(perm);
    const Index half = (n + 1) / 2;
    SplitPair out;
    out.construction_half.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half));
    out.statistics_half.assign(perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end());
    return out;
}

inline SplitPair split_even(const PointCloud& cloud, std::uint64_t seed) { return split_even(cloud.size(), seed); }

// ---------------------------------------------------------------------------
// Synthetic S / Z manifolds

enum class ManifoldFamily { S, Z };

struct ManifoldSpec {
    ManifoldFamily family = ManifoldFamily::S;
    int intrinsic_dim = 1;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Two tangent unit half circles: left half of the circle about (0,1), then the right half
/// of the circle about (0,-1). Arc length in [0, 2*pi].
inline constexpr double kSCurveLength = 2.0 * std::numbers::pi;

inline std::array<double, 2> s_curve_point(double arc) {
    if (arc <= std::numbers::pi) return {-std::sin(arc), 1.0 + std::cos(arc)};
    const double phi = arc - std::numbers::pi;
    return {std::sin(phi), -1.0 + std::cos(phi)};
}

/// Segments (0,1)->(1,1)->(0,0)->(1,0).
inline const double kZCurveLength = 2.0 + 2.0 * std::numbers::sqrt2;

inline std::array<double, 2> z_curve_point(double arc) {
    constexpr double diag = std::numbers::sqrt2;
    if (arc <= 1.0) return {arc, 1.0};
    if (arc <= 1.0 + diag) {
        const double t = (arc - 1.0) / diag;
        return {1.0 - t, 1.0 - t};
    }
    return {std::min(arc - 1.0 - diag, 1.0), 0.0};
}

inline constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;

/// Adds (sigma/sqrt(D)) * N(0,1) to every coordinate, row by row, so E|noise|^2 = sigma^2.
inline void add_gaussian_noise(Matrix& m, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw UsageError("noise sigma must be >= 0");
    if (sigma == 0.0) return;
    Rng noise(seed);
    const double scale = sigma / std::sqrt(static_cast<double>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(i, c) += scale * noise.normal();
}

/// Ambient dimension is d+1: (x1,x2) on the curve, x3..x_{d+1} uniform on [0,1],
/// then (sigma/sqrt(D)) * standard Gaussian added to every coordinate.
inline PointCloud synth_manifold(const ManifoldSpec& spec, Index n) {
    if (spec.intrinsic_dim < 1) throw UsageError("intrinsic dimension must be >= 1");
    if (!(spec.noise_sigma >= 0.0)) throw UsageError("noise sigma must be >= 0");
    if (n < 1) throw UsageError("n must be >= 1");
    const auto dim = static_cast<Eigen::Index>(spec.intrinsic_dim + 1);
    Matrix m(static_cast<Eigen::Index>(n), dim);
    Rng rng(spec.seed);
    const bool is_s = spec.family == ManifoldFamily::S;
    const double length = is_s ? kSCurveLength : kZCurveLength;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double arc = rng.uniform() * length;
        const auto xy = is_s ? s_curve_point(arc) : z_curve_point(arc);
        m(i, 0) = xy[0];
        m(i, 1) = xy[1];
        for (Eigen::Index c = 2; c < dim; ++c) m(i, c) = rng.uniform();
    }
    // Separate stream so the clean manifold sample is identical for every sigma.
    if (spec.noise_sigma > 0.0) add_gaussian_noise(m, spec.noise_sigma, derive_seed(spec.seed, kNoiseStream));
    return PointCloud(std::move(m), Provenance{is_s ? "S-manifold" : "Z-manifold", spec.seed});
}

}  // namespace gmra
