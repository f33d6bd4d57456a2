#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptive.hpp"
#include "binary.hpp"
#include "gmra.hpp"

namespace gmra {

// ---------------------------------------------------------------------------
// Model files
//
// "GMRAMDL1", u32 version, u64 D, u64 d, f64 gamma, u32 flags, then sections
// {4-byte tag, u64 length, payload}. Readers skip tags they do not know.

inline constexpr std::string_view kModelMagic = "GMRAMDL1";
inline constexpr std::uint32_t kModelVersion = 1;

enum ModelFlags : std::uint32_t {
    kFlagStrict = 1u << 0,
    kFlagOrtho = 1u << 1,
    kFlagDataMaster = 1u << 2,
};

inline nlohmann::json config_to_json(const BuildConfig& c) {
    return {{"d", c.d},
            {"dim_mode", to_string(c.dim_mode)},
            {"gamma", c.gamma},
            {"mode", to_string(c.mode)},
            {"seed", c.seed},
            {"max_levels", c.max_levels},
            {"orthogonal", c.orthogonal},
            {"ortho_cap", c.ortho_cap}};
}

inline BuildConfig config_from_json(const nlohmann::json& j) {
    BuildConfig c;
    try {
        c.d = j.at("d").get<Index>();
        c.dim_mode = parse_dim_mode(j.at("dim_mode").get<std::string>());
        c.gamma = j.at("gamma").get<double>();
        const auto mode = j.at("mode").get<std::string>();
        if (mode != "simple" && mode != "strict") throw DataError("unknown cell mode '" + mode + "'");
        c.mode = mode == "simple" ? CellMode::simple : CellMode::strict;
        c.seed = j.at("seed").get<std::uint64_t>();
        c.max_levels = j.at("max_levels").get<int>();
        c.orthogonal = j.at("orthogonal").get<bool>();
        c.ortho_cap = j.at("ortho_cap").get<Index>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model config: ") + e.what());
    } catch (const UsageError& e) {
        throw DataError(std::string("model config: ") + e.what());
    }
    return c;
}

namespace detail {

inline void put_vector(binary::Writer& w, const Vector& v) {
    w.u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
}

inline Vector get_vector(binary::Reader& r) {
    const auto n = r.u64();
    if (n > r.remaining() / 8) throw DataError("vector length exceeds file size");
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = r.f64();
    return v;
}

/// Column-major, preceded by rows and cols.
inline void put_basis(binary::Writer& w, const Basis& b) {
    w.u64(static_cast<std::uint64_t>(b.rows()));
    w.u64(static_cast<std::uint64_t>(b.cols()));
    for (Eigen::Index c = 0; c < b.cols(); ++c)
        for (Eigen::Index r = 0; r < b.rows(); ++r) w.f64(b(r, c));
}

inline Basis get_basis(binary::Reader& r) {
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (rows != 0 && cols > r.remaining() / 8 / rows) throw DataError("basis size exceeds file size");
    Basis b(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index c = 0; c < b.cols(); ++c)
        for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, c) = r.f64();
    return b;
}

inline void put_indices(binary::Writer& w, const std::vector<Index>& v) {
    w.u64(v.size());
    for (Index x : v) w.u64(x == kNone ? ~std::uint64_t{0} : static_cast<std::uint64_t>(x));
}

inline std::vector<Index> get_indices(binary::Reader& r) {
    const auto n = r.u64();
    if (n > r.remaining() / 8) throw DataError("index list exceeds file size");
    std::vector<Index> v(n);
    for (auto& x : v) {
        const auto raw = r.u64();
        x = raw == ~std::uint64_t{0} ? kNone : static_cast<Index>(raw);
    }
    return v;
}

inline void put_section(binary::Writer& w, std::string_view tag, const binary::Writer& payload) {
    w.bytes(tag);
    w.u64(payload.size());
    w.bytes(payload.data());
}

}  // namespace detail

inline std::string encode_model(const GmraModel& m) {
    using detail::put_basis;
    using detail::put_indices;
    using detail::put_vector;
    const auto& t = m.tree;
    binary::Writer w;
    w.bytes(kModelMagic);
    w.u32(kModelVersion);
    w.u64(m.dim());
    w.u64(m.config.d);
    w.f64(t.gamma());
    std::uint32_t flags = 0;
    if (t.mode == CellMode::strict) flags |= kFlagStrict;
    if (m.has_ortho) flags |= kFlagOrtho;
    if (t.is_data_master) flags |= kFlagDataMaster;
    w.u32(flags);

    binary::Writer nets;
    nets.u64(static_cast<std::uint64_t>(t.anchors.rows()));
    nets.u64(static_cast<std::uint64_t>(t.anchors.cols()));
    for (Eigen::Index i = 0; i < t.anchors.size(); ++i) nets.f64(t.anchors.data()[i]);
    nets.f64(t.nets.gamma);
    nets.i32(t.nets.j_min);
    nets.i32(t.nets.j_max);
    put_indices(nets, t.nets.members);
    nets.u64(t.nets.entry.size());
    for (int e : t.nets.entry) nets.i32(e);
    put_indices(nets, t.nets.cover_parent);
    nets.u64(t.nets.adopted.size());
    for (const auto& a : t.nets.adopted) put_indices(nets, a);
    put_indices(nets, t.nets.sizes);
    detail::put_section(w, "NETS", nets);

    binary::Writer tree;
    tree.u64(t.cells.size());
    for (const auto& c : t.cells) {
        tree.i32(c.scale);
        tree.u64(c.k);
        tree.u64(c.parent == kNone ? ~std::uint64_t{0} : c.parent);
        put_indices(tree, c.children);
        tree.u64(c.center);
        tree.u8(c.kept ? 1 : 0);
    }
    detail::put_section(w, "TREE", tree);

    binary::Writer summ;
    summ.u64(m.n_train);
    put_vector(summ, m.global_mean);
    summ.u64(m.summaries.size());
    for (Index c = 0; c < t.size(); ++c) {
        if (!m.has_summary(c)) continue;
        const auto& s = m.summary(c);
        summ.u64(c);
        summ.u64(s.count);
        put_vector(summ, s.center);
        summ.u64(s.d_eff);
        put_vector(summ, s.eigenvalues);
        put_basis(summ, s.basis);
        summ.f64(s.max_radius);
        summ.f64(s.delta);
        summ.f64(s.delta_inf);
        summ.f64(s.delta_ortho);
        put_basis(summ, s.ortho_basis);
    }
    detail::put_section(w, "SUMM", summ);

    binary::Writer conf;
    const auto text = config_to_json(m.config).dump();
    conf.bytes(text);
    detail::put_section(w, "CONF", conf);
    return w.take();
}

inline GmraModel decode_model(std::string_view bytes) {
    using detail::get_basis;
    using detail::get_indices;
    using detail::get_vector;
    binary::Reader r(bytes);
    if (r.remaining() < kModelMagic.size() || r.bytes(kModelMagic.size()) != kModelMagic)
        throw DataError("not a model file (bad magic)");
    const auto version = r.u32();
    if (version != kModelVersion) throw DataError("unsupported model version " + std::to_string(version));
    const auto dim = r.u64();
    const auto d = r.u64();
    const double gamma = r.f64();
    const auto flags = r.u32();

    GmraModel m;
    bool have_nets = false, have_tree = false, have_summ = false, have_conf = false;
    while (!r.done()) {
        const auto tag = std::string(r.bytes(4));
        const auto len = r.u64();
        if (len > r.remaining()) throw DataError("section '" + tag + "' exceeds file size");
        binary::Reader s(r.bytes(static_cast<std::size_t>(len)));
        if (tag == "NETS") {
            auto& t = m.tree;
            const auto rows = s.u64();
            const auto cols = s.u64();
            if (cols != dim) throw DataError("anchor dimension disagrees with header");
            if (cols != 0 && rows > s.remaining() / 8 / cols) throw DataError("anchor block exceeds section");
            t.anchors.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
            for (Eigen::Index i = 0; i < t.anchors.size(); ++i) t.anchors.data()[i] = s.f64();
            t.nets.gamma = s.f64();
            t.nets.j_min = s.i32();
            t.nets.j_max = s.i32();
            t.nets.members = get_indices(s);
            const auto ne = s.u64();
            if (ne > s.remaining() / 4) throw DataError("entry list exceeds section");
            t.nets.entry.resize(ne);
            for (auto& e : t.nets.entry) e = s.i32();
            t.nets.cover_parent = get_indices(s);
            const auto na = s.u64();
            if (na > s.remaining() / 8) throw DataError("adoption lists exceed section");
            t.nets.adopted.resize(na);
            for (auto& a : t.nets.adopted) a = get_indices(s);
            t.nets.sizes = get_indices(s);
            if (t.nets.sizes.size() != static_cast<Index>(t.nets.num_levels()))
                throw DataError("net level sizes disagree with the scale range");
            have_nets = true;
        } else if (tag == "TREE") {
            auto& t = m.tree;
            const auto n = s.u64();
            if (n > s.remaining() / 20) throw DataError("cell table exceeds section");
            t.cells.resize(n);
            for (auto& c : t.cells) {
                c.scale = s.i32();
                c.k = s.u64();
                const auto p = s.u64();
                c.parent = p == ~std::uint64_t{0} ? kNone : static_cast<Index>(p);
                c.children = get_indices(s);
                c.center = s.u64();
                c.kept = s.u8() != 0;
            }
            have_tree = true;
        } else if (tag == "SUMM") {
            m.n_train = s.u64();
            m.global_mean = get_vector(s);
            const auto count = s.u64();
            if (count > s.remaining() / 8) throw DataError("summary table exceeds section");
            std::vector<std::pair<Index, CellSummary>> items(count);
            for (auto& [cell, cs] : items) {
                cell = s.u64();
                cs.count = s.u64();
                cs.center = get_vector(s);
                cs.d_eff = s.u64();
                cs.eigenvalues = get_vector(s);
                cs.basis = get_basis(s);
                cs.max_radius = s.f64();
                cs.delta = s.f64();
                cs.delta_inf = s.f64();
                cs.delta_ortho = s.f64();
                cs.ortho_basis = get_basis(s);
            }
            m.summaries.clear();
            m.summary_index.clear();
            for (auto& [cell, cs] : items) {
                if (cell >= m.summary_index.size()) m.summary_index.resize(cell + 1, kNone);
                m.summary_index[cell] = m.summaries.size();
                m.summaries.push_back(std::move(cs));
            }
            have_summ = true;
        } else if (tag == "CONF") {
            try {
                m.config = config_from_json(nlohmann::json::parse(s.bytes(s.remaining())));
            } catch (const nlohmann::json::exception& e) {
                throw DataError(std::string("model config: ") + e.what());
            }
            have_conf = true;
        }
        // Unknown tags: already skipped by length.
    }
    if (!have_nets || !have_tree || !have_summ || !have_conf) throw DataError("model file is missing a section");

    auto& t = m.tree;
    t.mode = (flags & kFlagStrict) ? CellMode::strict : CellMode::simple;
    t.is_data_master = (flags & kFlagDataMaster) != 0;
    m.has_ortho = (flags & kFlagOrtho) != 0;
    if (t.nets.gamma != gamma || m.config.gamma != gamma) throw DataError("gamma disagrees between header and body");
    if (m.config.d != d) throw DataError("intrinsic dimension disagrees between header and config");
    t.offsets.clear();
    Index expected = 0;
    for (int j = t.j_min(); j <= t.j_max(); ++j) {
        t.offsets.push_back(expected);
        expected += t.nets.level_size(j);
    }
    if (expected != t.cells.size()) throw DataError("cell count disagrees with net sizes");
    m.summary_index.resize(t.size(), kNone);
    for (Index c = 0; c < t.size(); ++c) {
        if (t.cells[c].center >= static_cast<Index>(t.anchors.rows())) throw DataError("cell center out of range");
        if (m.has_summary(c) && m.summary(c).center.size() != static_cast<Eigen::Index>(dim))
            throw DataError("summary dimension disagrees with header");
    }
    return m;
}

inline void save_model(const GmraModel& m, const std::filesystem::path& path) {
    binary::write_file_atomic(path, encode_model(m));
}

inline GmraModel load_model(const std::filesystem::path& path) { return decode_model(binary::read_file(path)); }

// ---------------------------------------------------------------------------
// Code files
//
// "GMRACOD1", u64 n, u32 flags (bit 0: nested orthogonal bases), then per point
// i32 j, u64 k, u16 coefficient count, that many f64.

inline constexpr std::string_view kCodesMagic = "GMRACOD1";
inline constexpr std::size_t kCodesHeaderBytes = 8 + 8 + 4;

struct CodeSet {
    bool ortho = false;
    std::vector<Encoding> codes;
};

inline std::string encode_codes(const CodeSet& set) {
    binary::Writer w;
    w.bytes(kCodesMagic);
    w.u64(set.codes.size());
    w.u32(set.ortho ? 1u : 0u);
    for (const auto& e : set.codes) {
        if (e.coefficients.size() > 0xFFFF) throw DataError("too many coefficients for one code");
        w.i32(e.j);
        w.u64(e.k);
        w.u16(static_cast<std::uint16_t>(e.coefficients.size()));
        for (Eigen::Index i = 0; i < e.coefficients.size(); ++i) w.f64(e.coefficients(i));
    }
    return w.take();
}

inline CodeSet decode_codes(std::string_view bytes) {
    binary::Reader r(bytes);
    if (r.remaining() < kCodesMagic.size() || r.bytes(kCodesMagic.size()) != kCodesMagic)
        throw DataError("not a codes file (bad magic)");
    const auto n = r.u64();
    const auto flags = r.u32();
    if (n > r.remaining() / 14) throw DataError("code count exceeds file size");
    CodeSet set;
    set.ortho = (flags & 1u) != 0;
    set.codes.resize(n);
    for (auto& e : set.codes) {
        e.j = r.i32();
        e.k = r.u64();
        e.coefficients.resize(r.u16());
        for (Eigen::Index i = 0; i < e.coefficients.size(); ++i) e.coefficients(i) = r.f64();
    }
    if (!r.done()) throw DataError("trailing bytes after codes");
    return set;
}

}  // namespace gmra
