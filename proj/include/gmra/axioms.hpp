#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gmra.hpp"

namespace gmra {

struct ScaleAxioms {
    int j = 0;
    Index cell_count = 0;   // data-master cells at this scale
    Index skipped = 0;      // cells below the member floor
    Index measured = 0;     // cells that entered the statistics
    double theta2_max = 0.0;  // max member distance over gamma^j
    double theta3_mean = 0.0, theta3_std = 0.0, theta3_min = 0.0;
    double theta4_mean = 0.0, theta4_std = 0.0, theta4_max = 0.0;
    Index theta4_undefined = 0;  // cells with lambda_d == 0
};

struct AxiomReport {
    std::vector<ScaleAxioms> per_scale;
    double theta3_min = std::numeric_limits<double>::infinity();
    double theta4_max = 0.0;
    Index min_members = 2;
};

/// theta3 = d * lambda_d * gamma^(-2j), theta4 = lambda_{d+1} / lambda_d per data-master cell.
/// Cells with fewer than min_members points are skipped and counted.
inline AxiomReport axiom_report(const GmraModel& model, Index min_members = 2) {
    const auto& tree = model.tree;
    const Index d = model.config.d;
    AxiomReport rep;
    rep.min_members = min_members;
    for (int j = tree.j_min(); j <= tree.j_max(); ++j) {
        ScaleAxioms row;
        row.j = j;
        std::vector<double> t3, t4;
        const double r = tree.radius(j);
        for (Index k = 0; k < tree.num_at_scale(j); ++k) {
            const Index c = tree.id(j, k);
            if (!model.has_summary(c)) continue;
            ++row.cell_count;
            const auto& s = model.summary(c);
            if (s.count < std::max<Index>(min_members, 2)) {
                ++row.skipped;
                continue;
            }
            row.theta2_max = std::max(row.theta2_max, s.max_radius / r);
            const double ld = s.eigenvalue(d - 1);
            const double ld1 = s.eigenvalue(d);
            t3.push_back(static_cast<double>(d) * ld / (r * r));
            if (ld > 0.0) t4.push_back(ld1 / ld);
            else ++row.theta4_undefined;
        }
        if (row.cell_count == 0) break;
        auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
            if (v.empty()) return;
            double s = 0.0, q = 0.0;
            for (double x : v) s += x;
            mean = s / static_cast<double>(v.size());
            for (double x : v) q += (x - mean) * (x - mean);
            sd = std::sqrt(q / static_cast<double>(v.size()));
        };
        row.measured = t3.size();
        stats(t3, row.theta3_mean, row.theta3_std);
        stats(t4, row.theta4_mean, row.theta4_std);
        if (!t3.empty()) row.theta3_min = *std::min_element(t3.begin(), t3.end());
        if (!t4.empty()) row.theta4_max = *std::max_element(t4.begin(), t4.end());
        if (!t3.empty()) rep.theta3_min = std::min(rep.theta3_min, row.theta3_min);
        rep.theta4_max = std::max(rep.theta4_max, row.theta4_max);
        rep.per_scale.push_back(row);
    }
    return rep;
}

}  // namespace gmra
