#pragma once

#include <numeric>
#include <vector>

#include "covertree.hpp"
#include "gmra.hpp"
#include "mstree.hpp"
#include "ogmra.hpp"
#include "pointset.hpp"

namespace gmra {

/// Cells from nets on `construction`, summaries from `train`. Indices in the model refer to rows of `train`.
inline GmraModel build_model_from_halves(const PointCloud& construction, const PointCloud& train,
                                         const BuildConfig& config) {
    if (config.d < 1) throw UsageError("intrinsic dimension must be >= 1");
    if (construction.dim() != train.dim()) throw DataError("construction and statistics halves differ in D");
    if (construction.size() == 0 || train.size() == 0) throw DataError("empty half");
    GmraModel model;
    model.config = config;
    std::vector<Index> local(construction.size());
    std::iota(local.begin(), local.end(), Index{0});
    auto nets = build_cover_nets(construction.data, local, config.max_levels, config.gamma);
    auto tree = config.mode == CellMode::simple ? build_cells_simple(construction.data, std::move(nets))
                                                : build_cells_strict(construction.data, std::move(nets));
    std::vector<Index> rows(train.size());
    std::iota(rows.begin(), rows.end(), Index{0});
    tree = assign_points(std::move(tree), train, rows, config.threads);
    model.tree = truncate_to_data_master(std::move(tree), config.d);
    model.n_train = train.size();
    model.global_mean = train.data.colwise().mean().transpose();
    compute_summaries(model, train);
    compute_deltas(model, train);
    if (config.orthogonal) {
        build_ortho(model);
        compute_ortho_deltas(model, train);
    }
    return model;
}

/// Seeded even split, then the full pipeline.
inline GmraModel build_model(const PointCloud& cloud, const BuildConfig& config) {
    validate(cloud);
    auto split = split_even(cloud, config.seed);
    auto model = build_model_from_halves(cloud.subset(split.construction_half), cloud.subset(split.statistics_half),
                                         config);
    model.split = std::move(split);
    return model;
}

}  // namespace gmra
