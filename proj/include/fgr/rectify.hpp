#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fgr/nn.hpp"
#include "fgr/tensor.hpp"

namespace fgr {

/// Flat trainable-parameter gradient; layout is the name-sorted concatenation
/// of per-parameter gradients.
using GradientVector = std::vector<double>;

/// Concatenate per-parameter gradients (name-sorted, trainable only).
GradientVector flatten_grads(const ModelParams& model, const std::map<std::string, Tensor>& grads,
                             const std::set<std::string>& trainable);

/// Inverse of flatten_grads.
std::map<std::string, Tensor> unflatten_grads(const ModelParams& model, const GradientVector& flat,
                                              const std::set<std::string>& trainable);

struct RectifyResult {
    GradientVector g_final;
    bool conflicted = false;
};

/// Conflict-aware projection: when g_main . g_calib < 0, project g_main onto
/// the hyperplane orthogonal to g_calib; otherwise pass g_main through
/// unchanged (bitwise). A vanishing g_calib imposes no constraint.
RectifyResult rectify(const GradientVector& g_main, const GradientVector& g_calib);

struct ConflictStep {
    bool conflicted = false;
    double cosine = 0.0;
};

struct ConflictStats {
    double conflict_fraction = 0.0;
    double mean_cosine = 0.0;
};

ConflictStats conflict_stats(const std::vector<ConflictStep>& history);

double dot(const GradientVector& a, const GradientVector& b);
double norm(const GradientVector& a);
/// cos(a,b), 0 when either vector vanishes.
double cosine(const GradientVector& a, const GradientVector& b);

}  // namespace fgr
