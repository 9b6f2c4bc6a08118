#include "fgr/rectify.hpp"

#include <cmath>
#include <stdexcept>

namespace fgr {

GradientVector flatten_grads(const ModelParams& model, const std::map<std::string, Tensor>& grads,
                             const std::set<std::string>& trainable) {
    GradientVector flat;
    for (const auto& p : model.params) {  // model.params is name-sorted
        if (!trainable.count(p.name)) continue;
        auto it = grads.find(p.name);
        if (it == grads.end()) throw std::invalid_argument("flatten_grads: missing gradient for " + p.name);
        if (!it->second.same_shape(p.value))
            throw std::invalid_argument("flatten_grads: shape mismatch for " + p.name);
        flat.insert(flat.end(), it->second.data.begin(), it->second.data.end());
    }
    return flat;
}

std::map<std::string, Tensor> unflatten_grads(const ModelParams& model, const GradientVector& flat,
                                              const std::set<std::string>& trainable) {
    std::map<std::string, Tensor> grads;
    std::size_t off = 0;
    for (const auto& p : model.params) {
        if (!trainable.count(p.name)) continue;
        if (off + p.value.size() > flat.size())
            throw std::invalid_argument("unflatten_grads: flat vector too short");
        Tensor g(p.value.shape);
        std::copy(flat.begin() + off, flat.begin() + off + p.value.size(), g.data.begin());
        off += p.value.size();
        grads.emplace(p.name, std::move(g));
    }
    if (off != flat.size()) throw std::invalid_argument("unflatten_grads: flat vector too long");
    return grads;
}

double dot(const GradientVector& a, const GradientVector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const GradientVector& a) { return std::sqrt(dot(a, a)); }

double cosine(const GradientVector& a, const GradientVector& b) {
    double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

RectifyResult rectify(const GradientVector& g_main, const GradientVector& g_calib) {
    if (g_main.size() != g_calib.size())
        throw std::invalid_argument("rectify: length mismatch " + std::to_string(g_main.size()) +
                                    " vs " + std::to_string(g_calib.size()));
    const double d = dot(g_main, g_calib);
    if (d >= 0.0) return {g_main, false};
    const double nc2 = dot(g_calib, g_calib);
    if (nc2 < 1e-24) return {g_main, false};  // projection undefined, no constraint
    RectifyResult r;
    r.conflicted = true;
    r.g_final.resize(g_main.size());
    const double scale = d / nc2;
    for (std::size_t i = 0; i < g_main.size(); ++i) r.g_final[i] = g_main[i] - scale * g_calib[i];
    return r;
}

ConflictStats conflict_stats(const std::vector<ConflictStep>& history) {
    if (history.empty()) throw std::invalid_argument("conflict_stats: empty history");
    ConflictStats s;
    for (const auto& h : history) {
        if (h.conflicted) s.conflict_fraction += 1.0;
        s.mean_cosine += h.cosine;
    }
    s.conflict_fraction /= double(history.size());
    s.mean_cosine /= double(history.size());
    return s;
}

}  // namespace fgr
