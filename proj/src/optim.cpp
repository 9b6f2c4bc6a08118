#include "fgr/optim.hpp"

#include <cmath>

namespace fgr {

void optimizer_step(OptimizerState& opt, ModelParams& params,
                    const std::map<std::string, Tensor>& grads,
                    const std::set<std::string>* frozen) {
    for (const auto& [name, g] : grads)
        if (!g.all_finite())
            throw std::runtime_error("optimizer_step: non-finite gradient in " + name +
                                     " at step " + std::to_string(opt.step_count + 1));
    ++opt.step_count;
    for (auto& p : params.params) {
        auto it = grads.find(p.name);
        if (it == grads.end()) continue;
        if (frozen && frozen->count(p.name)) continue;
        const Tensor& g = it->second;
        if (!g.same_shape(p.value))
            throw std::invalid_argument("optimizer_step: gradient shape mismatch for " + p.name);
        if (opt.kind == OptKind::SgdMomentum) {
            Tensor& buf = opt.m.try_emplace(p.name, Tensor::zeros(p.value.shape)).first->second;
            for (std::size_t i = 0; i < g.size(); ++i) {
                double gi = g[i] + opt.weight_decay * p.value[i];
                buf[i] = opt.momentum * buf[i] + gi;
                p.value[i] -= opt.lr * buf[i];
            }
        } else {
            Tensor& m = opt.m.try_emplace(p.name, Tensor::zeros(p.value.shape)).first->second;
            Tensor& v = opt.v.try_emplace(p.name, Tensor::zeros(p.value.shape)).first->second;
            const double bc1 = 1.0 - std::pow(opt.beta1, double(opt.step_count));
            const double bc2 = 1.0 - std::pow(opt.beta2, double(opt.step_count));
            for (std::size_t i = 0; i < g.size(); ++i) {
                double gi = g[i] + opt.weight_decay * p.value[i];
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
                p.value[i] -= opt.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.eps);
            }
        }
    }
}

}  // namespace fgr
