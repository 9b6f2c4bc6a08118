#include "fgr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace fgr {

ParamEntry& ModelParams::find(const std::string& name) {
    for (auto& p : params)
        if (p.name == name) return p;
    throw std::invalid_argument("ModelParams: no parameter named " + name);
}

const ParamEntry& ModelParams::find(const std::string& name) const {
    return const_cast<ModelParams*>(this)->find(name);
}

void ModelParams::sort_by_name() {
    std::sort(params.begin(), params.end(),
              [](const ParamEntry& a, const ParamEntry& b) { return a.name < b.name; });
}

std::size_t ModelParams::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
}

static Tensor he_normal(std::vector<std::size_t> shape, std::size_t fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / double(fan_in)));
    for (double& v : t.data) v = nd(rng);
    return t;
}

ModelParams make_mlp(std::size_t in_dim, std::size_t k, std::uint64_t seed) {
    std::mt19937_64 rng(hash_seed(seed, 0x6d6c70));
    ModelParams m;
    m.arch = "mlp";
    m.in_dim = in_dim;
    m.num_classes = k;
    m.params.push_back({"fc1.w", he_normal({in_dim, 64}, in_dim, rng), ParamGroup::Backbone});
    m.params.push_back({"fc1.b", Tensor::zeros({64}), ParamGroup::Backbone});
    m.params.push_back({"fc2.w", he_normal({64, 64}, 64, rng), ParamGroup::Backbone});
    m.params.push_back({"fc2.b", Tensor::zeros({64}), ParamGroup::Backbone});
    m.params.push_back({"head.w", he_normal({64, k}, 64, rng), ParamGroup::Head});
    m.params.push_back({"head.b", Tensor::zeros({k}), ParamGroup::Head});
    m.sort_by_name();
    return m;
}

ModelParams make_tinyconv(std::size_t in_c, std::size_t in_h, std::size_t in_w, std::size_t k,
                          std::uint64_t seed) {
    if (in_h % 4 || in_w % 4)
        throw std::invalid_argument("make_tinyconv: spatial dims must be divisible by 4");
    std::mt19937_64 rng(hash_seed(seed, 0x74636e76));
    ModelParams m;
    m.arch = "tinyconv";
    m.in_c = in_c;
    m.in_h = in_h;
    m.in_w = in_w;
    m.num_classes = k;
    m.params.push_back({"conv1.w", he_normal({16, in_c, 3, 3}, in_c * 9, rng), ParamGroup::Backbone});
    m.params.push_back({"conv1.b", Tensor::zeros({16}), ParamGroup::Backbone});
    m.params.push_back({"conv2.w", he_normal({32, 16, 3, 3}, 16 * 9, rng), ParamGroup::Backbone});
    m.params.push_back({"conv2.b", Tensor::zeros({32}), ParamGroup::Backbone});
    const std::size_t feat = 32 * (in_h / 4) * (in_w / 4);
    m.params.push_back({"head.w", he_normal({feat, k}, feat, rng), ParamGroup::Head});
    m.params.push_back({"head.b", Tensor::zeros({k}), ParamGroup::Head});
    m.sort_by_name();
    return m;
}

std::size_t head_feature_dim(const ModelParams& model) {
    return model.find("head.w").value.dim(0);
}

static void check_input(const ModelParams& m, const Tensor& batch) {
    if (m.arch == "mlp") {
        if (batch.ndim() != 2 || batch.dim(1) != m.in_dim)
            throw std::invalid_argument("forward: mlp expects [B," + std::to_string(m.in_dim) +
                                        "], got " + shape_str(batch.shape));
    } else {
        if (batch.ndim() != 4 || batch.dim(1) != m.in_c || batch.dim(2) != m.in_h ||
            batch.dim(3) != m.in_w)
            throw std::invalid_argument("forward: tinyconv input shape mismatch at conv1, got " +
                                        shape_str(batch.shape));
    }
}

TapedForward forward(Tape& tape, const ModelParams& model, const Tensor& batch) {
    check_input(model, batch);
    TapedForward fwd;
    auto leaf = [&](const std::string& name) {
        Tape::NodeId id = tape.leaf(model.find(name).value);
        fwd.params.emplace_back(name, id);
        return id;
    };
    Tape::NodeId x = tape.leaf(batch);
    if (model.arch == "mlp") {
        x = tape.relu(tape.dense(x, leaf("fc1.w"), leaf("fc1.b")));
        x = tape.relu(tape.dense(x, leaf("fc2.w"), leaf("fc2.b")));
        fwd.logits = tape.dense(x, leaf("head.w"), leaf("head.b"));
    } else {
        x = tape.maxpool2(tape.relu(tape.conv2d_3x3(x, leaf("conv1.w"), leaf("conv1.b"))));
        x = tape.maxpool2(tape.relu(tape.conv2d_3x3(x, leaf("conv2.w"), leaf("conv2.b"))));
        fwd.logits = tape.dense(tape.flatten2(x), leaf("head.w"), leaf("head.b"));
    }
    return fwd;
}

Tensor backbone_features(const ModelParams& model, const Tensor& batch) {
    check_input(model, batch);
    if (model.arch == "mlp") {
        Tensor x = kernels::relu(
            kernels::dense(batch, model.find("fc1.w").value, model.find("fc1.b").value));
        return kernels::relu(kernels::dense(x, model.find("fc2.w").value, model.find("fc2.b").value));
    }
    Tensor x = kernels::maxpool2(kernels::relu(
        kernels::conv2d_3x3(batch, model.find("conv1.w").value, model.find("conv1.b").value)));
    x = kernels::maxpool2(kernels::relu(
        kernels::conv2d_3x3(x, model.find("conv2.w").value, model.find("conv2.b").value)));
    return Tensor({x.dim(0), x.size() / x.dim(0)}, x.data);
}

Tensor forward_plain(const ModelParams& model, const Tensor& batch) {
    Tensor feat = backbone_features(model, batch);
    return kernels::dense(feat, model.find("head.w").value, model.find("head.b").value);
}

TapedForward head_forward(Tape& tape, const ModelParams& model, Tape::NodeId features) {
    TapedForward fwd;
    Tape::NodeId w = tape.leaf(model.find("head.w").value);
    Tape::NodeId b = tape.leaf(model.find("head.b").value);
    fwd.params.emplace_back("head.w", w);
    fwd.params.emplace_back("head.b", b);
    fwd.logits = tape.dense(features, w, b);
    return fwd;
}

std::map<std::string, Tensor> collect_grads(const Tape& tape, const ModelParams& model,
                                            const TapedForward& fwd) {
    std::map<std::string, Tensor> grads;
    for (const auto& p : model.params) grads[p.name] = Tensor::zeros(p.value.shape);
    for (const auto& [name, id] : fwd.params) grads[name] = tape.grad(id);
    return grads;
}

}  // namespace fgr
