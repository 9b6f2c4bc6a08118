#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fgr/autodiff.hpp"
#include "fgr/tensor.hpp"

namespace fgr {

enum class ParamGroup { Backbone, Head };

struct ParamEntry {
    std::string name;
    Tensor value;
    ParamGroup group = ParamGroup::Backbone;
};

/// Named parameter tensors. Entries are kept sorted by name so that the
/// flattened gradient layout is deterministic.
struct ModelParams {
    std::string arch;  // "mlp" or "tinyconv"
    std::size_t in_c = 0, in_h = 0, in_w = 0;  // tinyconv input
    std::size_t in_dim = 0;                    // mlp input
    std::size_t num_classes = 0;
    std::vector<ParamEntry> params;

    ParamEntry& find(const std::string& name);
    const ParamEntry& find(const std::string& name) const;
    void sort_by_name();
    std::size_t total_size() const;
};

/// mlp: in_dim -> 64 -> 64 -> K (ReLU); head = final dense layer.
ModelParams make_mlp(std::size_t in_dim, std::size_t k, std::uint64_t seed);

/// tinyconv: conv3x3x16 -> ReLU -> maxpool2 -> conv3x3x32 -> ReLU -> maxpool2
/// -> flatten -> dense K; head = the dense layer.
ModelParams make_tinyconv(std::size_t in_c, std::size_t in_h, std::size_t in_w, std::size_t k,
                          std::uint64_t seed);

/// A forward pass recorded on a tape: the logits node plus the parameter
/// leaves that participated (name, node id).
struct TapedForward {
    Tape::NodeId logits = 0;
    std::vector<std::pair<std::string, Tape::NodeId>> params;
};

TapedForward forward(Tape& tape, const ModelParams& model, const Tensor& batch);

/// No-tape forward, bit-identical to the tape path.
Tensor forward_plain(const ModelParams& model, const Tensor& batch);

/// Backbone output (the head's input features), no tape.
Tensor backbone_features(const ModelParams& model, const Tensor& batch);

/// Head-only tape forward on a precomputed feature leaf.
TapedForward head_forward(Tape& tape, const ModelParams& model, Tape::NodeId features);

/// Gradients per parameter name after tape.backward(); params absent from the
/// forward get zero gradients.
std::map<std::string, Tensor> collect_grads(const Tape& tape, const ModelParams& model,
                                            const TapedForward& fwd);

std::size_t head_feature_dim(const ModelParams& model);

}  // namespace fgr
