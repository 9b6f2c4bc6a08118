#pragma once

#include <functional>
#include <vector>

#include "fgr/tensor.hpp"

namespace fgr {

// Forward kernels shared by the tape ops and the no-tape inference path so
// both produce bit-identical values.
namespace kernels {

// x: [B,D], w: [D,K], b: [K] -> [B,K]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
// x: [B,C,H,W], w: [OC,C,3,3], b: [OC]; stride 1, zero padding 1 -> [B,OC,H,W]
Tensor conv2d_3x3(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor relu(const Tensor& x);
// 2x2 stride-2 max pool; argmax (flat index into x) per output element when requested
Tensor maxpool2(const Tensor& x, std::vector<std::size_t>* argmax = nullptr);
// rowwise stable softmax on [B,K]
Tensor softmax(const Tensor& logits);

}  // namespace kernels

/// Reverse-mode differentiation record. Rebuilt per batch; node ids are
/// creation-ordered, so the backward sweep is a single reverse pass.
class Tape {
public:
    using NodeId = std::size_t;

    /// Leaf holding an input or parameter value.
    NodeId leaf(Tensor value);

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    const Tensor& grad(NodeId id) const { return nodes_.at(id).grad; }
    Tensor& grad_mut(NodeId id) { return nodes_.at(id).grad; }
    std::size_t node_count() const { return nodes_.size(); }

    NodeId dense(NodeId x, NodeId w, NodeId b);
    NodeId conv2d_3x3(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId x);
    NodeId maxpool2(NodeId x);
    NodeId flatten2(NodeId x);  // [B,C,H,W] -> [B,C*H*W]
    NodeId softmax(NodeId logits);

    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);  // elementwise
    NodeId sum(NodeId a);            // -> scalar
    NodeId dot(NodeId a, NodeId b);  // -> scalar

    /// Custom node; `backward` reads grad(self) and accumulates into parents.
    NodeId make(Tensor value, std::function<void(Tape&, NodeId)> backward);

    /// Reverse sweep from a scalar loss; fills grad slots of every node.
    void backward(NodeId loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, NodeId)> back;
    };
    std::vector<Node> nodes_;
    NodeId push(Tensor value, std::function<void(Tape&, NodeId)> back);
};

}  // namespace fgr
