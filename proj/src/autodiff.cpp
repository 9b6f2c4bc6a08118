#include "fgr/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>

namespace fgr {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace kernels {

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0))
        throw std::invalid_argument("dense: shape mismatch x" + shape_str(x.shape) + " w" + shape_str(w.shape));
    const std::size_t B = x.dim(0), D = x.dim(1), K = w.dim(1);
    if (b.size() != K) throw std::invalid_argument("dense: bias size mismatch");
    Tensor out({B, K});
    CMapMat xm(x.data.data(), B, D), wm(w.data.data(), D, K);
    MapMat om(out.data.data(), B, K);
    om.noalias() = xm * wm;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t k = 0; k < K; ++k) out.at(i, k) += b[k];
    return out;
}

// im2col for 3x3 stride-1 pad-1: rows indexed by (b,h,w), cols by (c,dy,dx).
static RowMat im2col_3x3(const Tensor& x) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    RowMat col(B * H * W, C * 9);
    col.setZero();
    const double* xd = x.data.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double* plane = xd + ((b * C + c) * H) * W;
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t w = 0; w < W; ++w) {
                    double* row = col.data() + (b * H * W + h * W + w) * C * 9 + c * 9;
                    for (int dy = -1; dy <= 1; ++dy) {
                        int yy = int(h) + dy;
                        if (yy < 0 || yy >= int(H)) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            int xx = int(w) + dx;
                            if (xx < 0 || xx >= int(W)) continue;
                            row[(dy + 1) * 3 + (dx + 1)] = plane[yy * int(W) + xx];
                        }
                    }
                }
        }
    return col;
}

static void conv_check(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 4 || w.ndim() != 4 || w.dim(2) != 3 || w.dim(3) != 3 || x.dim(1) != w.dim(1) ||
        b.size() != w.dim(0))
        throw std::invalid_argument("conv2d_3x3: shape mismatch x" + shape_str(x.shape) + " w" +
                                    shape_str(w.shape));
}

Tensor conv2d_3x3(const Tensor& x, const Tensor& w, const Tensor& b) {
    conv_check(x, w, b);
    const std::size_t B = x.dim(0), H = x.dim(2), W = x.dim(3), C = x.dim(1), OC = w.dim(0);
    RowMat col = im2col_3x3(x);
    // weight as [C*9, OC]
    RowMat wm(C * 9, OC);
    for (std::size_t oc = 0; oc < OC; ++oc)
        for (std::size_t i = 0; i < C * 9; ++i) wm(i, oc) = w.data[oc * C * 9 + i];
    RowMat prod = col * wm;  // [B*H*W, OC]
    Tensor out({B, OC, H, W});
    for (std::size_t bb = 0; bb < B; ++bb)
        for (std::size_t oc = 0; oc < OC; ++oc)
            for (std::size_t p = 0; p < H * W; ++p)
                out.data[((bb * OC + oc) * H * W) + p] = prod(bb * H * W + p, oc) + b[oc];
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor maxpool2(const Tensor& x, std::vector<std::size_t>* argmax) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2) throw std::invalid_argument("maxpool2: odd spatial dims " + shape_str(x.shape));
    Tensor out({B, C, H / 2, W / 2});
    if (argmax) argmax->assign(out.size(), 0);
    std::size_t o = 0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double* plane = x.data.data() + (b * C + c) * H * W;
            const std::size_t base = (b * C + c) * H * W;
            for (std::size_t h = 0; h < H; h += 2)
                for (std::size_t w = 0; w < W; w += 2) {
                    std::size_t best = h * W + w;
                    double bv = plane[best];
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            std::size_t idx = (h + dy) * W + (w + dx);
                            if (plane[idx] > bv) { bv = plane[idx]; best = idx; }
                        }
                    out.data[o] = bv;
                    if (argmax) (*argmax)[o] = base + best;
                    ++o;
                }
        }
    return out;
}

Tensor softmax(const Tensor& logits) {
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    Tensor out({B, K});
    for (std::size_t i = 0; i < B; ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, logits.at(i, k));
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double e = std::exp(logits.at(i, k) - mx);
            out.at(i, k) = e;
            z += e;
        }
        for (std::size_t k = 0; k < K; ++k) out.at(i, k) /= z;
    }
    return out;
}

}  // namespace kernels

Tape::NodeId Tape::push(Tensor value, std::function<void(Tape&, NodeId)> back) {
    nodes_.push_back({std::move(value), Tensor{}, std::move(back)});
    return nodes_.size() - 1;
}

Tape::NodeId Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

Tape::NodeId Tape::make(Tensor value, std::function<void(Tape&, NodeId)> backward) {
    return push(std::move(value), std::move(backward));
}

Tape::NodeId Tape::dense(NodeId x, NodeId w, NodeId b) {
    Tensor out = kernels::dense(value(x), value(w), value(b));
    return push(std::move(out), [x, w, b](Tape& t, NodeId self) {
        const Tensor& xv = t.value(x);
        const Tensor& wv = t.value(w);
        const Tensor& go = t.grad(self);
        const std::size_t B = xv.dim(0), D = xv.dim(1), K = wv.dim(1);
        CMapMat xm(xv.data.data(), B, D), wm(wv.data.data(), D, K), gm(go.data.data(), B, K);
        MapMat gx(t.grad_mut(x).data.data(), B, D), gw(t.grad_mut(w).data.data(), D, K);
        gx.noalias() += gm * wm.transpose();
        gw.noalias() += xm.transpose() * gm;
        Tensor& gb = t.grad_mut(b);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t k = 0; k < K; ++k) gb[k] += go.at(i, k);
    });
}

Tape::NodeId Tape::conv2d_3x3(NodeId x, NodeId w, NodeId b) {
    Tensor out = kernels::conv2d_3x3(value(x), value(w), value(b));
    return push(std::move(out), [x, w, b](Tape& t, NodeId self) {
        const Tensor& xv = t.value(x);
        const Tensor& wv = t.value(w);
        const Tensor& go = t.grad(self);
        const std::size_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3), OC = wv.dim(0);
        const std::size_t HW = H * W;
        // gather dOut into [B*H*W, OC]
        RowMat gout(B * HW, OC);
        for (std::size_t bb = 0; bb < B; ++bb)
            for (std::size_t oc = 0; oc < OC; ++oc)
                for (std::size_t p = 0; p < HW; ++p)
                    gout(bb * HW + p, oc) = go.data[(bb * OC + oc) * HW + p];
        RowMat col = kernels::im2col_3x3(xv);
        RowMat wm(C * 9, OC);
        for (std::size_t oc = 0; oc < OC; ++oc)
            for (std::size_t i = 0; i < C * 9; ++i) wm(i, oc) = wv.data[oc * C * 9 + i];
        RowMat gwm = col.transpose() * gout;  // [C*9, OC]
        RowMat gcol = gout * wm.transpose();  // [B*H*W, C*9]
        Tensor& gw = t.grad_mut(w);
        for (std::size_t oc = 0; oc < OC; ++oc)
            for (std::size_t i = 0; i < C * 9; ++i) gw.data[oc * C * 9 + i] += gwm(i, oc);
        Tensor& gb = t.grad_mut(b);
        for (std::size_t oc = 0; oc < OC; ++oc) gb[oc] += gout.col(oc).sum();
        // col2im scatter-add
        Tensor& gx = t.grad_mut(x);
        for (std::size_t bb = 0; bb < B; ++bb)
            for (std::size_t c = 0; c < C; ++c) {
                double* plane = gx.data.data() + (bb * C + c) * HW;
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t ww = 0; ww < W; ++ww) {
                        const double* row = gcol.data() + (bb * HW + h * W + ww) * C * 9 + c * 9;
                        for (int dy = -1; dy <= 1; ++dy) {
                            int yy = int(h) + dy;
                            if (yy < 0 || yy >= int(H)) continue;
                            for (int dx = -1; dx <= 1; ++dx) {
                                int xx = int(ww) + dx;
                                if (xx < 0 || xx >= int(W)) continue;
                                plane[yy * int(W) + xx] += row[(dy + 1) * 3 + (dx + 1)];
                            }
                        }
                    }
            }
    });
}

void Tape::backward(NodeId loss) {
    if (value(loss).size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(value(loss).shape));
    for (std::size_t i = 0; i <= loss; ++i) nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
    nodes_[loss].grad[0] = 1.0;
    for (std::size_t i = loss + 1; i-- > 0;)
        if (nodes_[i].back) nodes_[i].back(*this, i);
}

Tape::NodeId Tape::relu(NodeId x) {
    Tensor out = kernels::relu(value(x));
    return push(std::move(out), [x](Tape& t, NodeId self) {
        const Tensor& xv = t.value(x);
        const Tensor& go = t.grad(self);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < xv.size(); ++i)
            if (xv[i] > 0.0) gx[i] += go[i];
    });
}

Tape::NodeId Tape::maxpool2(NodeId x) {
    auto argmax = std::make_shared<std::vector<std::size_t>>();
    Tensor out = kernels::maxpool2(value(x), argmax.get());
    return push(std::move(out), [x, argmax](Tape& t, NodeId self) {
        const Tensor& go = t.grad(self);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < go.size(); ++i) gx[(*argmax)[i]] += go[i];
    });
}

Tape::NodeId Tape::flatten2(NodeId x) {
    const Tensor& xv = value(x);
    Tensor out({xv.dim(0), xv.size() / xv.dim(0)}, xv.data);
    return push(std::move(out), [x](Tape& t, NodeId self) {
        const Tensor& go = t.grad(self);
        Tensor& gx = t.grad_mut(x);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
}

Tape::NodeId Tape::softmax(NodeId logits) {
    Tensor out = kernels::softmax(value(logits));
    return push(std::move(out), [logits](Tape& t, NodeId self) {
        const Tensor& p = t.value(self);
        const Tensor& go = t.grad(self);
        Tensor& gz = t.grad_mut(logits);
        const std::size_t B = p.dim(0), K = p.dim(1);
        for (std::size_t i = 0; i < B; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += go.at(i, k) * p.at(i, k);
            for (std::size_t k = 0; k < K; ++k) gz.at(i, k) += p.at(i, k) * (go.at(i, k) - s);
        }
    });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return push(std::move(out), [a, b](Tape& t, NodeId self) {
        const Tensor& go = t.grad(self);
        for (std::size_t i = 0; i < go.size(); ++i) {
            t.grad_mut(a)[i] += go[i];
            t.grad_mut(b)[i] += go[i];
        }
    });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return push(std::move(out), [a, b](Tape& t, NodeId self) {
        const Tensor& go = t.grad(self);
        for (std::size_t i = 0; i < go.size(); ++i) {
            t.grad_mut(a)[i] += go[i] * t.value(b)[i];
            t.grad_mut(b)[i] += go[i] * t.value(a)[i];
        }
    });
}

Tape::NodeId Tape::sum(NodeId a) {
    double s = 0.0;
    for (double v : value(a).data) s += v;
    return push(Tensor::scalar(s), [a](Tape& t, NodeId self) {
        double g = t.grad(self)[0];
        for (double& v : t.grad_mut(a).data) v += g;
    });
}

Tape::NodeId Tape::dot(NodeId a, NodeId b) { return sum(mul(a, b)); }

}  // namespace fgr
