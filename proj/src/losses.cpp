#include "fgr/losses.hpp"

#include <cmath>
#include <memory>

namespace fgr {

namespace {

constexpr double kProbFloor = 1e-12;

void check_labels(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.ndim() != 2) throw std::invalid_argument("loss: probs must be [B,K]");
    if (labels.size() != probs.dim(0)) throw std::invalid_argument("loss: label count mismatch");
    const int k = int(probs.dim(1));
    for (int y : labels)
        if (y < 0 || y >= k)
            throw std::invalid_argument("loss: label " + std::to_string(y) + " out of range [0," +
                                        std::to_string(k) + ")");
}

}  // namespace

void LossConfig::validate() const {
    if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("LossConfig: alpha must be in [0,1)");
    if (gamma < 0.0) throw std::invalid_argument("LossConfig: gamma must be >= 0");
    if (bins < 1) throw std::invalid_argument("LossConfig: bins must be >= 1");
    if (t <= 0.0) throw std::invalid_argument("LossConfig: t must be > 0");
}

LossConfig LossConfig::parse(const std::string& kind, double alpha, double gamma, int bins, double t) {
    LossConfig c;
    if (kind == "ce") c.kind = Kind::Ce;
    else if (kind == "label-smoothing") c.kind = Kind::LabelSmoothing;
    else if (kind == "focal") c.kind = Kind::Focal;
    else if (kind == "dual-focal") c.kind = Kind::DualFocal;
    else if (kind == "soft-ece") c.kind = Kind::SoftEce;
    else throw std::invalid_argument("LossConfig: unknown kind '" + kind + "'");
    c.alpha = alpha;
    c.gamma = gamma;
    c.bins = bins;
    c.t = t;
    c.validate();
    return c;
}

std::string LossConfig::kind_name() const {
    switch (kind) {
        case Kind::Ce: return "ce";
        case Kind::LabelSmoothing: return "label-smoothing";
        case Kind::Focal: return "focal";
        case Kind::DualFocal: return "dual-focal";
        case Kind::SoftEce: return "soft-ece";
    }
    return "?";
}

Tape::NodeId cross_entropy(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels) {
    const Tensor& p = tape.value(probs);
    check_labels(p, labels);
    const std::size_t B = p.dim(0);
    double s = 0.0;
    for (std::size_t i = 0; i < B; ++i) s += -std::log(std::max(p.at(i, labels[i]), kProbFloor));
    return tape.make(Tensor::scalar(s / double(B)), [probs, labels](Tape& t, Tape::NodeId self) {
        const Tensor& p = t.value(probs);
        Tensor& gp = t.grad_mut(probs);
        const double go = t.grad(self)[0];
        const std::size_t B = p.dim(0);
        for (std::size_t i = 0; i < B; ++i) {
            double pi = p.at(i, labels[i]);
            if (pi >= kProbFloor) gp.at(i, labels[i]) += go * (-1.0 / (double(B) * pi));
        }
    });
}

Tape::NodeId label_smoothing_ce(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels,
                                double alpha) {
    const Tensor& p = tape.value(probs);
    check_labels(p, labels);
    const std::size_t B = p.dim(0), K = p.dim(1);
    double s = 0.0;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t k = 0; k < K; ++k) {
            double tk = (int(k) == labels[i] ? 1.0 - alpha : 0.0) + alpha / double(K);
            s += -tk * std::log(std::max(p.at(i, k), kProbFloor));
        }
    return tape.make(Tensor::scalar(s / double(B)),
                     [probs, labels, alpha](Tape& t, Tape::NodeId self) {
                         const Tensor& p = t.value(probs);
                         Tensor& gp = t.grad_mut(probs);
                         const double go = t.grad(self)[0];
                         const std::size_t B = p.dim(0), K = p.dim(1);
                         for (std::size_t i = 0; i < B; ++i)
                             for (std::size_t k = 0; k < K; ++k) {
                                 double tk = (int(k) == labels[i] ? 1.0 - alpha : 0.0) + alpha / double(K);
                                 double pk = p.at(i, k);
                                 if (pk >= kProbFloor) gp.at(i, k) += go * (-tk / (double(B) * pk));
                             }
                     });
}

Tape::NodeId focal(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels, double gamma) {
    if (gamma == 0.0) return cross_entropy(tape, probs, labels);
    const Tensor& p = tape.value(probs);
    check_labels(p, labels);
    const std::size_t B = p.dim(0);
    double s = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double pi = std::max(p.at(i, labels[i]), kProbFloor);
        s += -std::pow(1.0 - pi, gamma) * std::log(pi);
    }
    return tape.make(Tensor::scalar(s / double(B)),
                     [probs, labels, gamma](Tape& t, Tape::NodeId self) {
                         const Tensor& p = t.value(probs);
                         Tensor& gp = t.grad_mut(probs);
                         const double go = t.grad(self)[0];
                         const std::size_t B = p.dim(0);
                         for (std::size_t i = 0; i < B; ++i) {
                             double pi = p.at(i, labels[i]);
                             if (pi < kProbFloor) continue;
                             double u = 1.0 - pi;
                             double d = (u > 0.0 ? gamma * std::pow(u, gamma - 1.0) * std::log(pi) : 0.0) -
                                        std::pow(u, gamma) / pi;
                             gp.at(i, labels[i]) += go * d / double(B);
                         }
                     });
}

Tape::NodeId dual_focal(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels,
                        double gamma) {
    const Tensor& p0 = tape.value(probs);
    check_labels(p0, labels);
    if (p0.dim(1) < 2) throw std::invalid_argument("dual_focal: needs K >= 2");
    if (gamma == 0.0) return cross_entropy(tape, probs, labels);
    const std::size_t B = p0.dim(0), K = p0.dim(1);
    // j = highest-scoring incorrect class, ties broken by lowest index
    auto runner_up = std::make_shared<std::vector<std::size_t>>(B);
    for (std::size_t i = 0; i < B; ++i) {
        std::size_t j = labels[i] == 0 ? 1 : 0;
        for (std::size_t k = 0; k < K; ++k)
            if (int(k) != labels[i] && p0.at(i, k) > p0.at(i, j)) j = k;
        (*runner_up)[i] = j;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double pi = std::max(p0.at(i, labels[i]), kProbFloor);
        double w = 1.0 - pi + p0.at(i, (*runner_up)[i]);
        s += -std::pow(w, gamma) * std::log(pi);
    }
    return tape.make(Tensor::scalar(s / double(B)),
                     [probs, labels, gamma, runner_up](Tape& t, Tape::NodeId self) {
                         const Tensor& p = t.value(probs);
                         Tensor& gp = t.grad_mut(probs);
                         const double go = t.grad(self)[0];
                         const std::size_t B = p.dim(0);
                         for (std::size_t i = 0; i < B; ++i) {
                             double pi = p.at(i, labels[i]);
                             if (pi < kProbFloor) continue;
                             std::size_t j = (*runner_up)[i];
                             double w = 1.0 - pi + p.at(i, j);
                             double lw = (w > 0.0 ? gamma * std::pow(w, gamma - 1.0) * std::log(pi) : 0.0);
                             // d/dp_t [-w^g ln p_t] = g*w^(g-1)*ln(p_t) - w^g/p_t  (dw/dp_t = -1)
                             gp.at(i, labels[i]) += go * (lw - std::pow(w, gamma) / pi) / double(B);
                             // d/dp_j = -g*w^(g-1)*ln(p_t)                        (dw/dp_j = +1)
                             gp.at(i, j) += go * -lw / double(B);
                         }
                     });
}

namespace {

struct SoftEceWork {
    std::vector<double> conf;          // p-hat per sample
    std::vector<std::size_t> argmax;   // predicted class per sample
    std::vector<double> correct;       // 0/1, treated as constant
    std::vector<double> memb;          // [N,M] soft memberships
    std::vector<double> mass, acc_num, conf_num;  // per bin
    double value = 0.0;
};

SoftEceWork soft_ece_forward(const Tensor& p, const std::vector<int>& labels, int M, double t) {
    const std::size_t N = p.dim(0), K = p.dim(1);
    SoftEceWork w;
    w.conf.resize(N);
    w.argmax.resize(N);
    w.correct.resize(N);
    w.memb.assign(N * M, 0.0);
    w.mass.assign(M, 0.0);
    w.acc_num.assign(M, 0.0);
    w.conf_num.assign(M, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t a = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (p.at(i, k) > p.at(i, a)) a = k;
        w.argmax[i] = a;
        w.conf[i] = p.at(i, a);
        w.correct[i] = (int(a) == labels[i]) ? 1.0 : 0.0;
        // stable softmax over bins of -(conf - center)^2 / t
        double best = -1e300;
        for (int m = 0; m < M; ++m) {
            double xi = (2.0 * m + 1.0) / (2.0 * M);
            double a_m = -(w.conf[i] - xi) * (w.conf[i] - xi) / t;
            w.memb[i * M + m] = a_m;
            best = std::max(best, a_m);
        }
        double z = 0.0;
        for (int m = 0; m < M; ++m) {
            double e = std::exp(w.memb[i * M + m] - best);
            w.memb[i * M + m] = e;
            z += e;
        }
        for (int m = 0; m < M; ++m) {
            double wm = w.memb[i * M + m] / z;
            w.memb[i * M + m] = wm;
            w.mass[m] += wm;
            w.acc_num[m] += wm * w.correct[i];
            w.conf_num[m] += wm * w.conf[i];
        }
    }
    double e = 0.0;
    for (int m = 0; m < M; ++m) {
        if (w.mass[m] < 1e-12) continue;
        double gap = w.acc_num[m] / w.mass[m] - w.conf_num[m] / w.mass[m];
        e += (w.mass[m] / double(N)) * gap * gap;
    }
    w.value = std::sqrt(e);
    return w;
}

}  // namespace

Tape::NodeId soft_ece(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels, int M,
                      double t) {
    const Tensor& p = tape.value(probs);
    check_labels(p, labels);
    if (M < 1) throw std::invalid_argument("soft_ece: M must be >= 1");
    if (t <= 0.0) throw std::invalid_argument("soft_ece: t must be > 0");
    auto work = std::make_shared<SoftEceWork>(soft_ece_forward(p, labels, M, t));
    return tape.make(
        Tensor::scalar(work->value), [probs, M, t, work](Tape& tp, Tape::NodeId self) {
            const double L = work->value;
            if (L < 1e-15) return;  // sqrt kink at zero; gradient defined as 0
            const double go = tp.grad(self)[0];
            const Tensor& p = tp.value(probs);
            Tensor& gp = tp.grad_mut(probs);
            const std::size_t N = p.dim(0);
            // partials of E = sum_m mass/N * gap^2 w.r.t. per-bin aggregates
            std::vector<double> dA(M, 0.0), dC(M, 0.0), dS(M, 0.0);
            for (int m = 0; m < M; ++m) {
                double s = work->mass[m];
                if (s < 1e-12) continue;
                double gap = (work->acc_num[m] - work->conf_num[m]) / s;
                dA[m] = 2.0 * gap / double(N);
                dC[m] = -2.0 * gap / double(N);
                dS[m] = -gap * gap / double(N);
            }
            for (std::size_t i = 0; i < N; ++i) {
                const double ph = work->conf[i];
                const double ci = work->correct[i];
                // dE/dw_im and the softmax jacobian back to p-hat
                double dot = 0.0;
                std::vector<double> dw(M);
                for (int m = 0; m < M; ++m) {
                    dw[m] = dA[m] * ci + dC[m] * ph + dS[m];
                    dot += dw[m] * work->memb[i * M + m];
                }
                double dph = 0.0;
                for (int m = 0; m < M; ++m) {
                    double xi = (2.0 * m + 1.0) / (2.0 * M);
                    double da = work->memb[i * M + m] * (dw[m] - dot);  // dE/da_im
                    dph += da * (-2.0 * (ph - xi) / t);
                }
                // direct dependence of conf_num on p-hat
                for (int m = 0; m < M; ++m) dph += dC[m] * work->memb[i * M + m];
                gp.at(i, work->argmax[i]) += go * dph / (2.0 * L);
            }
        });
}

Tape::NodeId make_loss(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels,
                       const LossConfig& cfg) {
    cfg.validate();
    switch (cfg.kind) {
        case LossConfig::Kind::Ce: return cross_entropy(tape, probs, labels);
        case LossConfig::Kind::LabelSmoothing: return label_smoothing_ce(tape, probs, labels, cfg.alpha);
        case LossConfig::Kind::Focal: return focal(tape, probs, labels, cfg.gamma);
        case LossConfig::Kind::DualFocal: return dual_focal(tape, probs, labels, cfg.gamma);
        case LossConfig::Kind::SoftEce: return soft_ece(tape, probs, labels, cfg.bins, cfg.t);
    }
    throw std::logic_error("make_loss: unreachable");
}

}  // namespace fgr
