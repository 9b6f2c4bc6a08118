#pragma once

#include <string>
#include <vector>

#include "fgr/autodiff.hpp"

namespace fgr {

struct LossConfig {
    enum class Kind { Ce, LabelSmoothing, Focal, DualFocal, SoftEce };
    Kind kind = Kind::Ce;
    double alpha = 0.05;  // label smoothing mass
    double gamma = 5.0;   // focusing parameter
    int bins = 15;        // soft-ECE bin count
    double t = 0.01;      // soft-binning temperature

    void validate() const;
    static LossConfig parse(const std::string& kind, double alpha, double gamma, int bins, double t);
    std::string kind_name() const;
};

// All losses take a probability node ([B,K], rows on the simplex) and return a
// scalar node. Labels are constants; gradients flow through the probabilities
// only. Probabilities are floored at 1e-12 inside logs.

Tape::NodeId cross_entropy(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels);
Tape::NodeId label_smoothing_ce(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels,
                                double alpha);
Tape::NodeId focal(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels, double gamma);
Tape::NodeId dual_focal(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels,
                        double gamma);
/// Differentiable ECE surrogate with temperature-controlled soft bin
/// memberships; its t->0 limit is the root-mean-square binned gap.
Tape::NodeId soft_ece(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels, int bins,
                      double t);

Tape::NodeId make_loss(Tape& tape, Tape::NodeId probs, const std::vector<int>& labels,
                       const LossConfig& cfg);

}  // namespace fgr
