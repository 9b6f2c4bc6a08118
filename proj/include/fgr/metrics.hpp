#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fgr/tensor.hpp"

namespace fgr {

/// Model outputs collected for evaluation.
struct PredictionLog {
    Tensor probs;  // [N,K], rows on the simplex
    std::vector<int> labels;
    std::optional<Tensor> logits;  // [N,K] when available

    std::size_t n() const { return probs.ndim() == 2 ? probs.dim(0) : 0; }
    std::size_t k() const { return probs.ndim() == 2 ? probs.dim(1) : 0; }
    void validate() const;
};

/// Per-bin aggregates over ((m-1)/M, m/M]; confidence 0 goes to bin 1.
struct BinStats {
    std::vector<std::size_t> count;
    std::vector<double> conf_sum;
    std::vector<double> correct_sum;
};

struct ReliabilityBin {
    double center = 0.0;
    double accuracy = 0.0;
    double confidence = 0.0;
    std::size_t count = 0;
};
using ReliabilityDiagram = std::vector<ReliabilityBin>;

/// Bin index for a confidence value, half-open intervals ((m-1)/M, m/M].
std::size_t bin_index(double p, int bins);

BinStats bin_stats(const PredictionLog& log, int bins);
double accuracy(const PredictionLog& log);
double ece(const PredictionLog& log, int bins);
double cece(const PredictionLog& log, int bins);
ReliabilityDiagram reliability(const PredictionLog& log, int bins);

/// probs = softmax(logits / T); argmax preserved for any T > 0.
PredictionLog apply_temperature(const Tensor& logits, const std::vector<int>& labels, double T);

/// Grid-search temperature on {0.10, 0.11, ..., 5.00} minimizing ece; ties
/// broken by the smallest T.
double fit_temperature(const PredictionLog& val, int bins);
std::vector<double> temperature_grid();

void write_reliability_csv(const std::string& path, const ReliabilityDiagram& d);

}  // namespace fgr
