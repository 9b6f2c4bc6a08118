#include "fgr/metrics.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "fgr/autodiff.hpp"

namespace fgr {

void PredictionLog::validate() const {
    if (probs.ndim() != 2 || n() == 0) throw std::invalid_argument("PredictionLog: empty or not [N,K]");
    if (labels.size() != n()) throw std::invalid_argument("PredictionLog: label count mismatch");
    for (std::size_t i = 0; i < n(); ++i) {
        if (labels[i] < 0 || labels[i] >= int(k()))
            throw std::invalid_argument("PredictionLog: label out of range");
        double s = 0.0;
        for (std::size_t j = 0; j < k(); ++j) s += probs.at(i, j);
        if (std::abs(s - 1.0) > 1e-9)
            throw std::invalid_argument("PredictionLog: probability row " + std::to_string(i) +
                                        " sums to " + std::to_string(s));
    }
    if (logits && (logits->ndim() != 2 || logits->dim(0) != n() || logits->dim(1) != k()))
        throw std::invalid_argument("PredictionLog: logits shape mismatch");
}

std::size_t bin_index(double p, int bins) {
    if (p <= 0.0) return 0;
    auto m = std::size_t(std::ceil(p * bins));
    if (m < 1) m = 1;
    if (m > std::size_t(bins)) m = bins;
    return m - 1;
}

static std::size_t argmax_row(const Tensor& probs, std::size_t i) {
    std::size_t a = 0;
    for (std::size_t j = 1; j < probs.dim(1); ++j)
        if (probs.at(i, j) > probs.at(i, a)) a = j;
    return a;
}

BinStats bin_stats(const PredictionLog& log, int bins) {
    if (bins < 1) throw std::invalid_argument("bin_stats: bins must be >= 1");
    log.validate();
    BinStats s;
    s.count.assign(bins, 0);
    s.conf_sum.assign(bins, 0.0);
    s.correct_sum.assign(bins, 0.0);
    for (std::size_t i = 0; i < log.n(); ++i) {
        std::size_t a = argmax_row(log.probs, i);
        double conf = log.probs.at(i, a);
        std::size_t m = bin_index(conf, bins);
        s.count[m] += 1;
        s.conf_sum[m] += conf;
        s.correct_sum[m] += (int(a) == log.labels[i]) ? 1.0 : 0.0;
    }
    return s;
}

double accuracy(const PredictionLog& log) {
    log.validate();
    std::size_t c = 0;
    for (std::size_t i = 0; i < log.n(); ++i)
        if (int(argmax_row(log.probs, i)) == log.labels[i]) ++c;
    return double(c) / double(log.n());
}

double ece(const PredictionLog& log, int bins) {
    BinStats s = bin_stats(log, bins);
    double e = 0.0;
    const double n = double(log.n());
    for (int m = 0; m < bins; ++m) {
        if (s.count[m] == 0) continue;
        double cnt = double(s.count[m]);
        e += (cnt / n) * std::abs(s.correct_sum[m] / cnt - s.conf_sum[m] / cnt);
    }
    return e;
}

double cece(const PredictionLog& log, int bins) {
    if (bins < 1) throw std::invalid_argument("cece: bins must be >= 1");
    log.validate();
    const std::size_t N = log.n(), K = log.k();
    double total = 0.0;
    std::vector<std::size_t> count(bins);
    std::vector<double> conf_sum(bins), correct_sum(bins);
    for (std::size_t cls = 0; cls < K; ++cls) {
        std::fill(count.begin(), count.end(), 0);
        std::fill(conf_sum.begin(), conf_sum.end(), 0.0);
        std::fill(correct_sum.begin(), correct_sum.end(), 0.0);
        // every sample binned by its class-cls probability; n_k = N
        for (std::size_t i = 0; i < N; ++i) {
            double p = log.probs.at(i, cls);
            std::size_t m = bin_index(p, bins);
            count[m] += 1;
            conf_sum[m] += p;
            correct_sum[m] += (log.labels[i] == int(cls)) ? 1.0 : 0.0;
        }
        for (int m = 0; m < bins; ++m) {
            if (count[m] == 0) continue;
            double cnt = double(count[m]);
            total += (cnt / double(N)) * std::abs(correct_sum[m] / cnt - conf_sum[m] / cnt);
        }
    }
    return total / double(K);
}

ReliabilityDiagram reliability(const PredictionLog& log, int bins) {
    BinStats s = bin_stats(log, bins);
    ReliabilityDiagram d(bins);
    for (int m = 0; m < bins; ++m) {
        d[m].center = (2.0 * m + 1.0) / (2.0 * bins);
        d[m].count = s.count[m];
        if (s.count[m]) {
            d[m].accuracy = s.correct_sum[m] / double(s.count[m]);
            d[m].confidence = s.conf_sum[m] / double(s.count[m]);
        }
    }
    return d;
}

PredictionLog apply_temperature(const Tensor& logits, const std::vector<int>& labels, double T) {
    if (T <= 0.0) throw std::invalid_argument("apply_temperature: T must be > 0");
    if (logits.ndim() != 2) throw std::invalid_argument("apply_temperature: logits must be [N,K]");
    Tensor scaled = logits;
    for (double& v : scaled.data) v /= T;
    PredictionLog out;
    out.probs = kernels::softmax(scaled);
    out.labels = labels;
    out.logits = logits;
    return out;
}

std::vector<double> temperature_grid() {
    std::vector<double> g;
    g.reserve(491);
    for (int i = 10; i <= 500; ++i) g.push_back(double(i) / 100.0);
    return g;
}

double fit_temperature(const PredictionLog& val, int bins) {
    val.validate();
    if (!val.logits) throw std::invalid_argument("fit_temperature: log has no logits");
    double best_t = 0.0, best_e = 0.0;
    bool first = true;
    for (double T : temperature_grid()) {
        double e = ece(apply_temperature(*val.logits, val.labels, T), bins);
        if (first || e < best_e) {
            best_e = e;
            best_t = T;
            first = false;
        }
    }
    return best_t;
}

void write_reliability_csv(const std::string& path, const ReliabilityDiagram& d) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_reliability_csv: cannot open " + path);
    out << "bin_center,accuracy,confidence,count\n";
    for (const auto& b : d)
        out << b.center << "," << b.accuracy << "," << b.confidence << "," << b.count << "\n";
}

}  // namespace fgr
