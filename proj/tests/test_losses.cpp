#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "fgr/losses.hpp"

using namespace fgr;

namespace {

using LossFn = std::function<Tape::NodeId(Tape&, Tape::NodeId, const std::vector<int>&)>;

double loss_value(const LossFn& fn, const Tensor& probs, const std::vector<int>& labels) {
    Tape tape;
    return tape.value(fn(tape, tape.leaf(probs), labels))[0];
}

Tensor loss_grad(const LossFn& fn, const Tensor& probs, const std::vector<int>& labels) {
    Tape tape;
    Tape::NodeId p = tape.leaf(probs);
    tape.backward(fn(tape, p, labels));
    return tape.grad(p);
}

// Random [B,K] probability rows with the top-two entries separated by at least
// `gap` so argmax-dependent losses are smooth around the sample point.
Tensor random_probs(std::size_t B, std::size_t K, std::mt19937_64& rng, double gap = 2e-2) {
    Tensor p({B, K});
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (std::size_t i = 0; i < B; ++i) {
        while (true) {
            double sum = 0;
            for (std::size_t k = 0; k < K; ++k) sum += (p.data[i * K + k] = u(rng));
            for (std::size_t k = 0; k < K; ++k) p.data[i * K + k] /= sum;
            std::vector<double> row(p.data.begin() + i * K, p.data.begin() + (i + 1) * K);
            std::sort(row.rbegin(), row.rend());
            if (row[0] - row[1] >= gap) break;
        }
    }
    return p;
}

void fd_check(const LossFn& fn, const Tensor& probs, const std::vector<int>& labels,
              double h = 1e-5, double tol = 1e-4) {
    Tensor g = loss_grad(fn, probs, labels);
    Tensor x = probs;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double keep = x.data[i];
        x.data[i] = keep + h;
        double fp = loss_value(fn, x, labels);
        x.data[i] = keep - h;
        double fm = loss_value(fn, x, labels);
        x.data[i] = keep;
        double fd = (fp - fm) / (2 * h);
        double denom = std::max({std::fabs(fd), std::fabs(g[i]), 1e-6});
        CHECK(std::fabs(fd - g[i]) / denom <= tol);
    }
}

std::vector<int> random_labels(std::size_t B, std::size_t K, std::mt19937_64& rng) {
    std::vector<int> y(B);
    std::uniform_int_distribution<int> d(0, int(K) - 1);
    for (auto& v : y) v = d(rng);
    return y;
}

// Independent hard-binned RMS form of the soft-ECE objective.
double hard_rms_ece(const Tensor& probs, const std::vector<int>& labels, int M) {
    const std::size_t N = probs.dim(0), K = probs.dim(1);
    std::vector<double> mass(M, 0), acc(M, 0), conf(M, 0);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (probs.at(i, k) > probs.at(i, arg)) arg = k;
        double p = probs.at(i, arg);
        int bin = std::min(M - 1, std::max(0, int(std::ceil(p * M)) - 1));
        mass[bin] += 1;
        acc[bin] += (int(arg) == labels[i]) ? 1 : 0;
        conf[bin] += p;
    }
    double s = 0;
    for (int m = 0; m < M; ++m) {
        if (mass[m] == 0) continue;
        double gap = acc[m] / mass[m] - conf[m] / mass[m];
        s += mass[m] / double(N) * gap * gap;
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("cross entropy values") {
    Tensor one({1, 3}, {0.0, 1.0, 0.0});
    CHECK(loss_value(cross_entropy, one, {1}) == doctest::Approx(0.0).epsilon(1e-9));
    Tensor uni = Tensor::full({2, 4}, 0.25);
    CHECK(loss_value(cross_entropy, uni, {0, 3}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    Tensor p({1, 2}, {0.8, 0.2});
    CHECK(loss_value(cross_entropy, p, {0}) == doctest::Approx(0.22314).epsilon(1e-4));
    CHECK_THROWS_AS(loss_value(cross_entropy, p, {2}), std::invalid_argument);
}

TEST_CASE("label smoothing values") {
    Tensor p({1, 2}, {0.8, 0.2});
    // alpha=0 reduces to CE exactly
    auto ls0 = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
        return label_smoothing_ce(t, pr, y, 0.0);
    };
    CHECK(loss_value(ls0, p, {0}) == loss_value(cross_entropy, p, {0}));
    // alpha=1 is CE against the uniform target
    auto ls1 = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
        return label_smoothing_ce(t, pr, y, 1.0 - 1e-15);
    };
    double want_uniform = -(0.5 * std::log(0.8) + 0.5 * std::log(0.2));
    CHECK(loss_value(ls1, p, {0}) == doctest::Approx(want_uniform).epsilon(1e-9));
    // hand expansion: (1-a+a/K)(-ln .8) + (a/K)(-ln .2), a=0.1, K=2
    auto ls = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
        return label_smoothing_ce(t, pr, y, 0.1);
    };
    CHECK(loss_value(ls, p, {0}) == doctest::Approx(0.29246).epsilon(1e-4));
}

TEST_CASE("focal values") {
    Tensor p({1, 2}, {0.8, 0.2});
    auto f0 = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) { return focal(t, pr, y, 0.0); };
    CHECK(loss_value(f0, p, {0}) == loss_value(cross_entropy, p, {0}));  // bitwise
    auto f2 = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) { return focal(t, pr, y, 2.0); };
    CHECK(loss_value(f2, p, {0}) == doctest::Approx(0.0089257).epsilon(1e-4));
    Tensor near_one({1, 2}, {0.999999, 1e-6});
    CHECK(loss_value(f2, near_one, {0}) <= 1e-11);
}

TEST_CASE("dual focal values") {
    Tensor p({1, 2}, {0.8, 0.2});
    auto d0 = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
        return dual_focal(t, pr, y, 0.0);
    };
    CHECK(loss_value(d0, p, {0}) == loss_value(cross_entropy, p, {0}));  // bitwise
    auto d1 = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
        return dual_focal(t, pr, y, 1.0);
    };
    CHECK(loss_value(d1, p, {0}) == doctest::Approx(0.089257).epsilon(1e-4));
    Tensor near_one({1, 2}, {0.999999, 1e-6});
    CHECK(loss_value(d1, near_one, {0}) <= 1e-5);
    // K < 2 rejected
    Tensor k1({1, 1}, {1.0});
    CHECK_THROWS_AS(loss_value(d1, k1, {0}), std::invalid_argument);
    // runner-up ties: value independent of tie-break
    Tensor tie({1, 3}, {0.5, 0.25, 0.25});
    double expect = -std::pow(1 - 0.5 + 0.25, 1.0) * std::log(0.5);
    CHECK(loss_value(d1, tie, {0}) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("soft-ece trivial and limit cases") {
    auto se = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
        return soft_ece(t, pr, y, 15, 0.01);
    };
    // single correct sample at confidence 1.0
    Tensor one({1, 2}, {1.0, 0.0});
    CHECK(loss_value(se, one, {0}) == doctest::Approx(0.0).epsilon(1e-9));

    // batch permutation invariance
    std::mt19937_64 rng(3);
    Tensor p = random_probs(6, 4, rng);
    std::vector<int> y = random_labels(6, 4, rng);
    Tensor perm({6, 4});
    std::vector<int> yp(6);
    std::vector<std::size_t> order{3, 1, 5, 0, 4, 2};
    for (std::size_t i = 0; i < 6; ++i) {
        yp[i] = y[order[i]];
        for (std::size_t k = 0; k < 4; ++k) perm.at(i, k) = p.at(order[i], k);
    }
    CHECK(loss_value(se, p, y) == doctest::Approx(loss_value(se, perm, yp)).epsilon(1e-12));

    // t -> 0 limit equals the hard-binned RMS oracle when confidences stay
    // clear of every bin edge
    auto se_cold = [](Tape& t, Tape::NodeId pr, const std::vector<int>& y2) {
        return soft_ece(t, pr, y2, 15, 1e-6);
    };
    std::uniform_real_distribution<double> u(0.40, 0.995);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t N = 24;
        Tensor probs({N, 3});
        std::vector<int> labels(N);
        for (std::size_t i = 0; i < N; ++i) {
            double conf;
            do {
                conf = u(rng);
            } while (std::fabs(conf * 15 - std::round(conf * 15)) < 0.02 * 15);
            int cls = int(rng() % 3);
            for (int k = 0; k < 3; ++k) probs.at(i, k) = (1 - conf) / 2;
            probs.at(i, cls) = conf;
            labels[i] = (rng() % 2) ? cls : int((cls + 1) % 3);
        }
        double soft = loss_value(se_cold, probs, labels);
        double hard = hard_rms_ece(probs, labels, 15);
        CHECK(std::fabs(soft - hard) <= 1e-3);
    }
}

TEST_CASE("all losses nonnegative and finite at the probability floor") {
    Tensor p({2, 3}, {1e-12, 0.5, 0.5 - 1e-12, 1.0, 1e-12, 1e-12});
    std::vector<int> y{0, 0};
    std::vector<LossFn> fns = {
        cross_entropy,
        [](Tape& t, Tape::NodeId pr, const std::vector<int>& yy) {
            return label_smoothing_ce(t, pr, yy, 0.05);
        },
        [](Tape& t, Tape::NodeId pr, const std::vector<int>& yy) { return focal(t, pr, yy, 5.0); },
        [](Tape& t, Tape::NodeId pr, const std::vector<int>& yy) {
            return dual_focal(t, pr, yy, 5.0);
        },
        [](Tape& t, Tape::NodeId pr, const std::vector<int>& yy) {
            return soft_ece(t, pr, yy, 15, 0.01);
        }};
    for (const auto& fn : fns) {
        double v = loss_value(fn, p, y);
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }
}

TEST_CASE("finite-difference gradient checks, 100 random instances per loss") {
    std::mt19937_64 rng(2024);
    std::vector<std::pair<const char*, LossFn>> fns = {
        {"ce", cross_entropy},
        {"ls",
         [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
             return label_smoothing_ce(t, pr, y, 0.05);
         }},
        {"focal",
         [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) { return focal(t, pr, y, 3.0); }},
        {"dual-focal",
         [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
             return dual_focal(t, pr, y, 5.0);
         }},
        {"soft-ece", [](Tape& t, Tape::NodeId pr, const std::vector<int>& y) {
             return soft_ece(t, pr, y, 15, 0.01);
         }}};
    for (const auto& [name, fn] : fns) {
        std::string loss_name(name);
        CAPTURE(loss_name);
        for (int trial = 0; trial < 100; ++trial) {
            std::size_t B = 1 + rng() % 8, K = 2 + rng() % 4;
            Tensor probs = random_probs(B, K, rng);
            fd_check(fn, probs, random_labels(B, K, rng));
        }
    }
}

TEST_CASE("LossConfig validation and dispatch") {
    LossConfig c = LossConfig::parse("dual-focal", 0.05, 5.0, 15, 0.01);
    CHECK(c.kind == LossConfig::Kind::DualFocal);
    CHECK(c.kind_name() == "dual-focal");
    CHECK_THROWS_AS(LossConfig::parse("nope", 0, 0, 1, 0.1), std::invalid_argument);
    LossConfig bad = c;
    bad.gamma = -1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.t = 0.0;
    bad.kind = LossConfig::Kind::SoftEce;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.kind = LossConfig::Kind::LabelSmoothing;
    bad.alpha = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    // make_loss dispatch matches the direct call
    std::mt19937_64 rng(8);
    Tensor p = random_probs(4, 3, rng);
    std::vector<int> y = random_labels(4, 3, rng);
    Tape t1, t2;
    double via_dispatch = t1.value(make_loss(t1, t1.leaf(p), y, c))[0];
    double direct = t2.value(dual_focal(t2, t2.leaf(p), y, 5.0))[0];
    CHECK(via_dispatch == direct);
}
