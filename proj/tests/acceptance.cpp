// Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.
// Each numeric criterion is checked against an independent oracle implemented
// in this file (brute-force binning, naive DCT, finite differences), not
// against the library's own code paths.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fgr/datagen.hpp"
#include "fgr/freq_filter.hpp"
#include "fgr/harness.hpp"
#include "fgr/losses.hpp"
#include "fgr/metrics.hpp"
#include "fgr/nn.hpp"
#include "fgr/rectify.hpp"

using namespace fgr;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    std::cout << "criterion " << idx << " [" << name << "]: " << (ok ? "PASS" : "FAIL");
    if (!detail.empty()) std::cout << "  (" << detail << ")";
    std::cout << std::endl;
    if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1

void criterion_1() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(911);
    std::uniform_real_distribution<double> logmag(-6.0, 3.0);
    bool ok = true;
    int conflicted = 0;
    for (int trial = 0; trial < 1200; ++trial) {
        std::size_t n = 2 + rng() % 9999;
        double m1 = std::pow(10.0, logmag(rng)), m2 = std::pow(10.0, logmag(rng));
        std::normal_distribution<double> d1(0.0, m1), d2(0.0, m2);
        GradientVector gm(n), gc(n);
        for (double& x : gm) x = d1(rng);
        for (double& x : gc) x = d2(rng);
        if (trial % 3 == 0)  // force a conflicting pair
            for (std::size_t i = 0; i < n; ++i) gc[i] = -gm[i] + 0.1 * m1 * gc[i] / m2;

        RectifyResult r = rectify(gm, gc);
        double nm = norm(gm), nc = norm(gc), d = dot(r.g_final, gc);
        ok = ok && d >= -1e-9 * nm * nc;                            // (a)
        if (r.conflicted) {
            ++conflicted;
            ok = ok && std::fabs(d) <= 1e-9 * nm * nc;              // (b)
        } else {
            ok = ok && r.g_final == gm;                             // (c)
        }
        ok = ok && norm(r.g_final) <= nm + 1e-12;                   // (d)
        GradientVector gcs = gc;
        for (double& x : gcs) x *= 123.0;
        RectifyResult rs = rectify(gm, gcs);                        // (e)
        ok = ok && rs.conflicted == r.conflicted;
        for (std::size_t i = 0; i < n && ok; ++i)
            ok = std::fabs(rs.g_final[i] - r.g_final[i]) <= 1e-12 * std::max(1.0, nm);
    }
    double secs = seconds_since(t0);
    ok = ok && conflicted >= 400 && secs < 5.0;
    std::ostringstream d;
    d << "1200 pairs, " << conflicted << " conflicted, " << secs << " s";
    report(1, "rectification invariants", ok, d.str());
}

// ---------------------------------------------------------------- criterion 2

double loss_at(const Tensor& probs, const std::vector<int>& labels, const LossConfig& cfg) {
    Tape tape;
    return tape.value(make_loss(tape, tape.leaf(probs), labels, cfg))[0];
}

void criterion_2() {
    auto t0 = Clock::now();
    std::vector<LossConfig> losses(5);
    losses[0].kind = LossConfig::Kind::Ce;
    losses[1].kind = LossConfig::Kind::LabelSmoothing;
    losses[1].alpha = 0.08;
    losses[2].kind = LossConfig::Kind::Focal;
    losses[2].gamma = 2.0;
    losses[3].kind = LossConfig::Kind::DualFocal;
    losses[3].gamma = 5.0;
    losses[4].kind = LossConfig::Kind::SoftEce;
    losses[4].bins = 15;
    losses[4].t = 0.01;

    std::mt19937_64 rng(404);
    double worst = 0.0;
    std::string worst_kind;
    for (const LossConfig& cfg : losses) {
        for (int inst = 0; inst < 100; ++inst) {
            std::size_t B = 1 + rng() % 8, K = 2 + rng() % 4;
            Tensor probs({B, K});
            std::normal_distribution<double> nd(0.0, 2.0);
            // losses pick argmax probabilities (confidence, largest non-true
            // class); keep rows away from ties so the FD step cannot flip them
            for (std::size_t i = 0; i < B; ++i) {
                bool separated = false;
                while (!separated) {
                    double z = 0.0;
                    for (std::size_t j = 0; j < K; ++j) z += probs.at(i, j) = std::exp(nd(rng));
                    separated = true;
                    for (std::size_t a = 0; a < K && separated; ++a) {
                        probs.at(i, a) /= z;
                        separated = probs.at(i, a) >= 2e-2;  // keeps 1/p^2 curvature tame
                        for (std::size_t b = 0; b < a && separated; ++b)
                            separated = std::fabs(probs.at(i, a) - probs.at(i, b)) > 2e-2;
                    }
                }
            }
            std::vector<int> labels(B);
            for (auto& l : labels) l = int(rng() % K);

            Tape tape;
            Tape::NodeId x = tape.leaf(probs);
            Tape::NodeId loss = make_loss(tape, x, labels, cfg);
            tape.backward(loss);
            const Tensor& an = tape.grad(x);

            const double h = 1e-5;
            for (std::size_t i = 0; i < probs.data.size(); ++i) {
                Tensor lp = probs, lm = probs;
                lp.data[i] += h;
                lm.data[i] -= h;
                double fd = (loss_at(lp, labels, cfg) - loss_at(lm, labels, cfg)) / (2 * h);
                double rel = std::fabs(fd - an.data[i]) /
                             std::max({std::fabs(fd), std::fabs(an.data[i]), 1e-5});
                if (rel > worst) {
                    worst = rel;
                    worst_kind = cfg.kind_name();
                }
            }
        }
    }
    double secs = seconds_since(t0);
    bool ok = worst <= 1e-4 && secs < 60.0;
    std::ostringstream d;
    d << "max rel err " << worst << " (" << worst_kind << "), " << secs << " s";
    report(2, "loss gradient finite differences", ok, d.str());
}

// ------------------------------------------------------- criteria 3/4 oracles

// Interval-scan bin index over ((m-1)/M, m/M]; p=0 goes to bin 1.
std::size_t oracle_bin(double p, int M) {
    for (int m = 1; m <= M; ++m)
        if (p > double(m - 1) / M && p <= double(m) / M) return std::size_t(m);
    return 1;  // p == 0
}

double oracle_ece(const PredictionLog& log, int M) {
    std::size_t N = log.n(), K = log.k();
    std::vector<double> conf(M + 1, 0.0), corr(M + 1, 0.0);
    std::vector<std::size_t> cnt(M + 1, 0);
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < K; ++j)
            if (log.probs.at(i, j) > log.probs.at(i, arg)) arg = j;
        double p = log.probs.at(i, arg);
        std::size_t m = oracle_bin(p, M);
        conf[m] += p;
        corr[m] += (int(arg) == log.labels[i]) ? 1.0 : 0.0;
        cnt[m] += 1;
    }
    double e = 0.0;
    for (int m = 1; m <= M; ++m)
        if (cnt[m]) e += (double(cnt[m]) / double(N)) * std::fabs(corr[m] / cnt[m] - conf[m] / cnt[m]);
    return e;
}

double oracle_cece(const PredictionLog& log, int M) {
    std::size_t N = log.n(), K = log.k();
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> conf(M + 1, 0.0), corr(M + 1, 0.0);
        std::vector<std::size_t> cnt(M + 1, 0);
        for (std::size_t i = 0; i < N; ++i) {
            double p = log.probs.at(i, k);
            std::size_t m = oracle_bin(p, M);
            conf[m] += p;
            corr[m] += (log.labels[i] == int(k)) ? 1.0 : 0.0;
            cnt[m] += 1;
        }
        for (int m = 1; m <= M; ++m)
            if (cnt[m])
                total += (double(cnt[m]) / double(N)) * std::fabs(corr[m] / cnt[m] - conf[m] / cnt[m]);
    }
    return total / double(K);
}

PredictionLog random_log(std::mt19937_64& rng, std::size_t N, std::size_t K) {
    PredictionLog log;
    Tensor logits({N, K});
    std::normal_distribution<double> nd(0.0, 2.0);
    for (double& v : logits.data) v = nd(rng);
    log.logits = logits;
    log.probs = Tensor({N, K});
    for (std::size_t i = 0; i < N; ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, logits.at(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < K; ++j) z += std::exp(logits.at(i, j) - mx);
        for (std::size_t j = 0; j < K; ++j) log.probs.at(i, j) = std::exp(logits.at(i, j) - mx) / z;
    }
    log.labels.resize(N);
    for (auto& l : log.labels) l = int(rng() % K);
    return log;
}

void criterion_3() {
    auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        PredictionLog log = random_log(rng, 1 + rng() % 200, 2 + rng() % 5);
        worst = std::max(worst, std::fabs(ece(log, 15) - oracle_ece(log, 15)));
        worst = std::max(worst, std::fabs(cece(log, 15) - oracle_cece(log, 15)));
    }
    bool ok = worst <= 1e-12;

    bool fit_ok = true, argmax_ok = true;
    for (int trial = 0; trial < 25 && fit_ok; ++trial) {
        PredictionLog log = random_log(rng, 40 + rng() % 200, 2 + rng() % 4);
        double fitted = fit_temperature(log, 15);
        double best_t = 0.0, best_e = 1e300;  // exhaustive re-scan, smallest-T ties
        for (double T : temperature_grid()) {
            double e = ece(apply_temperature(*log.logits, log.labels, T), 15);
            if (e < best_e) {
                best_e = e;
                best_t = T;
            }
        }
        fit_ok = fitted == best_t;
        for (double T : temperature_grid()) {
            PredictionLog scaled = apply_temperature(*log.logits, log.labels, T);
            for (std::size_t i = 0; i < log.n() && argmax_ok; ++i) {
                std::size_t a = 0, b = 0;
                for (std::size_t j = 1; j < log.k(); ++j) {
                    if (log.probs.at(i, j) > log.probs.at(i, a)) a = j;
                    if (scaled.probs.at(i, j) > scaled.probs.at(i, b)) b = j;
                }
                argmax_ok = a == b;
            }
        }
    }
    double secs = seconds_since(t0);
    ok = ok && fit_ok && argmax_ok && secs < 60.0;
    std::ostringstream d;
    d << "max |metric - oracle| " << worst << ", fit==rescan " << (fit_ok ? "yes" : "no")
      << ", argmax preserved " << (argmax_ok ? "yes" : "no") << ", " << secs << " s";
    report(3, "metric oracles", ok, d.str());
}

void criterion_4() {
    std::mt19937_64 rng(55);
    const int M = 15;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t N = 30 + rng() % 150;
        PredictionLog log;
        log.probs = Tensor({N, 2});
        log.labels.assign(N, 0);
        for (std::size_t i = 0; i < N; ++i) {
            // confidence >= 0.02 away from every bin edge
            double p;
            do {
                p = 0.52 + 0.46 * std::uniform_real_distribution<double>(0, 1)(rng);
            } while (std::fabs(p * M - std::round(p * M)) < 0.02 * M);
            log.probs.at(i, 0) = p;
            log.probs.at(i, 1) = 1.0 - p;
            log.labels[i] = (rng() % 4 != 0) ? 0 : 1;  // 75% correct
        }
        // hard-binned RMS oracle
        std::vector<double> conf(M + 1, 0.0), corr(M + 1, 0.0);
        std::vector<std::size_t> cnt(M + 1, 0);
        for (std::size_t i = 0; i < N; ++i) {
            double p = log.probs.at(i, 0);
            std::size_t m = oracle_bin(p, M);
            conf[m] += p;
            corr[m] += log.labels[i] == 0 ? 1.0 : 0.0;
            cnt[m] += 1;
        }
        double sq = 0.0;
        for (int m = 1; m <= M; ++m)
            if (cnt[m]) {
                double gap = corr[m] / cnt[m] - conf[m] / cnt[m];
                sq += (double(cnt[m]) / double(N)) * gap * gap;
            }
        double hard = std::sqrt(sq);

        Tape tape;
        double soft = tape.value(soft_ece(tape, tape.leaf(log.probs), log.labels, M, 1e-6))[0];
        worst = std::max(worst, std::fabs(soft - hard));
    }
    bool ok = worst <= 1e-3;
    std::ostringstream d;
    d << "max |soft - hard RMS| " << worst;
    report(4, "soft-ECE hard-binning limit", ok, d.str());
}

// ---------------------------------------------------------------- criterion 5

Block8 naive_dct8(const Block8& x) {
    Block8 out{};
    const double pi = std::acos(-1.0);
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            double cv = v == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            double s = 0.0;
            for (int y = 0; y < 8; ++y)
                for (int xx = 0; xx < 8; ++xx)
                    s += x[std::size_t(y * 8 + xx)] * std::cos((2 * y + 1) * u * pi / 16.0) *
                         std::cos((2 * xx + 1) * v * pi / 16.0);
            out[std::size_t(u * 8 + v)] = cu * cv * s;
        }
    return out;
}

void criterion_5() {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> ud(-128.0, 128.0);
    double worst_rt = 0.0, worst_naive = 0.0, worst_parseval = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        Block8 x;
        for (double& v : x) v = ud(rng);
        Block8 f = dct8(x), back = idct8(f), ref = naive_dct8(x);
        double ex = 0.0, ef = 0.0;
        for (int i = 0; i < 64; ++i) {
            worst_rt = std::max(worst_rt, std::fabs(back[std::size_t(i)] - x[std::size_t(i)]));
            worst_naive = std::max(worst_naive, std::fabs(f[std::size_t(i)] - ref[std::size_t(i)]));
            ex += x[std::size_t(i)] * x[std::size_t(i)];
            ef += f[std::size_t(i)] * f[std::size_t(i)];
        }
        worst_parseval = std::max(worst_parseval, std::fabs(ex - ef) / std::max(ex, 1.0));
    }

    int worst_dev = 0;
    for (int trial = 0; trial < 100; ++trial) {
        ImageU8 img{16, 16};
        for (auto& b : img.data) b = std::uint8_t(rng() % 256);
        ImageU8 out = filter_image(img, 100);
        for (std::size_t i = 0; i < img.data.size(); ++i)
            worst_dev = std::max(worst_dev, std::abs(int(out.data[i]) - int(img.data[i])));
    }
    bool ok = worst_rt <= 1e-10 && worst_naive <= 1e-10 && worst_parseval <= 1e-9 && worst_dev <= 10;
    std::ostringstream d;
    d << "roundtrip " << worst_rt << ", vs naive " << worst_naive << ", parseval rel "
      << worst_parseval << ", lambda=100 max dev " << worst_dev;
    report(5, "DCT codec", ok, d.str());
}

// ---------------------------------------------------------------- criterion 6

double high_band(const ImageU8& img) {
    Block8 e = spectral_energy(img);
    double s = 0.0;
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v)
            if (u + v >= 8) s += e[std::size_t(u * 8 + v)];
    return s;
}

void criterion_6() {
    ImageU8 board{32, 32};
    for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
            std::uint8_t v = ((x + y) % 2 == 0) ? 112 : 144;
            for (std::size_t c = 0; c < 3; ++c) board.px(y, x, c) = v;
        }
    double before = high_band(board);
    double e25 = high_band(filter_image(board, 25));
    double e18 = high_band(filter_image(board, 18));
    double e15 = high_band(filter_image(board, 15));
    bool ok = e15 <= 0.10 * before && e25 >= e18 && e18 >= e15;
    std::ostringstream d;
    d << "high band " << before << " -> " << e15 << " at lambda=15 ("
      << 100.0 * (1.0 - e15 / before) << "% removed), monotone " << e25 << "/" << e18 << "/" << e15;
    report(6, "low-pass behavior", ok, d.str());
}

// ---------------------------------------------------------------- criterion 7

void criterion_7() {
    std::mt19937_64 rng(21);
    std::vector<LabeledImage> base(1000);
    for (std::size_t i = 0; i < base.size(); ++i) {
        base[i].image = ImageU8{8, 8};
        for (auto& b : base[i].image.data) b = std::uint8_t(rng() % 256);
        base[i].label = int(i % 3);
    }
    std::vector<int> lambdas{15, 18, 25};
    HybridDataset h0 = build_hybrid(base, 0.05, lambdas, 0, 42);
    HybridDataset h0b = build_hybrid(base, 0.05, lambdas, 0, 42);
    HybridDataset h1 = build_hybrid(base, 0.05, lambdas, 1, 42);
    HybridDataset hr = build_hybrid(base, 0.0305, lambdas, 0, 42);

    bool ok = h0.filt_indices.size() == 50 && hr.filt_indices.size() == 31;  // round(30.5)=31
    ok = ok && h0.filt_indices == h0b.filt_indices &&
         h0.lambda_per_image == h0b.lambda_per_image;        // determinism
    ok = ok && h0.filt_indices != h1.filt_indices;           // per-epoch resample
    std::size_t filtered = 0;                                // exact partition
    for (std::size_t i = 0; i < base.size(); ++i)
        if (h0.is_filtered(i)) ++filtered;
    ok = ok && filtered == h0.filt_indices.size() &&
         h0.lambda_per_image.size() == h0.filt_indices.size();
    for (const auto& [idx, lam] : h0.lambda_per_image)
        ok = ok && (lam == 15 || lam == 18 || lam == 25) && idx < base.size();
    std::ostringstream d;
    d << "|D_filt| " << h0.filt_indices.size() << "/50 and " << hr.filt_indices.size()
      << "/31, partition+resample+determinism ok";
    report(7, "hybrid-set contract", ok, d.str());
}

// ------------------------------------------------------------- criteria 8 & 9

struct VariantAvg {
    double acc_id = 0.0, ece_id = 0.0, acc_shift = 0.0, ece_shift = 0.0;
};

void accumulate(VariantAvg& a, const ModelParams& m, const DataSet& ds) {
    PredictionLog id = predict(m, ds.test_id);
    PredictionLog sh = predict(m, ds.test_shift);
    a.acc_id += accuracy(id) / 3.0;
    a.ece_id += ece(id, 15) / 3.0;
    a.acc_shift += accuracy(sh) / 3.0;
    a.ece_shift += ece(sh, 15) / 3.0;
}

void criteria_8_and_9() {
    auto t0 = Clock::now();
    ShapeTextureConfig dcfg;
    dcfg.n_train = 6000;
    dcfg.n_val = 600;
    dcfg.n_test = 2000;
    dcfg.k_classes = 3;
    dcfg.size = 32;
    dcfg.texture_strength = 5.0;
    dcfg.seed = 5;
    DataSet ds = gen_shape_texture(dcfg);

    VariantAvg base, both, fonly, ronly;
    std::vector<StepLog> audit_steps;  // criterion 9: seed-1 "both" run
    int audit_epochs = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.stage1_epochs = 20;
        cfg.stage1_lr = 0.01;
        cfg.epochs = 60;
        cfg.lr = 0.001;
        cfg.rho = 0.5;
        cfg.lambda_set = {3, 5, 8};
        ModelParams stage1 = train_stage1(cfg, ds.train);
        accumulate(base, stage1, ds);

        for (const std::string& variant : {"both", "fonly", "ronly"}) {
            TrainConfig vc = cfg;
            vc.filter_enabled = variant != "ronly";
            vc.rectify_enabled = variant != "fonly";
            RunResult run = finetune_fgr(vc, stage1, ds.train);
            accumulate(variant == "both" ? both : variant == "fonly" ? fonly : ronly, run.params,
                       ds);
            if (seed == 1 && variant == "both") {
                audit_steps = run.steps;
                audit_epochs = vc.epochs;
            }
        }
    }
    double secs = seconds_since(t0);

    bool trend_a = both.ece_shift <= 0.80 * base.ece_shift;
    bool trend_b = both.ece_id < fonly.ece_id && both.ece_shift < ronly.ece_shift;
    bool trend_c = std::fabs(both.acc_id - base.acc_id) <= 0.02;
    bool in_time = secs <= 900.0;
    std::ostringstream d;
    d << "shift ECE " << base.ece_shift << " -> " << both.ece_shift << " ("
      << 100.0 * (both.ece_shift / base.ece_shift - 1.0) << "% rel), id ECE both " << both.ece_id
      << " < filter-only " << fonly.ece_id << ", shift ECE both " << both.ece_shift
      << " < rectify-only " << ronly.ece_shift << ", id acc " << both.acc_id << " vs "
      << base.acc_id << ", " << secs << " s";
    report(8, "end-to-end trend", trend_a && trend_b && trend_c && in_time, d.str());

    // Criterion 9: the finetune runs above completed with the per-step
    // non-degradation assertion armed (a violation throws and would have
    // failed criterion 8); audit the persisted log of the seed-1 full run.
    const std::size_t steps_per_epoch = (ds.train.size() + 127) / 128;
    std::string log_path = "acceptance_training_log.csv";
    write_training_log(log_path, audit_steps);
    std::vector<StepLog> back = read_training_log(log_path);
    std::remove(log_path.c_str());
    bool ok = audit_steps.size() == std::size_t(audit_epochs) * steps_per_epoch;
    ok = ok && back.size() == audit_steps.size();
    for (std::size_t i = 0; i < back.size() && ok; ++i) {
        ok = std::isfinite(back[i].cosine) && std::isfinite(back[i].loss_main) &&
             std::isfinite(back[i].loss_calib) && back[i].cosine >= -1.0 - 1e-12 &&
             back[i].cosine <= 1.0 + 1e-12;
        ok = ok && back[i].conflicted == audit_steps[i].conflicted;
    }
    std::ostringstream d9;
    d9 << audit_steps.size() << " steps logged over " << audit_epochs
       << " epochs, zero live violations, log round-trips";
    report(9, "live training assertion", ok, d9.str());
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criteria_8_and_9();
    std::cout << (failures == 0 ? "all criteria passed" : "FAILURES: " + std::to_string(failures))
              << std::endl;
    return failures == 0 ? 0 : 1;
}
