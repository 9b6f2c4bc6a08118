#include "fgr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "fgr/checkpoint.hpp"
#include "fgr/optim.hpp"

namespace fgr {

using json = nlohmann::json;

TrainConfig::TrainConfig() {
    loss_main.kind = LossConfig::Kind::DualFocal;
    loss_main.gamma = 5.0;
    loss_calib.kind = LossConfig::Kind::SoftEce;
    loss_calib.bins = 15;
    loss_calib.t = 0.01;
}

void TrainConfig::validate() const {
    if (model != "mlp" && model != "tinyconv")
        throw std::invalid_argument("TrainConfig: model must be mlp or tinyconv");
    if (rho < 0.0 || rho >= 1.0) throw std::invalid_argument("TrainConfig: rho must be in [0,1)");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (mode != "two-stage" && mode != "scratch")
        throw std::invalid_argument("TrainConfig: mode must be two-stage or scratch");
    if (mode == "scratch" && filter_start_epoch >= epochs)
        throw std::invalid_argument("TrainConfig: filter_start_epoch must be < epochs");
    if (lambda_set.empty()) throw std::invalid_argument("TrainConfig: empty lambda_set");
    loss_main.validate();
    loss_calib.validate();
}

int TrainConfig::effective_filter_start() const {
    if (mode != "scratch") return 0;
    if (filter_start_epoch >= 0) return filter_start_epoch;
    return int(0.6 * epochs);
}

static LossConfig loss_from_json(const json& j) {
    LossConfig d;
    return LossConfig::parse(j.value("kind", std::string("ce")), j.value("alpha", d.alpha),
                             j.value("gamma", d.gamma), j.value("bins", d.bins), j.value("t", d.t));
}

static json loss_to_json(const LossConfig& c) {
    return json{{"kind", c.kind_name()}, {"alpha", c.alpha}, {"gamma", c.gamma},
                {"bins", c.bins},        {"t", c.t}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.model = j.value("model", c.model);
    if (j.contains("loss_main")) c.loss_main = loss_from_json(j.at("loss_main"));
    if (j.contains("loss_calib")) c.loss_calib = loss_from_json(j.at("loss_calib"));
    c.rho = j.value("rho", c.rho);
    c.lambda_set = j.value("lambda_set", c.lambda_set);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.lr_milestones = j.value("lr_milestones", c.lr_milestones);
    c.mode = j.value("mode", c.mode);
    c.filter_start_epoch = j.value("filter_start_epoch", c.filter_start_epoch);
    c.seed = j.value("seed", c.seed);
    c.eval_bins = j.value("eval_bins", c.eval_bins);
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage1_lr = j.value("stage1_lr", c.stage1_lr);
    c.filter_enabled = j.value("filter_enabled", c.filter_enabled);
    c.rectify_enabled = j.value("rectify_enabled", c.rectify_enabled);
    c.validate();
    return c;
}

json TrainConfig::to_json() const {
    return json{{"model", model},
                {"loss_main", loss_to_json(loss_main)},
                {"loss_calib", loss_to_json(loss_calib)},
                {"rho", rho},
                {"lambda_set", lambda_set},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"lr", lr},
                {"momentum", momentum},
                {"weight_decay", weight_decay},
                {"lr_milestones", lr_milestones},
                {"mode", mode},
                {"filter_start_epoch", filter_start_epoch},
                {"seed", seed},
                {"eval_bins", eval_bins},
                {"stage1_epochs", stage1_epochs},
                {"stage1_lr", stage1_lr},
                {"filter_enabled", filter_enabled},
                {"rectify_enabled", rectify_enabled}};
}

ModelParams make_model(const TrainConfig& cfg, int k, std::size_t size) {
    if (cfg.model == "mlp") return make_mlp(3 * size * size, std::size_t(k), cfg.seed);
    return make_tinyconv(3, size, size, std::size_t(k), cfg.seed);
}

Tensor make_input(const ModelParams& model, const std::vector<LabeledImage>& images,
                  const std::vector<std::size_t>& indices) {
    const std::size_t B = indices.size();
    if (model.arch == "mlp") {
        const std::size_t D = model.in_dim;
        Tensor x({B, D});
        for (std::size_t b = 0; b < B; ++b) {
            const auto& img = images[indices[b]].image;
            for (std::size_t i = 0; i < D; ++i) x.data[b * D + i] = double(img.data[i]) / 255.0;
        }
        return x;
    }
    const std::size_t H = model.in_h, W = model.in_w;
    Tensor x({B, 3, H, W});
    for (std::size_t b = 0; b < B; ++b) {
        const auto& img = images[indices[b]].image;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < H * W; ++p)
                x.data[(b * 3 + c) * H * W + p] = double(img.data[p * 3 + c]) / 255.0;
    }
    return x;
}

namespace {

std::vector<int> batch_labels(const std::vector<LabeledImage>& images,
                              const std::vector<std::size_t>& indices) {
    std::vector<int> y(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) y[i] = images[indices[i]].label;
    return y;
}

double milestone_lr(double base, const std::vector<double>& milestones, int epoch, int total) {
    double lr = base;
    for (double m : milestones)
        if (epoch >= int(m * total)) lr *= 0.1;
    return lr;
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> idx, int batch_size,
                                                   std::mt19937_64& rng) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < idx.size(); i += batch_size) {
        std::size_t e = std::min(idx.size(), i + batch_size);
        batches.emplace_back(idx.begin() + i, idx.begin() + e);
    }
    return batches;
}

// Cycling shuffled iterator over a fixed index set.
class CyclingSampler {
public:
    CyclingSampler(std::vector<std::size_t> indices, std::uint64_t seed)
        : indices_(std::move(indices)), rng_(seed) {
        reshuffle();
    }
    std::vector<std::size_t> next(std::size_t count) {
        std::vector<std::size_t> out;
        out.reserve(count);
        while (out.size() < count) {
            if (pos_ == indices_.size()) reshuffle();
            out.push_back(indices_[pos_++]);
        }
        return out;
    }

private:
    void reshuffle() {
        std::shuffle(indices_.begin(), indices_.end(), rng_);
        pos_ = 0;
    }
    std::vector<std::size_t> indices_;
    std::mt19937_64 rng_;
    std::size_t pos_ = 0;
};

struct NanAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check_loss_finite(double loss, const std::string& stage, int epoch, const ModelParams& last_good) {
    if (std::isfinite(loss)) return;
    auto path = (std::filesystem::temp_directory_path() / "fgr_last_good.ckpt").string();
    save_checkpoint(path, last_good);
    throw NanAbort(stage + ": non-finite loss at epoch " + std::to_string(epoch) +
                   "; last-good checkpoint saved to " + path);
}

std::set<std::string> group_names(const ModelParams& m, ParamGroup g) {
    std::set<std::string> s;
    for (const auto& p : m.params)
        if (p.group == g) s.insert(p.name);
    return s;
}

// Backbone features for a set of images, computed in batches.
Tensor features_for(const ModelParams& model, const std::vector<LabeledImage>& images,
                    const std::vector<std::size_t>& indices) {
    const std::size_t F = head_feature_dim(model);
    Tensor out({indices.size(), F});
    const std::size_t chunk = 256;
    for (std::size_t i = 0; i < indices.size(); i += chunk) {
        std::vector<std::size_t> part(indices.begin() + i,
                                      indices.begin() + std::min(indices.size(), i + chunk));
        Tensor f = backbone_features(model, make_input(model, images, part));
        std::copy(f.data.begin(), f.data.end(), out.data.begin() + i * F);
    }
    return out;
}

Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& rows) {
    const std::size_t F = src.dim(1);
    Tensor out({rows.size(), F});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(src.data.begin() + rows[i] * F, src.data.begin() + (rows[i] + 1) * F,
                  out.data.begin() + i * F);
    return out;
}

}  // namespace

ModelParams train_stage1(const TrainConfig& cfg, const std::vector<LabeledImage>& train) {
    cfg.validate();
    if (train.empty()) throw std::invalid_argument("train_stage1: empty training set");
    int k = 0;
    for (const auto& li : train) k = std::max(k, li.label + 1);
    ModelParams model = make_model(cfg, k, train[0].image.height);
    OptimizerState opt;
    opt.kind = OptKind::SgdMomentum;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;
    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    ModelParams last_good = model;
    for (int epoch = 0; epoch < cfg.stage1_epochs; ++epoch) {
        opt.lr = milestone_lr(cfg.stage1_lr, cfg.lr_milestones, epoch, cfg.stage1_epochs);
        std::mt19937_64 rng(hash_seed(cfg.seed, 0x5331, std::uint64_t(epoch)));
        for (const auto& batch : make_batches(all, cfg.batch_size, rng)) {
            Tape tape;
            TapedForward fwd = forward(tape, model, make_input(model, train, batch));
            Tape::NodeId probs = tape.softmax(fwd.logits);
            Tape::NodeId loss = cross_entropy(tape, probs, batch_labels(train, batch));
            check_loss_finite(tape.value(loss)[0], "train_stage1", epoch, last_good);
            tape.backward(loss);
            optimizer_step(opt, model, collect_grads(tape, model, fwd));
        }
        last_good = model;
    }
    return model;
}

RunResult finetune_fgr(const TrainConfig& cfg, const ModelParams& init,
                       const std::vector<LabeledImage>& train) {
    cfg.validate();
    if (cfg.filter_enabled && (cfg.rho <= 0.0 || cfg.rho >= 1.0))
        throw std::invalid_argument("finetune_fgr: rho must be in (0,1) when filtering is enabled");
    if (train.empty()) throw std::invalid_argument("finetune_fgr: empty training set");
    const bool two_stage = cfg.mode == "two-stage";
    RunResult res;
    res.params = init;
    ModelParams& model = res.params;

    const std::set<std::string> backbone = group_names(model, ParamGroup::Backbone);
    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    OptimizerState opt;
    opt.kind = OptKind::SgdMomentum;
    opt.lr = cfg.lr;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;

    // two-stage: frozen backbone, so per-image features are reusable
    Tensor orig_features;
    if (two_stage) orig_features = features_for(model, train, all);
    const std::size_t F = two_stage ? orig_features.dim(1) : 0;

    ModelParams last_good = model;
    std::vector<ConflictStep> conflict_hist;
    const int filter_start = cfg.effective_filter_start();

    // two-stage: filtered-image features depend only on (index, lambda), so they
    // are cached across epochs even though the filtered subset resamples
    std::map<std::pair<std::size_t, int>, std::vector<double>> filt_cache;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.lr = milestone_lr(cfg.lr, cfg.lr_milestones, epoch, cfg.epochs);
        const bool fgr_active = two_stage || epoch >= filter_start;
        const bool filtering = cfg.filter_enabled && fgr_active;
        HybridDataset hybrid = build_hybrid(train, filtering ? cfg.rho : 0.0, cfg.lambda_set,
                                            std::uint64_t(epoch), cfg.seed);
        // compute features for (index, lambda) pairs not seen in earlier epochs
        if (two_stage && !hybrid.filt_indices.empty()) {
            std::vector<LabeledImage> fresh;
            std::vector<std::pair<std::size_t, int>> keys;
            for (std::size_t i : hybrid.filt_indices) {
                std::pair<std::size_t, int> key{i, hybrid.lambda_per_image.at(i)};
                if (filt_cache.count(key)) continue;
                keys.push_back(key);
                fresh.push_back({hybrid.materialize(i), train[i].label});
            }
            if (!fresh.empty()) {
                std::vector<std::size_t> seq(fresh.size());
                for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = i;
                Tensor f = features_for(model, fresh, seq);
                for (std::size_t j = 0; j < keys.size(); ++j)
                    filt_cache[keys[j]] = {f.data.begin() + j * F, f.data.begin() + (j + 1) * F};
            }
        }
        std::vector<std::size_t> orig_indices;
        orig_indices.reserve(train.size() - hybrid.filt_indices.size());
        for (std::size_t i = 0; i < train.size(); ++i)
            if (!hybrid.is_filtered(i)) orig_indices.push_back(i);

        CyclingSampler calib_sampler(orig_indices, hash_seed(cfg.seed, 0xca11b, std::uint64_t(epoch)));
        std::mt19937_64 rng(hash_seed(cfg.seed, 0x4d41494e, std::uint64_t(epoch)));

        // D_mix batch tensor: filtered variants substituted in place
        auto mix_input = [&](const std::vector<std::size_t>& batch) {
            if (two_stage) {
                Tensor x({batch.size(), F});
                for (std::size_t b = 0; b < batch.size(); ++b) {
                    const std::size_t i = batch[b];
                    const double* src =
                        hybrid.is_filtered(i)
                            ? filt_cache.at({i, hybrid.lambda_per_image.at(i)}).data()
                            : orig_features.data.data() + i * F;
                    std::copy(src, src + F, x.data.begin() + b * F);
                }
                return x;
            }
            std::vector<LabeledImage> imgs;
            imgs.reserve(batch.size());
            std::vector<std::size_t> seq(batch.size());
            for (std::size_t b = 0; b < batch.size(); ++b) {
                imgs.push_back({hybrid.materialize(batch[b]), train[batch[b]].label});
                seq[b] = b;
            }
            return make_input(model, imgs, seq);
        };
        auto orig_input = [&](const std::vector<std::size_t>& batch) {
            if (two_stage) return gather_rows(orig_features, batch);
            return make_input(model, train, batch);
        };
        auto run_forward = [&](Tape& tape, const Tensor& x) {
            if (two_stage) return head_forward(tape, model, tape.leaf(x));
            return forward(tape, model, x);
        };

        int step_idx = 0;
        for (const auto& batch : make_batches(all, cfg.batch_size, rng)) {
            // main gradient on D_mix
            Tape tape_main;
            TapedForward fwd_main = run_forward(tape_main, mix_input(batch));
            Tape::NodeId probs_main = tape_main.softmax(fwd_main.logits);
            Tape::NodeId loss_main =
                make_loss(tape_main, probs_main, batch_labels(train, batch), cfg.loss_main);
            double loss_main_v = tape_main.value(loss_main)[0];
            check_loss_finite(loss_main_v, "finetune_fgr", epoch, last_good);
            tape_main.backward(loss_main);
            std::set<std::string> trainable;
            for (const auto& p : model.params)
                if (!two_stage || p.group == ParamGroup::Head) trainable.insert(p.name);
            GradientVector g_main =
                flatten_grads(model, collect_grads(tape_main, model, fwd_main), trainable);

            // calibration gradient on D_orig
            std::vector<std::size_t> calib_batch = calib_sampler.next(batch.size());
            Tape tape_cal;
            TapedForward fwd_cal = run_forward(tape_cal, orig_input(calib_batch));
            Tape::NodeId probs_cal = tape_cal.softmax(fwd_cal.logits);
            Tape::NodeId loss_cal =
                make_loss(tape_cal, probs_cal, batch_labels(train, calib_batch), cfg.loss_calib);
            double loss_cal_v = tape_cal.value(loss_cal)[0];

            StepLog log;
            log.epoch = epoch;
            log.step = step_idx++;
            log.loss_main = loss_main_v;
            log.loss_calib = loss_cal_v;

            GradientVector g_final;
            if (cfg.rectify_enabled && fgr_active) {
                tape_cal.backward(loss_cal);
                GradientVector g_calib =
                    flatten_grads(model, collect_grads(tape_cal, model, fwd_cal), trainable);
                RectifyResult r = rectify(g_main, g_calib);
                log.conflicted = r.conflicted;
                log.cosine = cosine(g_main, g_calib);
                // step-level non-degradation, checked live; a vanishing
                // g_calib imposes no constraint (same guard as rectify)
                double slack = 1e-9 * norm(g_main) * norm(g_calib);
                if (dot(g_calib, g_calib) >= 1e-24 && dot(r.g_final, g_calib) < -slack)
                    throw std::logic_error("finetune_fgr: non-degradation violated at epoch " +
                                           std::to_string(epoch) + " step " + std::to_string(log.step));
                g_final = std::move(r.g_final);
            } else {
                g_final = std::move(g_main);
            }
            conflict_hist.push_back({log.conflicted, log.cosine});
            res.steps.push_back(log);
            optimizer_step(opt, model, unflatten_grads(model, g_final, trainable),
                           two_stage ? &backbone : nullptr);
        }
        last_good = model;
    }
    if (!conflict_hist.empty()) res.conflicts = conflict_stats(conflict_hist);
    return res;
}

PredictionLog predict(const ModelParams& model, const std::vector<LabeledImage>& images) {
    if (images.empty()) throw std::invalid_argument("predict: empty image list");
    const std::size_t N = images.size(), K = model.num_classes;
    Tensor logits({N, K});
    const std::size_t chunk = 256;
    std::vector<std::size_t> part;
    for (std::size_t i = 0; i < N; i += chunk) {
        part.clear();
        for (std::size_t j = i; j < std::min(N, i + chunk); ++j) part.push_back(j);
        Tensor out = forward_plain(model, make_input(model, images, part));
        std::copy(out.data.begin(), out.data.end(), logits.data.begin() + i * K);
    }
    PredictionLog log;
    log.probs = kernels::softmax(logits);
    log.labels.resize(N);
    for (std::size_t i = 0; i < N; ++i) log.labels[i] = images[i].label;
    log.logits = std::move(logits);
    return log;
}

namespace {

MetricsRow metrics_row(const std::string& split, const std::string& corr, int severity,
                       const PredictionLog& log, int bins, double t_star) {
    MetricsRow r;
    r.split = split;
    r.corruption = corr;
    r.severity = severity;
    r.accuracy = accuracy(log);
    r.ece = ece(log, bins);
    r.cece = cece(log, bins);
    PredictionLog ts = apply_temperature(*log.logits, log.labels, t_star);
    r.ece_ts = ece(ts, bins);
    r.cece_ts = cece(ts, bins);
    r.t_star = t_star;
    return r;
}

}  // namespace

std::vector<MetricsRow> evaluate(const ModelParams& model, const DataSet& data,
                                 const std::vector<CorruptionKind>& corruptions, int bins,
                                 std::uint64_t eval_seed) {
    // temperature fit exactly once, on the clean validation split
    PredictionLog val_log = predict(model, data.val);
    double t_star = fit_temperature(val_log, bins);
    std::vector<MetricsRow> rows;
    rows.push_back(metrics_row("id", "none", 0, predict(model, data.test_id), bins, t_star));
    if (!data.test_shift.empty())
        rows.push_back(metrics_row("shift", "none", 0, predict(model, data.test_shift), bins, t_star));
    for (CorruptionKind kind : corruptions)
        for (int sev = 1; sev <= 5; ++sev) {
            CorruptionSpec spec{kind, sev};
            std::vector<LabeledImage> corrupted;
            corrupted.reserve(data.test_id.size());
            for (std::size_t i = 0; i < data.test_id.size(); ++i)
                corrupted.push_back(
                    {corrupt(data.test_id[i].image, spec, hash_seed(eval_seed, i)), data.test_id[i].label});
            rows.push_back(
                metrics_row("id_c", spec.kind_name(), sev, predict(model, corrupted), bins, t_star));
        }
    return rows;
}

namespace {

AblationRow extract_id_shift(const std::string& name, const std::vector<MetricsRow>& rows) {
    AblationRow r;
    r.name = name;
    for (const auto& m : rows) {
        if (m.split == "id" && m.corruption == "none") {
            r.acc_id = m.accuracy;
            r.ece_id = m.ece;
        } else if (m.split == "shift") {
            r.acc_shift = m.accuracy;
            r.ece_shift = m.ece;
        }
    }
    return r;
}

}  // namespace

std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const DataSet& data) {
    ModelParams stage1 = train_stage1(cfg, data.train);
    std::vector<AblationRow> rows;
    const std::vector<std::pair<std::string, std::pair<bool, bool>>> variants = {
        {"filter-only", {true, false}}, {"rectify-only", {false, true}}, {"both", {true, true}}};
    for (const auto& [name, flags] : variants) {
        TrainConfig c = cfg;
        c.filter_enabled = flags.first;
        c.rectify_enabled = flags.second;
        RunResult run = finetune_fgr(c, stage1, data.train);
        rows.push_back(extract_id_shift(name, evaluate(run.params, data, {}, cfg.eval_bins)));
    }
    return rows;
}

std::vector<SweepRow> sweep(const TrainConfig& cfg, const DataSet& data, const std::string& param,
                            const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("sweep: empty value list");
    if (param != "gamma" && param != "rho" && param != "lambda")
        throw std::invalid_argument("sweep: param must be gamma, rho, or lambda");
    ModelParams stage1 = train_stage1(cfg, data.train);  // independent of the swept knob
    std::vector<SweepRow> rows;
    for (double v : values) {
        TrainConfig c = cfg;
        if (param == "gamma") c.loss_main.gamma = v;
        else if (param == "rho") c.rho = v;
        else c.lambda_set = {int(v)};
        RunResult run = finetune_fgr(c, stage1, data.train);
        AblationRow a = extract_id_shift("", evaluate(run.params, data, {}, cfg.eval_bins));
        rows.push_back({v, a.acc_id, a.ece_id, a.acc_shift, a.ece_shift});
    }
    return rows;
}

void write_training_log(const std::string& path, const std::vector<StepLog>& steps) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_training_log: cannot open " + path);
    out << "epoch,step,conflicted,cosine,loss_main,loss_calib\n";
    out.precision(17);
    for (const auto& s : steps)
        out << s.epoch << "," << s.step << "," << (s.conflicted ? 1 : 0) << "," << s.cosine << ","
            << s.loss_main << "," << s.loss_calib << "\n";
}

std::vector<StepLog> read_training_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_training_log: cannot open " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<StepLog> steps;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        StepLog s;
        char comma;
        int conflicted;
        ss >> s.epoch >> comma >> s.step >> comma >> conflicted >> comma >> s.cosine >> comma >>
            s.loss_main >> comma >> s.loss_calib;
        s.conflicted = conflicted != 0;
        steps.push_back(s);
    }
    return steps;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    out << "split,corruption,severity,accuracy,ece,cece,ece_ts,cece_ts,T_star\n";
    out.precision(10);
    for (const auto& r : rows)
        out << r.split << "," << r.corruption << "," << r.severity << "," << r.accuracy << ","
            << r.ece << "," << r.cece << "," << r.ece_ts << "," << r.cece_ts << "," << r.t_star
            << "\n";
}

}  // namespace fgr
