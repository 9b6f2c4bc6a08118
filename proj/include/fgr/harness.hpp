#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fgr/datagen.hpp"
#include "fgr/losses.hpp"
#include "fgr/metrics.hpp"
#include "fgr/nn.hpp"
#include "fgr/rectify.hpp"

namespace fgr {

struct TrainConfig {
    std::string model = "tinyconv";  // "mlp" or "tinyconv"
    LossConfig loss_main;            // default dual-focal(5.0)
    LossConfig loss_calib;           // default soft-ece(15, 0.01)
    double rho = 0.05;
    std::vector<int> lambda_set = {15, 18, 25};
    int epochs = 30;  // FGR fine-tuning (or scratch total)
    int batch_size = 128;
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::vector<double> lr_milestones = {0.45, 0.75};  // fractions of epochs, x0.1 decay
    std::string mode = "two-stage";                    // "two-stage" or "scratch"
    int filter_start_epoch = -1;  // scratch mode; -1 = 60% of epochs
    std::uint64_t seed = 1;
    int eval_bins = 15;
    int stage1_epochs = 10;
    double stage1_lr = 0.01;
    // ablation switches
    bool filter_enabled = true;
    bool rectify_enabled = true;

    TrainConfig();
    void validate() const;
    static TrainConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    int effective_filter_start() const;
};

struct StepLog {
    int epoch = 0;
    int step = 0;
    bool conflicted = false;
    double cosine = 0.0;
    double loss_main = 0.0;
    double loss_calib = 0.0;
};

struct MetricsRow {
    std::string split;       // id / shift / id_c
    std::string corruption;  // none or kind name
    int severity = 0;
    double accuracy = 0.0, ece = 0.0, cece = 0.0;
    double ece_ts = 0.0, cece_ts = 0.0;
    double t_star = 0.0;
};

struct RunResult {
    ModelParams params;
    std::vector<StepLog> steps;
    std::vector<MetricsRow> metrics;
    ConflictStats conflicts{};
};

/// Images -> model input tensor (values scaled to [0,1]).
Tensor make_input(const ModelParams& model, const std::vector<LabeledImage>& images,
                  const std::vector<std::size_t>& indices);
ModelParams make_model(const TrainConfig& cfg, int k, std::size_t size);

/// Full-network cross-entropy pretraining (SGD momentum, milestone decay).
ModelParams train_stage1(const TrainConfig& cfg, const std::vector<LabeledImage>& train);

/// FGR fine-tuning per the two-stage or scratch schedule. Requires
/// rho in (0,1) when filtering is enabled.
RunResult finetune_fgr(const TrainConfig& cfg, const ModelParams& init,
                       const std::vector<LabeledImage>& train);

/// Batched inference producing a PredictionLog with logits.
PredictionLog predict(const ModelParams& model, const std::vector<LabeledImage>& images);

/// Clean ID row (+ shift row when present) + one row per (corruption,
/// severity); temperature fit once on the clean validation split.
std::vector<MetricsRow> evaluate(const ModelParams& model, const DataSet& data,
                                 const std::vector<CorruptionKind>& corruptions, int bins,
                                 std::uint64_t eval_seed = 0);

struct AblationRow {
    std::string name;  // filter-only / rectify-only / both
    double acc_id = 0.0, ece_id = 0.0, acc_shift = 0.0, ece_shift = 0.0;
};

/// Three train+eval runs sharing seed and stage-1 init, toggling the two
/// component flags.
std::vector<AblationRow> run_ablation(const TrainConfig& cfg, const DataSet& data);

struct SweepRow {
    double value = 0.0;
    double acc_id = 0.0, ece_id = 0.0, acc_shift = 0.0, ece_shift = 0.0;
};

/// One full run per value of "gamma", "rho", or "lambda" (singleton set).
std::vector<SweepRow> sweep(const TrainConfig& cfg, const DataSet& data, const std::string& param,
                            const std::vector<double>& values);

void write_training_log(const std::string& path, const std::vector<StepLog>& steps);
std::vector<StepLog> read_training_log(const std::string& path);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

}  // namespace fgr
