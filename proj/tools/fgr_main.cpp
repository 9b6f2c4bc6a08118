#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fgr/checkpoint.hpp"
#include "fgr/datagen.hpp"
#include "fgr/freq_filter.hpp"
#include "fgr/harness.hpp"
#include "fgr/image.hpp"
#include "fgr/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fgr::TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    json j;
    in >> j;
    return fgr::TrainConfig::from_json(j);
}

fgr::DataSet load_data(const std::string& dir) { return fgr::load_dataset_dir(dir); }

void write_eval_outputs(const std::string& out_dir, const fgr::ModelParams& model,
                        const fgr::DataSet& data, const std::vector<fgr::MetricsRow>& rows,
                        int bins) {
    fs::create_directories(out_dir);
    fgr::write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), rows);
    fgr::write_reliability_csv((fs::path(out_dir) / "reliability_id.csv").string(),
                               fgr::reliability(fgr::predict(model, data.test_id), bins));
    if (!data.test_shift.empty())
        fgr::write_reliability_csv((fs::path(out_dir) / "reliability_shift.csv").string(),
                                   fgr::reliability(fgr::predict(model, data.test_shift), bins));
    if (!rows.empty())
        std::cout << "temperature fit once on clean validation: T_star=" << rows[0].t_star << "\n";
    for (const auto& r : rows)
        std::cout << r.split << "/" << r.corruption << "/" << r.severity << "  acc=" << r.accuracy
                  << "  ece=" << r.ece << "  ece_ts=" << r.ece_ts << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FGR: frequency-aware gradient rectification for calibration under shift"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic shape/texture dataset");
    std::string gen_out = "data";
    std::size_t gen_n = 6000;
    std::uint64_t gen_seed = 1;
    double gen_strength = 24.0;
    std::vector<std::string> cifar_batches;
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--n", gen_n, "Training-set size");
    gen->add_option("--seed", gen_seed, "Generation seed");
    gen->add_option("--texture-strength", gen_strength, "Texture amplitude");
    gen->add_option("--cifar", cifar_batches, "CIFAR-10 batch files (train...; last file = test)");

    // filter
    auto* filt = app.add_subcommand("filter", "Low-pass filter a PPM image");
    std::string filt_in, filt_out;
    int filt_lambda = 15;
    filt->add_option("--input", filt_in, "Input PPM (P6)")->required();
    filt->add_option("--lambda", filt_lambda, "Filter strength (JPEG-style quality)")->required();
    filt->add_option("--output", filt_out, "Output PPM")->required();

    // train
    auto* train = app.add_subcommand("train", "Stage-1 cross-entropy pretraining");
    std::string train_cfg, train_data = "data", train_out = "stage1.ckpt";
    train->add_option("--config", train_cfg, "TrainConfig JSON")->required();
    train->add_option("--data", train_data, "Dataset directory");
    train->add_option("--out", train_out, "Checkpoint path");

    // finetune-fgr
    auto* ft = app.add_subcommand("finetune-fgr", "FGR fine-tuning from a checkpoint");
    std::string ft_cfg, ft_init, ft_data = "data", ft_out = "run";
    ft->add_option("--config", ft_cfg, "TrainConfig JSON")->required();
    ft->add_option("--init", ft_init, "Initial checkpoint")->required();
    ft->add_option("--data", ft_data, "Dataset directory");
    ft->add_option("--out", ft_out, "Run output directory");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint over the ID/shift grid");
    std::string ev_ckpt, ev_data = "data", ev_out = "eval";
    int ev_bins = 15;
    bool ev_no_corruptions = false;
    std::uint64_t ev_seed = 0;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--data", ev_data, "Dataset directory");
    ev->add_option("--out", ev_out, "Output directory");
    ev->add_option("--bins", ev_bins, "ECE bin count");
    ev->add_option("--eval-seed", ev_seed, "Corruption sampling seed");
    ev->add_flag("--no-corruptions", ev_no_corruptions, "Skip the corruption grid");

    // ablate
    auto* ab = app.add_subcommand("ablate", "filter-only / rectify-only / both comparison");
    std::string ab_cfg, ab_data = "data", ab_out = "ablation.csv";
    ab->add_option("--config", ab_cfg, "TrainConfig JSON")->required();
    ab->add_option("--data", ab_data, "Dataset directory");
    ab->add_option("--out", ab_out, "Output CSV");

    // sweep
    auto* sw = app.add_subcommand("sweep", "Hyperparameter sweep (gamma, rho, or lambda)");
    std::string sw_cfg, sw_data = "data", sw_param, sw_out = "sweep.csv";
    std::vector<double> sw_values;
    sw->add_option("--config", sw_cfg, "TrainConfig JSON")->required();
    sw->add_option("--param", sw_param, "gamma, rho, or lambda")->required();
    sw->add_option("--values", sw_values, "Values to sweep")->required();
    sw->add_option("--data", sw_data, "Dataset directory");
    sw->add_option("--out", sw_out, "Output CSV");

    // report
    auto* rep = app.add_subcommand("report", "Summarize a run directory");
    std::string rep_run;
    rep->add_option("--run", rep_run, "Run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            if (!cifar_batches.empty()) {
                fgr::DataSet ds;
                ds.k = 10;
                ds.size = 32;
                for (std::size_t i = 0; i + 1 < cifar_batches.size(); ++i) {
                    auto part = fgr::load_cifar10(cifar_batches[i]);
                    ds.train.insert(ds.train.end(), part.begin(), part.end());
                }
                ds.test_id = fgr::load_cifar10(cifar_batches.back());
                std::vector<fgr::LabeledImage> pool = std::move(ds.train);
                fgr::split_train_val(pool, 0.1, gen_seed, ds.train, ds.val);
                fgr::save_dataset_dir(gen_out, ds, gen_seed, 0.0);
            } else {
                fgr::ShapeTextureConfig cfg;
                cfg.n_train = gen_n;
                cfg.n_val = std::max<std::size_t>(1, gen_n / 10);
                cfg.n_test = std::max<std::size_t>(1, gen_n / 3);
                cfg.seed = gen_seed;
                cfg.texture_strength = gen_strength;
                fgr::save_dataset_dir(gen_out, fgr::gen_shape_texture(cfg), gen_seed, gen_strength);
            }
            std::cout << "wrote dataset to " << gen_out << "\n";
        } else if (filt->parsed()) {
            fgr::write_ppm(filt_out, fgr::filter_image(fgr::read_ppm(filt_in), filt_lambda));
            std::cout << "wrote " << filt_out << "\n";
        } else if (train->parsed()) {
            fgr::TrainConfig cfg = load_config(train_cfg);
            fgr::DataSet data = load_data(train_data);
            fgr::ModelParams model = fgr::train_stage1(cfg, data.train);
            fgr::save_checkpoint(train_out, model);
            std::cout << "wrote " << train_out << "\n";
        } else if (ft->parsed()) {
            fgr::TrainConfig cfg = load_config(ft_cfg);
            fgr::DataSet data = load_data(ft_data);
            fgr::RunResult run = fgr::finetune_fgr(cfg, fgr::load_checkpoint(ft_init), data.train);
            fs::create_directories(ft_out);
            fgr::save_checkpoint((fs::path(ft_out) / "final.ckpt").string(), run.params);
            fgr::write_training_log((fs::path(ft_out) / "training_log.csv").string(), run.steps);
            std::ofstream((fs::path(ft_out) / "config.json").string()) << cfg.to_json().dump(2);
            std::cout << "conflict_fraction=" << run.conflicts.conflict_fraction
                      << " mean_cosine=" << run.conflicts.mean_cosine << "\n";
            std::cout << "wrote " << ft_out << "/{final.ckpt,training_log.csv,config.json}\n";
        } else if (ev->parsed()) {
            fgr::ModelParams model = fgr::load_checkpoint(ev_ckpt);
            fgr::DataSet data = load_data(ev_data);
            std::vector<fgr::CorruptionKind> grid;
            if (!ev_no_corruptions) grid = fgr::all_corruptions();
            auto rows = fgr::evaluate(model, data, grid, ev_bins, ev_seed);
            write_eval_outputs(ev_out, model, data, rows, ev_bins);
        } else if (ab->parsed()) {
            fgr::TrainConfig cfg = load_config(ab_cfg);
            fgr::DataSet data = load_data(ab_data);
            auto rows = fgr::run_ablation(cfg, data);
            std::ofstream out(ab_out);
            out << "name,acc_id,ece_id,acc_shift,ece_shift\n";
            out.precision(10);
            for (const auto& r : rows) {
                out << r.name << "," << r.acc_id << "," << r.ece_id << "," << r.acc_shift << ","
                    << r.ece_shift << "\n";
                std::cout << r.name << "  acc_id=" << r.acc_id << " ece_id=" << r.ece_id
                          << " acc_shift=" << r.acc_shift << " ece_shift=" << r.ece_shift << "\n";
            }
            std::cout << "wrote " << ab_out << "\n";
        } else if (sw->parsed()) {
            fgr::TrainConfig cfg = load_config(sw_cfg);
            fgr::DataSet data = load_data(sw_data);
            auto rows = fgr::sweep(cfg, data, sw_param, sw_values);
            std::ofstream out(sw_out);
            out << "value,acc_id,ece_id,acc_shift,ece_shift\n";
            out.precision(10);
            for (const auto& r : rows)
                out << r.value << "," << r.acc_id << "," << r.ece_id << "," << r.acc_shift << ","
                    << r.ece_shift << "\n";
            std::cout << "wrote " << sw_out << "\n";
        } else if (rep->parsed()) {
            auto log_path = fs::path(rep_run) / "training_log.csv";
            if (fs::exists(log_path)) {
                auto steps = fgr::read_training_log(log_path.string());
                std::size_t conflicts = 0;
                for (const auto& s : steps) conflicts += s.conflicted ? 1 : 0;
                std::cout << "steps=" << steps.size() << " conflicts=" << conflicts;
                if (!steps.empty())
                    std::cout << " conflict_fraction=" << double(conflicts) / double(steps.size())
                              << " final_loss_main=" << steps.back().loss_main
                              << " final_loss_calib=" << steps.back().loss_calib;
                std::cout << "\n";
            }
            auto metrics_path = fs::path(rep_run) / "metrics.csv";
            if (fs::exists(metrics_path)) {
                std::ifstream in(metrics_path);
                std::cout << in.rdbuf();
            }
            if (!fs::exists(log_path) && !fs::exists(metrics_path)) {
                std::cerr << "no training_log.csv or metrics.csv under " << rep_run << "\n";
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
