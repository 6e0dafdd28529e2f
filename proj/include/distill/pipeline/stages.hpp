#pragma once

// Pipeline stages. Each reads upstream artifacts under the run directory and
// writes only its own subdirectory:
//   data/      scenes + manifest
//   teacher/   <sample>/teacher.pfm
//   conf/      conf.ckpt, loss.tsv, <sample>/conf.pfm
//   pseudo/    <tau>/<sample>/{pgt.pfm,mask.pgm}, <tau>/stats.tsv
//   student/   student.ckpt, loss.tsv, <sample>/pred.pfm (validation samples)
//   eval/      metrics.tsv
//   sweep/     sweep.tsv
//   transfer/  iou.tsv

#include <cmath>
#include <iostream>

#include "distill/eval/metrics.hpp"
#include "distill/numerics/checkpoint.hpp"
#include "distill/pipeline/config.hpp"
#include "distill/pseudogt/pseudogt.hpp"
#include "distill/scenegen/dataset.hpp"
#include "distill/teacher/depth.hpp"

namespace distill::pipeline {

namespace fs = std::filesystem;

struct Sample {
    scene::ManifestEntry entry;
    scene::StereoSample data;
};

inline void write_text(const fs::path& path, const std::string& text) {
    scene::ensure_directory(path.parent_path());
    distill::detail::write_file_bytes(path, text);
}

inline void require_file(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw MissingInput(path.string());
}

/// Removes and recreates a stage directory so reruns never mix outputs.
inline fs::path fresh_stage_dir(const ExperimentConfig& cfg, const std::string& stage) {
    const fs::path dir = cfg.run_dir() / stage;
    std::error_code ec;
    fs::remove_all(dir, ec);
    if (ec) throw IoError("cannot clear " + dir.string() + ": " + ec.message());
    scene::ensure_directory(dir);
    return dir;
}

inline void write_snapshot(const ExperimentConfig& cfg) {
    write_text(cfg.run_dir() / "config.snapshot.toml", to_toml(cfg));
}

inline std::vector<Sample> load_samples(const ExperimentConfig& cfg) {
    const fs::path root = cfg.run_dir() / "data";
    const auto entries = scene::read_manifest(root);
    std::vector<Sample> out(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const fs::path dir = root / entries[i].dir;
        require_file(dir / "left.ppm");
        out[i] = {entries[i], scene::read_sample(dir)};
        if (out[i].data.left.width != cfg.scene.width || out[i].data.left.height != cfg.scene.height) {
            throw InvalidArgument("sample " + dir.string() + " does not match scene.width/height");
        }
    }
    return out;
}

inline std::vector<DisparityMap> load_teacher(const ExperimentConfig& cfg, const std::vector<Sample>& samples) {
    std::vector<DisparityMap> out;
    for (const auto& s : samples) {
        const fs::path p = cfg.run_dir() / "teacher" / s.entry.dir / "teacher.pfm";
        require_file(p);
        out.push_back(DisparityMap::from_float_map(read_pfm(p)));
    }
    return out;
}

inline std::vector<confidence::ConfidenceMap> load_confidence(const ExperimentConfig& cfg,
                                                              const std::vector<Sample>& samples) {
    std::vector<confidence::ConfidenceMap> out;
    for (const auto& s : samples) {
        const fs::path p = cfg.run_dir() / "conf" / s.entry.dir / "conf.pfm";
        require_file(p);
        out.push_back(read_pfm(p));
    }
    return out;
}

// ---------------------------------------------------------------------------

inline void gen_data(const ExperimentConfig& cfg) {
    const fs::path dir = fresh_stage_dir(cfg, "data");
    scene::generate_dataset(cfg.scene, cfg.num_scenes, cfg.scene.seed, dir);
}

inline DisparityMap teacher_predict(const ExperimentConfig& cfg, const Image& left, const Image& right) {
    return cfg.use_ensemble ? teacher::ensemble_predict(left, right, cfg.matcher, cfg.ensemble)
                            : teacher::compute_disparity(left, right, cfg.matcher);
}

inline void run_teacher(const ExperimentConfig& cfg) {
    const auto samples = load_samples(cfg);
    const fs::path dir = fresh_stage_dir(cfg, "teacher");
    parallel_for(samples.size(), [&](std::size_t i) {
        const auto& s = samples[i];
        const DisparityMap d = teacher_predict(cfg, s.data.left, s.data.right);
        scene::ensure_directory(dir / s.entry.dir);
        write_pfm(dir / s.entry.dir / "teacher.pfm", d.to_float_map());
    });
}

inline void train_conf(const ExperimentConfig& cfg) {
    const auto samples = load_samples(cfg);
    const auto teacher = load_teacher(cfg, samples);
    std::vector<confidence::ConfidenceSample> train;
    for (std::size_t i = 0; i < samples.size() && train.size() < cfg.conf_train_scenes; ++i) {
        if (samples[i].entry.validation) continue;
        train.push_back({teacher[i], confidence::gt_confidence(teacher[i], samples[i].data.gt_disparity)});
    }
    if (train.empty()) throw InvalidArgument("train-conf: no training-split samples");
    const fs::path dir = fresh_stage_dir(cfg, "conf");
    auto result = confidence::train_confidence_net(train, cfg.conf);
    nn::save_checkpoint(dir / "conf.ckpt", result.net.state());
    std::string loss = "epoch\tloss\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "0\t%.9f\n", result.initial_loss);
    loss += buf;
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu\t%.9f\n", e + 1, result.epoch_loss[e]);
        loss += buf;
    }
    write_text(dir / "loss.tsv", loss);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        scene::ensure_directory(dir / samples[i].entry.dir);
        write_pfm(dir / samples[i].entry.dir / "conf.pfm",
                  confidence::predict_confidence_map(result.net, teacher[i], cfg.conf));
    }
}

inline std::vector<pseudogt::PseudoLabel> build_labels(const std::vector<DisparityMap>& teacher,
                                                       const std::vector<confidence::ConfidenceMap>& conf,
                                                       double tau) {
    std::vector<pseudogt::PseudoLabel> out;
    for (std::size_t i = 0; i < teacher.size(); ++i) out.push_back(pseudogt::apply_threshold(teacher[i], conf[i], tau));
    return out;
}

/// Density over all pixels of all samples, and kept-pixel MAE against ground truth.
struct LabelStats {
    double density = 0.0;
    double kept_mae = 0.0;
};

inline LabelStats label_stats(const std::vector<pseudogt::PseudoLabel>& labels, const std::vector<Sample>& samples) {
    std::size_t kept = 0, total = 0;
    pseudogt::ErrorSum err;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        kept += labels[i].kept();
        total += labels[i].mask.size();
        const auto e = pseudogt::kept_error(labels[i], samples[i].data.gt_disparity);
        err.total += e.total;
        err.count += e.count;
    }
    return {total ? static_cast<double>(kept) / static_cast<double>(total) : 0.0, err.mean()};
}

inline void make_pgt(const ExperimentConfig& cfg) {
    const auto samples = load_samples(cfg);
    const auto teacher = load_teacher(cfg, samples);
    const auto conf = load_confidence(cfg, samples);
    const auto labels = build_labels(teacher, conf, cfg.tau);
    const fs::path dir = fresh_stage_dir(cfg, "pseudo") / pseudogt::tau_dir_name(cfg.tau);
    std::string stats = "sample\tdensity\tkept_mae\n";
    char buf[96];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        pseudogt::write_pseudo_label(dir / samples[i].entry.dir, labels[i]);
        std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\n", labels[i].density,
                      pseudogt::kept_error(labels[i], samples[i].data.gt_disparity).mean());
        stats += samples[i].entry.dir + buf;
    }
    write_text(dir / "stats.tsv", stats);
}

struct StudentRun {
    student::TrainResult result;
    eval::MetricsReport report;
};

inline FloatMap gt_depth(const Sample& s, const scene::CameraModel& cam) {
    return teacher::disparity_to_depth(s.data.gt_disparity, cam);
}

/// Pooled metrics of `net` over the validation split.
inline eval::MetricsReport evaluate_split(nn::Network& net, const ExperimentConfig& cfg,
                                          const std::vector<Sample>& samples) {
    std::vector<eval::MetricsReport> reports;
    for (const auto& s : samples) {
        if (!s.entry.validation) continue;
        const FloatMap pred = student::predict_depth(net, s.data.left, cfg.student, cfg.camera);
        reports.push_back(eval::compute_metrics(pred, gt_depth(s, cfg.camera), cfg.camera.depth_cap));
    }
    if (reports.empty()) throw InvalidArgument("no validation samples");
    return eval::pool_reports(reports);
}

/// Trains a fresh student on the training split (validation split for model
/// selection) and evaluates it on the validation split.
inline StudentRun train_and_evaluate(const ExperimentConfig& cfg, const std::vector<Sample>& samples,
                                     const std::vector<pseudogt::PseudoLabel>& labels) {
    std::vector<student::TrainSample> train, val;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        (samples[i].entry.validation ? val : train).push_back({&samples[i].data.left, &labels[i]});
    }
    StudentRun run{student::train_student(train, val, cfg.student), {}};
    run.report = evaluate_split(run.result.net, cfg, samples);
    return run;
}

inline void train_student_stage(const ExperimentConfig& cfg) {
    const auto samples = load_samples(cfg);
    const fs::path pdir = cfg.run_dir() / "pseudo" / pseudogt::tau_dir_name(cfg.tau);
    std::vector<pseudogt::PseudoLabel> labels;
    for (const auto& s : samples) {
        require_file(pdir / s.entry.dir / "pgt.pfm");
        labels.push_back(pseudogt::read_pseudo_label(pdir / s.entry.dir, cfg.tau));
    }
    std::vector<student::TrainSample> train, val;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        (samples[i].entry.validation ? val : train).push_back({&samples[i].data.left, &labels[i]});
    }
    const fs::path dir = fresh_stage_dir(cfg, "student");
    auto result = student::train_student(train, val, cfg.student);
    nn::save_checkpoint(dir / "student.ckpt", result.net.state());
    write_text(dir / "loss.tsv", student::loss_tsv(result.history));
    for (const auto& s : samples) {
        if (!s.entry.validation) continue;
        scene::ensure_directory(dir / s.entry.dir);
        write_pfm(dir / s.entry.dir / "pred.pfm", student::predict_depth(result.net, s.data.left, cfg.student, cfg.camera));
    }
}

inline nn::Network load_student(const ExperimentConfig& cfg) {
    const fs::path ckpt = cfg.run_dir() / "student" / "student.ckpt";
    require_file(ckpt);
    nn::Network net = student::build_student(cfg.student);
    net.load_state(nn::load_checkpoint(ckpt));
    return net;
}

inline void evaluate(const ExperimentConfig& cfg) {
    nn::Network net = load_student(cfg);
    const auto samples = load_samples(cfg);
    const auto report = evaluate_split(net, cfg, samples);
    const fs::path dir = fresh_stage_dir(cfg, "eval");
    write_text(dir / "metrics.tsv", eval::metrics_tsv_header() + eval::metrics_tsv_row("student", report));
}

// ---------------------------------------------------------------------------

struct SweepRow {
    double tau = 0.0;
    double density = 0.0;
    double kept_mae = 0.0;
    double student_rmse = 0.0;  // NaN when every mask is empty
};

inline std::string sweep_tsv(const std::vector<SweepRow>& rows) {
    std::string out = "tau\tdensity\tkept_mae\tstudent_rmse\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f\t%.6f\n", r.tau, r.density, r.kept_mae, r.student_rmse);
        out += buf;
    }
    return out;
}

/// One student per threshold, same seed and budget; arms run concurrently.
inline std::vector<SweepRow> sweep_rows(const ExperimentConfig& cfg, const std::vector<Sample>& samples,
                                        const std::vector<DisparityMap>& teacher,
                                        const std::vector<confidence::ConfidenceMap>& conf,
                                        const std::vector<double>& taus) {
    for (std::size_t i = 1; i < taus.size(); ++i) {
        if (!(taus[i] > taus[i - 1])) throw InvalidArgument("sweep: taus must be strictly ascending");
    }
    std::vector<SweepRow> rows(taus.size());
    parallel_for(taus.size(), [&](std::size_t k) {
        const auto labels = build_labels(teacher, conf, taus[k]);
        const LabelStats st = label_stats(labels, samples);
        rows[k] = {taus[k], st.density, st.kept_mae, std::nan("")};
        bool any_train = false;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            any_train = any_train || (!samples[i].entry.validation && labels[i].kept() > 0);
        }
        if (!any_train) {
            std::cerr << "warning: tau " << taus[k] << " leaves every training mask empty; student skipped\n";
            return;
        }
        rows[k].student_rmse = train_and_evaluate(cfg, samples, labels).report.rmse_lin;
    });
    return rows;
}

inline void sweep_tau(const ExperimentConfig& cfg) {
    const auto samples = load_samples(cfg);
    const auto teacher = load_teacher(cfg, samples);
    const auto conf = load_confidence(cfg, samples);
    const auto rows = sweep_rows(cfg, samples, teacher, conf, cfg.sweep_taus);
    const fs::path dir = fresh_stage_dir(cfg, "sweep");
    write_text(dir / "sweep.tsv", sweep_tsv(rows));
}

// ---------------------------------------------------------------------------

struct TransferData {
    std::vector<scene::StereoSample> scenes;
    std::vector<student::SegSample> train, eval;
};

/// In-memory segmentation suite: scenes with `transfer.layers` layers, so
/// labels are background plus objects. A small labelled training set and a
/// larger held-out set, drawn from one seed stream.
inline TransferData transfer_data(const ExperimentConfig& cfg) {
    TransferData d;
    scene::SceneSpec spec = cfg.scene;
    spec.num_layers = cfg.transfer_layers;
    const std::size_t total = cfg.transfer_scenes + cfg.transfer_eval_scenes;
    for (std::size_t i = 0; i < total; ++i) {
        spec.seed = derive_seed(derive_seed(cfg.seed, 9), i);
        d.scenes.push_back(scene::generate_scene(spec));
    }
    for (std::size_t i = 0; i < total; ++i) {
        const student::SegSample s{&d.scenes[i].left, &d.scenes[i].class_labels};
        (i < cfg.transfer_scenes ? d.train : d.eval).push_back(s);
    }
    return d;
}

struct TransferOutcome {
    double scratch_iou = 0.0;
    double pretrained_iou = 0.0;
};

inline TransferOutcome run_transfer(const ExperimentConfig& cfg, const std::vector<nn::NamedTensor>& pretrained) {
    const TransferData d = transfer_data(cfg);
    const auto scratch = student::transfer_train_segmentation(d.train, d.eval, student::SegInit::Scratch, {},
                                                              cfg.student, cfg.seg);
    const auto pre = student::transfer_train_segmentation(d.train, d.eval, student::SegInit::DepthPretrained,
                                                          pretrained, cfg.student, cfg.seg);
    return {scratch.mean_iou, pre.mean_iou};
}

inline void transfer_seg(const ExperimentConfig& cfg) {
    const fs::path ckpt = cfg.run_dir() / "student" / "student.ckpt";
    require_file(ckpt);
    const auto outcome = run_transfer(cfg, nn::load_checkpoint(ckpt));
    const fs::path dir = fresh_stage_dir(cfg, "transfer");
    char buf[128];
    std::snprintf(buf, sizeof buf, "init\tmean_iou\nscratch\t%.6f\npretrained\t%.6f\n", outcome.scratch_iou,
                  outcome.pretrained_iou);
    write_text(dir / "iou.tsv", buf);
}

inline void run_all(const ExperimentConfig& cfg) {
    gen_data(cfg);
    run_teacher(cfg);
    train_conf(cfg);
    make_pgt(cfg);
    train_student_stage(cfg);
    evaluate(cfg);
    sweep_tau(cfg);
    transfer_seg(cfg);
}

}  // namespace distill::pipeline
