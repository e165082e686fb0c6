#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "awda/align.hpp"
#include "awda/core.hpp"
#include "awda/detector.hpp"
#include "awda/params.hpp"

namespace awda::train {

// ---------------------------------------------------------------------------
// configuration (human-readable key = value file, '#' comments)

struct TrainConfig {
    std::uint64_t seed = 42;
    long iterations = 900;
    int batch_source = 2;
    int batch_target = 2;  // batches keep a 1:1 source/target ratio by default
    int n_train_scenes = 400;
    int n_eval_scenes = 128;

    int grid = 6;
    int n_queries = 9;
    int feat_dim = 32;
    int hidden = 96;
    int disc_hidden = 64;

    double lr = 1e-2;
    double momentum = 0.9;

    double alpha_start = 0.95;
    double alpha_end = 0.99;
    double beta = 0.9;
    double gamma = 0.5;
    double lambda_dom = 0.1;
    double lambda_con = 0.1;
    double lambda_box = 2.0;
    double tau = 0.07;
    double ramp_fraction = 0.2;
    double nms_threshold = 0.2;

    bool self_training = true;
    bool qddm = true;
    bool pseudo_on_empty = true;   // supervise target frames even when no pseudo label survived
    bool use_bev_iou_cost = false; // footprint IoU instead of full 3D IoU in the matching cost

    std::string target_domain = "night";  // night | rain | haze | mixed

    // Full-scale optimizer settings, recorded for provenance; the toy trainer
    // uses SGD and ignores them.
    double adamw_lr = 2e-4;
    double adamw_weight_decay = 0.01;

    void validate() const;
    std::string serialize() const;

    // Applies one "key = value" line; throws naming the key when unknown.
    void apply(const std::string& key, const std::string& value);
};

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

// ---------------------------------------------------------------------------
// schedules and EMA

struct ScheduleParams {
    double lambda_dom_max = 0.1;
    double lambda_con_max = 0.1;
    double alpha_start = 0.95;
    double alpha_end = 0.99;
    double ramp_fraction = 0.2;
};

struct ScheduleValues {
    double lambda_dom, lambda_con, alpha;
};

// Linear ramp of both lambdas from 0 to their maxima over the first
// ramp_fraction of iterations; alpha warms up over the same window.
ScheduleValues schedules(long t, long total, const ScheduleParams& p = {});

// teacher <- alpha * teacher + (1 - alpha) * student, elementwise, matched by
// name over the teacher's entries. alpha in [0,1]; shape mismatch rejected.
void ema_update(ParamBag& teacher, const ParamBag& student, double alpha);

// ---------------------------------------------------------------------------
// detection loss

struct DetectionLossBreakdown {
    double cls = 0, l1 = 0, iou = 0;
    std::vector<std::pair<int, int>> pairs;  // (query, label)
};

// Hungarian assignment on the matching cost; matched queries incur
// cross-entropy to their label class plus L1 on (x,y,z,w,h,l,sin,cos) plus
// (1 - iou_3d); unmatched queries incur cross-entropy to background. Empty
// labels reduce to pure background classification. boxraw holds raw head
// outputs; the decode mapping is built into the graph.
ad::Var detection_loss(ad::Tape& tape, ad::Var logits, ad::Var boxraw,
                       const std::vector<GtBox>& labels, int n_categories, double lambda_box,
                       const BoxDecode& decode = {}, bool use_bev_iou = false,
                       DetectionLossBreakdown* breakdown = nullptr);

// ---------------------------------------------------------------------------
// toy scenes

struct ToySceneParams {
    int grid = 6;
    double field = 20.0;  // half-extent of the BEV square, meters
    int min_objects = 1;
    int max_objects = 5;
    std::array<double, 3> category_freq = {0.70, 0.25, 0.05};
    double min_separation = 3.0;

    double source_noise = 0.02;
    double night_offset = 0.25;  // additive shift
    double night_noise = 0.08;
    double haze_gain = 0.45;     // multiplicative attenuation
    double haze_noise = 0.02;
    double rain_occlusion = 0.20;  // fraction of cells zeroed
    double rain_spike = 0.05;      // fraction of cells spiked to 1
    double rain_noise = 0.02;

    int descriptor_dim() const { return grid * grid * 3; }
};

struct ToyScene {
    std::uint64_t scene_id = 0;
    Domain domain = Domain::Source;
    std::vector<GtBox> objects;
    std::vector<double> descriptor;
};

// Category-conditioned box extents (l, w, h) used by scene generation.
std::array<double, 3> category_extents(int category);

std::vector<double> rasterize_objects(const std::vector<GtBox>& objects, const ToySceneParams& p);

// Deterministic per (params, domain, rng state): additive offset + noise for
// night, attenuation for haze, sparse spike occlusion for rain.
std::vector<double> corrupt_descriptor(const std::vector<double>& clean, Domain domain,
                                       const ToySceneParams& p, RngStream& rng);

// Scenes with 1-5 objects from 3 long-tail categories (70/25/5).
// Deterministic from (seed, scene id, domain).
std::vector<ToyScene> make_toy_dataset(int n_scenes, Domain domain, std::uint64_t seed,
                                       const ToySceneParams& p = {});

// ---------------------------------------------------------------------------
// trainer

struct StepMetrics {
    long iteration = 0;
    double lambda_dom = 0, lambda_con = 0, alpha = 0;
    double loss_gt = 0, loss_pseudo = 0;
    double loss_dom = 0, loss_con = 0;  // raw values, before lambda weighting
    double weighted_dom = 0, weighted_con = 0;
    double loss_total = 0;
    int n_pseudo = 0;
    std::vector<int> src_counts, tgt_counts;   // n_k per category
    std::vector<long long> memory_counts;      // S_k
    int contrast_skipped = 0;
    int zero_norm_skipped = 0;
    bool teacher_untouched = true;  // bitwise check before vs after backward
    bool ema_in_hull = true;
};

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows,
                       int n_categories);

class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    // One optimization step on explicit frame batches. Scenes must outlive
    // the call. Throws (after an optional state dump) on non-finite loss.
    StepMetrics train_step(const std::vector<const ToyScene*>& src_frames,
                           const std::vector<const ToyScene*>& tgt_frames);

    // One step with internally selected batches.
    StepMetrics step();

    long iteration() const { return iteration_; }
    const TrainConfig& config() const { return cfg_; }
    const DetectorConfig& detector_config() const { return det_cfg_; }
    const ParamBag& student() const { return student_; }
    const ParamBag& teacher() const { return teacher_; }
    ParamBag& student_mut() { return student_; }
    const align::GlobalClassMemory& memory() const { return memory_; }

    const std::vector<ToyScene>& source_train() const { return src_train_; }
    const std::vector<ToyScene>& target_train(int which = 0) const { return tgt_train_[which]; }

    // Final-iteration pseudo labels of the last train_step, for audit output.
    const std::vector<GtBox>& last_pseudo_labels() const { return last_pseudo_; }

    // Directory for emergency state dumps on non-finite loss; empty disables.
    void set_dump_dir(const std::string& dir) { dump_dir_ = dir; }

private:
    TrainConfig cfg_;
    DetectorConfig det_cfg_;
    ToySceneParams scene_params_;
    ParamBag student_;  // detector + discriminator
    ParamBag teacher_;  // detector only
    SgdMomentum opt_;
    align::GlobalClassMemory memory_;
    long iteration_ = 0;
    RngStream batch_rng_;
    std::vector<ToyScene> src_train_;
    std::vector<std::vector<ToyScene>> tgt_train_;
    std::vector<GtBox> last_pseudo_;
    std::string dump_dir_;
};

// ---------------------------------------------------------------------------
// evaluation glue

struct SceneEvalData {
    std::vector<std::vector<Detection>> pred_frames;
    std::vector<std::vector<GtBox>> gt_frames;
    std::vector<QueryBatch> query_batches;
};

SceneEvalData predict_scenes(const ParamBag& params, const DetectorConfig& cfg,
                             const std::vector<ToyScene>& scenes, double nms_threshold);

struct ExperimentResult {
    std::vector<StepMetrics> metrics;
    double source_map = 0, target_map = 0;
    double source_mate = 0, target_mate = 0;
    std::string source_eval_json, target_eval_json;
};

// Full toy run: train, then evaluate the student on held-out source and
// target scenes.
ExperimentResult run_experiment(const TrainConfig& cfg);

}  // namespace awda::train
