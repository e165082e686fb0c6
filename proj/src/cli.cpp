#include "awda/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "awda/core.hpp"
#include "awda/gradsuite.hpp"
#include "awda/manifest.hpp"
#include "awda/match.hpp"
#include "awda/metrics.hpp"
#include "awda/train.hpp"
#include "awda/weather.hpp"

namespace fs = std::filesystem;

namespace awda::cli {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// <sample>__<view>.png shares one parameter draw per sample.
std::string sample_key(const std::string& stem) {
    std::size_t pos = stem.find("__");
    return pos == std::string::npos ? stem : stem.substr(0, pos);
}

std::string find_depth_file(const std::string& depth_dir, const std::string& stem) {
    for (const char* ext : {".png", ".depth"}) {
        fs::path p = fs::path(depth_dir) / (stem + ext);
        if (fs::exists(p)) return p.string();
    }
    return "";
}

}  // namespace

int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err) {
    auto t0 = std::chrono::steady_clock::now();
    Domain domain = domain_from_name(opt.domain);
    if (!is_target(domain)) throw std::invalid_argument("synth: domain must be night, rain or haze");
    if (!fs::is_directory(opt.input_dir))
        throw std::invalid_argument("synth: input dir does not exist: " + opt.input_dir);
    fs::create_directories(opt.output_dir);

    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(opt.input_dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() == ".png") names.push_back(entry.path().filename().string());
    }
    std::sort(names.begin(), names.end());

    RunManifest manifest;
    manifest.command = "synth " + opt.domain;
    manifest.seed = opt.seed;
    int failures = 0;

    for (const std::string& name : names) {
        std::string stem = fs::path(name).stem().string();
        std::string key = sample_key(stem);
        std::string in_path = (fs::path(opt.input_dir) / name).string();
        std::string out_path = (fs::path(opt.output_dir) / name).string();
        std::string sidecar = out_path + ".json";
        manifest.inputs.push_back(in_path);
        try {
            // One parameter draw per sample key; the noise layer gets its own
            // per-image stream so views stay distinct but reproducible.
            RngStream param_rng = RngStream::derive(opt.seed, hash_name(key));
            weather::ParamsVariant params = weather::sample_weather_params(domain, param_rng);
            ImageRGB img = read_png_rgb(in_path);
            ImageRGB result;
            if (domain == Domain::TargetHaze) {
                std::string depth_path = find_depth_file(opt.depth_dir, stem);
                if (depth_path.empty())
                    throw std::runtime_error("no depth map for " + name + " in " + opt.depth_dir);
                DepthMap depth = read_depth_any(depth_path);
                if (depth.height != img.height || depth.width != img.width)
                    throw std::runtime_error("depth dimensions do not match image: " + name);
                const auto& hp = std::get<weather::HazeParams>(params);
                result = weather::apply_haze(img, weather::transmission_from_depth(depth, hp.beta),
                                             hp.light);
            } else if (domain == Domain::TargetRain) {
                RngStream img_rng = RngStream::derive(opt.seed, hash_name(stem) ^ 0x5a1db017ULL);
                result = weather::synth_rain(img, std::get<weather::RainParams>(params), img_rng);
            } else {
                result = weather::apply_night(img, std::get<weather::NightParams>(params));
            }
            write_png_rgb(out_path, result);
            std::ofstream side(sidecar);
            side << weather::params_to_json(params, opt.seed, in_path) << "\n";
            side.close();
            manifest.add_output(out_path);
            manifest.add_output(sidecar);
        } catch (const std::exception& e) {
            err << "synth: " << name << ": " << e.what() << "\n";
            ++failures;
        }
    }

    manifest.wall_clock_sec = seconds_since(t0);
    manifest.write(opt.output_dir);
    out << "synth: " << (names.size() - failures) << "/" << names.size() << " images -> "
        << opt.output_dir << "\n";
    return failures == 0 ? kOk : kRuntimeError;
}

namespace {

void save_trainer_checkpoint(const std::string& path, const ParamBag& params,
                             const align::GlobalClassMemory& memory, long iteration) {
    ParamBag full;
    for (const auto& [name, t] : params.items) full.add(name, t);
    nlohmann::json meta;
    meta["iteration"] = iteration;
    meta["memory_counts"] = memory.counts;
    for (int k = 0; k < memory.n_categories; ++k) {
        if (!memory.has(k)) continue;
        full.add("memory/proto_" + std::to_string(k), ad::Tensor::row(memory.prototypes[k]));
    }
    save_checkpoint(path, full, meta.dump());
}

}  // namespace

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
    (void)err;
    auto t0 = std::chrono::steady_clock::now();
    train::TrainConfig cfg;
    if (!opt.config_path.empty()) cfg = train::load_config(opt.config_path);
    for (const std::string& ov : opt.overrides) {
        std::size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("train: override must be key=value: " + ov);
        std::string key = ov.substr(0, eq), value = ov.substr(eq + 1);
        cfg.apply(key, value);
    }
    if (opt.has_seed_override) cfg.seed = opt.seed;
    cfg.validate();
    fs::create_directories(opt.output_dir);

    train::Trainer trainer(cfg);
    trainer.set_dump_dir(opt.output_dir);
    std::vector<train::StepMetrics> metrics;
    metrics.reserve(cfg.iterations);
    for (long t = 0; t < cfg.iterations; ++t) metrics.push_back(trainer.step());

    std::string metrics_path = opt.output_dir + "/metrics.csv";
    train::write_metrics_csv(metrics_path, metrics, 3);

    std::string student_path = opt.output_dir + "/student.ckpt";
    std::string teacher_path = opt.output_dir + "/teacher.ckpt";
    save_trainer_checkpoint(student_path, trainer.student(), trainer.memory(), cfg.iterations);
    save_trainer_checkpoint(teacher_path, trainer.teacher(), trainer.memory(), cfg.iterations);

    std::string pseudo_path;
    if (cfg.self_training) {
        pseudo_path = opt.output_dir + "/pseudo_labels.jsonl";
        Domain d = cfg.target_domain == "mixed" ? Domain::TargetNight
                                                : domain_from_name(cfg.target_domain);
        match::write_pseudo_labels(pseudo_path, trainer.last_pseudo_labels(), 3, d,
                                   cfg.iterations - 1, cfg.beta);
    }

    // Held-out evaluation per domain + feature export.
    train::ToySceneParams sp;
    sp.grid = cfg.grid;
    std::uint64_t eval_seed = RngStream::derive(cfg.seed, hash_name("eval-data")).next_u64();
    Domain eval_target = cfg.target_domain == "mixed" ? Domain::TargetNight
                                                      : domain_from_name(cfg.target_domain);
    auto src_eval = train::make_toy_dataset(cfg.n_eval_scenes, Domain::Source, eval_seed, sp);
    auto tgt_eval = train::make_toy_dataset(cfg.n_eval_scenes, eval_target, eval_seed, sp);
    auto src_pred = train::predict_scenes(trainer.student(), trainer.detector_config(), src_eval,
                                          cfg.nms_threshold);
    auto tgt_pred = train::predict_scenes(trainer.student(), trainer.detector_config(), tgt_eval,
                                          cfg.nms_threshold);
    auto src_res = metrics::evaluate({src_pred.pred_frames, src_pred.gt_frames, 3});
    auto tgt_res = metrics::evaluate({tgt_pred.pred_frames, tgt_pred.gt_frames, 3});

    std::string eval_src_path = opt.output_dir + "/eval_source.json";
    std::string eval_tgt_path = opt.output_dir + "/eval_target.json";
    {
        std::ofstream f(eval_src_path);
        f << src_res.to_json() << "\n";
    }
    {
        std::ofstream f(eval_tgt_path);
        f << tgt_res.to_json() << "\n";
    }
    std::string features_path = opt.output_dir + "/features.csv";
    std::vector<QueryBatch> feats = src_pred.query_batches;
    feats.insert(feats.end(), tgt_pred.query_batches.begin(), tgt_pred.query_batches.end());
    metrics::export_features(features_path, feats);

    RunManifest manifest;
    manifest.command = "train";
    manifest.config_text = cfg.serialize();
    manifest.seed = cfg.seed;
    if (!opt.config_path.empty()) manifest.inputs.push_back(opt.config_path);
    manifest.add_output(metrics_path);
    manifest.add_output(student_path);
    manifest.add_output(teacher_path);
    if (!pseudo_path.empty()) manifest.add_output(pseudo_path);
    manifest.add_output(eval_src_path);
    manifest.add_output(eval_tgt_path);
    manifest.add_output(features_path);
    manifest.wall_clock_sec = seconds_since(t0);
    manifest.write(opt.output_dir);

    out << "train: source mAP=" << src_res.mean_ap << " mATE=" << src_res.mate
        << " | target(" << domain_name(eval_target) << ") mAP=" << tgt_res.mean_ap
        << " mATE=" << tgt_res.mate << "\n";
    return kOk;
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    (void)err;
    auto preds = read_jsonl(opt.predictions_path, "prediction");
    auto labels = read_jsonl(opt.labels_path, "label");

    int n_categories = 0;
    for (const auto& r : preds) n_categories = std::max(n_categories, (int)r.probs.size());
    for (const auto& r : labels) n_categories = std::max(n_categories, (int)r.probs.size());
    if (n_categories == 0) n_categories = 1;

    std::map<std::int64_t, std::pair<std::vector<Detection>, std::vector<GtBox>>> frames;
    for (const auto& r : preds) frames[r.frame].first.push_back(Detection(r.box, r.probs));
    for (const auto& r : labels) {
        int cat = static_cast<int>(std::max_element(r.probs.begin(), r.probs.end()) - r.probs.begin());
        frames[r.frame].second.push_back(GtBox{r.box, cat});
    }

    metrics::EvalInput input;
    input.n_categories = n_categories;
    for (auto& [frame, pair] : frames) {
        input.pred_frames.push_back(std::move(pair.first));
        input.gt_frames.push_back(std::move(pair.second));
    }
    metrics::EvalResult res = metrics::evaluate(input);
    out << res.to_json() << "\n";
    if (!opt.output_path.empty()) {
        std::ofstream f(opt.output_path);
        if (!f) throw std::runtime_error("cannot write " + opt.output_path);
        f << res.to_json() << "\n";
    }
    return kOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
    GradCheckReport report = run_gradcheck_suite(seed);
    print_gradcheck_report(out, report);
    return report.all_pass ? kOk : kValidationError;
}

}  // namespace awda::cli
