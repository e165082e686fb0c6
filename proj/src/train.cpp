#include "awda/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "awda/geom.hpp"
#include "awda/geom_overlap.hpp"
#include "awda/match.hpp"
#include "awda/metrics.hpp"

namespace awda::train {

// ---------------------------------------------------------------------------
// configuration

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean for key \"" + key + "\": " + v);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw std::invalid_argument("config: bad number for key \"" + key + "\": " + v);
    }
}

long parse_long(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw std::invalid_argument("config: bad integer for key \"" + key + "\": " + v);
    }
}

}  // namespace

void TrainConfig::apply(const std::string& key, const std::string& value) {
    if (key == "seed") seed = static_cast<std::uint64_t>(parse_long(key, value));
    else if (key == "iterations") iterations = parse_long(key, value);
    else if (key == "batch_source") batch_source = static_cast<int>(parse_long(key, value));
    else if (key == "batch_target") batch_target = static_cast<int>(parse_long(key, value));
    else if (key == "n_train_scenes") n_train_scenes = static_cast<int>(parse_long(key, value));
    else if (key == "n_eval_scenes") n_eval_scenes = static_cast<int>(parse_long(key, value));
    else if (key == "grid") grid = static_cast<int>(parse_long(key, value));
    else if (key == "n_queries") n_queries = static_cast<int>(parse_long(key, value));
    else if (key == "feat_dim") feat_dim = static_cast<int>(parse_long(key, value));
    else if (key == "hidden") hidden = static_cast<int>(parse_long(key, value));
    else if (key == "disc_hidden") disc_hidden = static_cast<int>(parse_long(key, value));
    else if (key == "lr") lr = parse_double(key, value);
    else if (key == "momentum") momentum = parse_double(key, value);
    else if (key == "alpha_start") alpha_start = parse_double(key, value);
    else if (key == "alpha_end") alpha_end = parse_double(key, value);
    else if (key == "beta") beta = parse_double(key, value);
    else if (key == "gamma") gamma = parse_double(key, value);
    else if (key == "lambda_dom") lambda_dom = parse_double(key, value);
    else if (key == "lambda_con") lambda_con = parse_double(key, value);
    else if (key == "lambda_box") lambda_box = parse_double(key, value);
    else if (key == "tau") tau = parse_double(key, value);
    else if (key == "ramp_fraction") ramp_fraction = parse_double(key, value);
    else if (key == "nms_threshold") nms_threshold = parse_double(key, value);
    else if (key == "self_training") self_training = parse_bool(key, value);
    else if (key == "qddm") qddm = parse_bool(key, value);
    else if (key == "pseudo_on_empty") pseudo_on_empty = parse_bool(key, value);
    else if (key == "use_bev_iou_cost") use_bev_iou_cost = parse_bool(key, value);
    else if (key == "target_domain") target_domain = value;
    else if (key == "adamw_lr") adamw_lr = parse_double(key, value);
    else if (key == "adamw_weight_decay") adamw_weight_decay = parse_double(key, value);
    else throw std::invalid_argument("config: unknown key \"" + key + "\"");
}

void TrainConfig::validate() const {
    require(iterations > 0, "config: iterations must be > 0");
    require(batch_source > 0 && batch_target > 0, "config: batch sizes must be > 0");
    require(n_train_scenes > 0 && n_eval_scenes > 0, "config: scene counts must be > 0");
    require(grid >= 2 && n_queries > 0 && feat_dim > 0 && hidden > 0 && disc_hidden > 0,
            "config: bad model dimensions");
    require(lr > 0 && momentum >= 0 && momentum < 1, "config: bad optimizer settings");
    require(alpha_start >= 0 && alpha_start <= 1 && alpha_end >= 0 && alpha_end <= 1,
            "config: alpha endpoints must be in [0,1]");
    require(beta >= 0 && beta <= 1, "config: beta must be in [0,1]");
    require(gamma >= 0 && gamma <= 1, "config: gamma must be in [0,1]");
    require(lambda_dom >= 0 && lambda_con >= 0 && lambda_box >= 0, "config: lambdas must be >= 0");
    require(tau > 0, "config: tau must be > 0");
    require(ramp_fraction >= 0 && ramp_fraction <= 1, "config: ramp_fraction must be in [0,1]");
    require(nms_threshold >= 0 && nms_threshold <= 1, "config: nms_threshold must be in [0,1]");
    if (target_domain != "mixed") domain_from_name(target_domain);  // throws on bad name
    require(target_domain != "source", "config: target_domain cannot be source");
}

std::string TrainConfig::serialize() const {
    std::ostringstream s;
    s.precision(17);
    s << "seed = " << seed << "\n";
    s << "iterations = " << iterations << "\n";
    s << "batch_source = " << batch_source << "\n";
    s << "batch_target = " << batch_target << "\n";
    s << "n_train_scenes = " << n_train_scenes << "\n";
    s << "n_eval_scenes = " << n_eval_scenes << "\n";
    s << "grid = " << grid << "\n";
    s << "n_queries = " << n_queries << "\n";
    s << "feat_dim = " << feat_dim << "\n";
    s << "hidden = " << hidden << "\n";
    s << "disc_hidden = " << disc_hidden << "\n";
    s << "lr = " << lr << "\n";
    s << "momentum = " << momentum << "\n";
    s << "alpha_start = " << alpha_start << "\n";
    s << "alpha_end = " << alpha_end << "\n";
    s << "beta = " << beta << "\n";
    s << "gamma = " << gamma << "\n";
    s << "lambda_dom = " << lambda_dom << "\n";
    s << "lambda_con = " << lambda_con << "\n";
    s << "lambda_box = " << lambda_box << "\n";
    s << "tau = " << tau << "\n";
    s << "ramp_fraction = " << ramp_fraction << "\n";
    s << "nms_threshold = " << nms_threshold << "\n";
    s << "self_training = " << (self_training ? "on" : "off") << "\n";
    s << "qddm = " << (qddm ? "on" : "off") << "\n";
    s << "pseudo_on_empty = " << (pseudo_on_empty ? "on" : "off") << "\n";
    s << "use_bev_iou_cost = " << (use_bev_iou_cost ? "on" : "off") << "\n";
    s << "target_domain = " << target_domain << "\n";
    s << "adamw_lr = " << adamw_lr << "\n";
    s << "adamw_weight_decay = " << adamw_weight_decay << "\n";
    return s.str();
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        cfg.apply(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// schedules and EMA

ScheduleValues schedules(long t, long total, const ScheduleParams& p) {
    require(total > 0, "schedules: total iterations must be > 0");
    require(t >= 0 && t <= total, "schedules: t out of range");
    double denom = p.ramp_fraction * static_cast<double>(total);
    double r = denom > 0 ? std::min(1.0, static_cast<double>(t) / denom) : 1.0;
    ScheduleValues v;
    v.lambda_dom = p.lambda_dom_max * r;
    v.lambda_con = p.lambda_con_max * r;
    v.alpha = p.alpha_start * (1.0 - r) + p.alpha_end * r;
    return v;
}

void ema_update(ParamBag& teacher, const ParamBag& student, double alpha) {
    require(alpha >= 0 && alpha <= 1, "ema_update: alpha must be in [0,1]");
    for (auto& [name, t] : teacher.items) {
        const ad::Tensor* s = student.find(name);
        require(s != nullptr, "ema_update: student missing " + name);
        require(t.same_shape(*s), "ema_update: shape mismatch for " + name);
        for (int i = 0; i < t.size(); ++i) t[i] = alpha * t[i] + (1.0 - alpha) * (*s)[i];
    }
}

// ---------------------------------------------------------------------------
// detection loss

namespace {

// sqrt composed from primitives, with a floor keeping the gradient finite at
// exactly-zero inputs.
ad::Var sqrt_eps(ad::Tape& t, ad::Var x, double eps = 1e-12) {
    return t.exp(t.mul_scalar(t.log(t.add_scalar(x, eps)), 0.5));
}

struct GraphBox {
    geom::BoxOverlap<geom::GraphOps>::Rep rep;
};

// Same bounded decode as decode_box, built from tape primitives.
GraphBox graph_box_from_row(ad::Tape& t, ad::Var boxraw, int q, const BoxDecode& d) {
    double span = std::log(d.ext_hi) - std::log(d.ext_lo);
    double lo = std::log(d.ext_lo);
    auto ext = [&](int col) {
        ad::Var s = t.sigmoid(t.pick(boxraw, q, col));
        return t.exp(t.add_scalar(t.mul_scalar(s, span), lo));
    };
    ad::Var sx = t.pick(boxraw, q, 0);
    ad::Var sy = t.pick(boxraw, q, 1);
    ad::Var sz = t.pick(boxraw, q, 2);
    ad::Var w = ext(3);
    ad::Var h = ext(4);
    ad::Var l = ext(5);
    ad::Var sin_raw = t.pick(boxraw, q, 6);
    ad::Var cos_raw = t.pick(boxraw, q, 7);
    ad::Var norm = sqrt_eps(t, t.add(t.mul(sin_raw, sin_raw), t.mul(cos_raw, cos_raw)));
    ad::Var sin_n = t.div(sin_raw, norm);
    ad::Var cos_n = t.div(cos_raw, norm);
    return GraphBox{{sx, sy, sz, w, h, l, cos_n, sin_n}};
}

geom::BoxOverlap<geom::GraphOps>::Rep const_box(ad::Tape& t, const Box3D& b) {
    auto c = [&](double v) { return t.leaf(ad::Tensor::scalar(v)); };
    return {c(b.x), c(b.y), c(b.z), c(b.w), c(b.h), c(b.l), c(std::cos(b.yaw)), c(std::sin(b.yaw))};
}

}  // namespace

ad::Var detection_loss(ad::Tape& tape, ad::Var logits, ad::Var boxraw,
                       const std::vector<GtBox>& labels, int n_categories, double lambda_box,
                       const BoxDecode& decode, bool use_bev_iou, DetectionLossBreakdown* breakdown) {
    const ad::Tensor& lv = tape.value(logits);
    const ad::Tensor& bv = tape.value(boxraw);
    int n_q = lv.rows();
    require(lv.cols() == n_categories + 1, "detection_loss: logits must have K+1 columns");
    require(bv.rows() == n_q && bv.cols() == 8, "detection_loss: boxes must be N_Q x 8");

    // Value-level matching (standard set-prediction practice: no gradients
    // through the assignment itself).
    std::vector<std::pair<int, int>> pairs;
    if (!labels.empty()) {
        std::vector<Detection> dets;
        dets.reserve(n_q);
        for (int q = 0; q < n_q; ++q) {
            std::vector<double> fg(n_categories);
            for (int c = 0; c < n_categories; ++c) fg[c] = lv.at(q, c);
            dets.push_back(detection_from_logits(
                fg, decode_box(bv.data() + static_cast<std::size_t>(q) * 8, decode)));
        }
        auto assign = match::hungarian(match::cost_matrix(dets, labels, lambda_box, use_bev_iou));
        pairs = assign.pairs;
    }

    std::vector<int> target_class(n_q, n_categories);  // background by default
    for (auto [q, j] : pairs) target_class[q] = labels[j].category;

    ad::Var probs = tape.softmax_rows(logits);
    std::optional<ad::Var> cls;
    for (int q = 0; q < n_q; ++q) {
        ad::Var term = tape.mul_scalar(tape.log(tape.pick(probs, q, target_class[q])), -1.0);
        cls = cls ? tape.add(*cls, term) : term;
    }

    std::optional<ad::Var> l1_sum, iou_sum;
    geom::BoxOverlap<geom::GraphOps> overlap(geom::GraphOps{&tape});
    for (auto [q, j] : pairs) {
        const Box3D& tb = labels[j].box;
        GraphBox gb = graph_box_from_row(tape, boxraw, q, decode);
        auto cst = [&](double v) { return tape.leaf(ad::Tensor::scalar(v)); };

        // L1 on (x, y, z, w, h, l, sin yaw, cos yaw); sin/cos enter raw so the
        // head is pulled toward the unit circle.
        ad::Var terms[8] = {
            tape.abs(tape.sub(gb.rep.x, cst(tb.x))),
            tape.abs(tape.sub(gb.rep.y, cst(tb.y))),
            tape.abs(tape.sub(gb.rep.z, cst(tb.z))),
            tape.abs(tape.sub(gb.rep.w, cst(tb.w))),
            tape.abs(tape.sub(gb.rep.h, cst(tb.h))),
            tape.abs(tape.sub(gb.rep.l, cst(tb.l))),
            tape.abs(tape.sub(tape.pick(boxraw, q, 6), cst(std::sin(tb.yaw)))),
            tape.abs(tape.sub(tape.pick(boxraw, q, 7), cst(std::cos(tb.yaw)))),
        };
        ad::Var l1 = terms[0];
        for (int i = 1; i < 8; ++i) l1 = tape.add(l1, terms[i]);
        l1_sum = l1_sum ? tape.add(*l1_sum, l1) : l1;

        ad::Var iou = overlap.iou3d(gb.rep, const_box(tape, tb));
        ad::Var one_minus = tape.add_scalar(tape.mul_scalar(iou, -1.0), 1.0);
        iou_sum = iou_sum ? tape.add(*iou_sum, one_minus) : one_minus;
    }

    ad::Var total = *cls;
    if (l1_sum) total = tape.add(total, *l1_sum);
    if (iou_sum) total = tape.add(total, *iou_sum);

    if (breakdown) {
        breakdown->cls = tape.value(*cls)[0];
        breakdown->l1 = l1_sum ? tape.value(*l1_sum)[0] : 0.0;
        breakdown->iou = iou_sum ? tape.value(*iou_sum)[0] : 0.0;
        breakdown->pairs = pairs;
    }
    return total;
}

// ---------------------------------------------------------------------------
// toy scenes

std::array<double, 3> category_extents(int category) {
    switch (category) {
        case 0: return {4.6, 2.0, 1.7};  // frequent, car-sized
        case 1: return {0.8, 0.7, 1.8};  // mid-frequency, pedestrian-sized
        case 2: return {1.9, 0.7, 1.4};  // rare, cyclist-sized
        default: throw std::invalid_argument("category_extents: bad category");
    }
}

std::vector<double> rasterize_objects(const std::vector<GtBox>& objects, const ToySceneParams& p) {
    std::vector<double> desc(p.descriptor_dim(), 0.0);
    int g = p.grid;
    for (const GtBox& obj : objects) {
        double u = (obj.box.x + p.field) / (2.0 * p.field) * g - 0.5;
        double v = (obj.box.y + p.field) / (2.0 * p.field) * g - 0.5;
        int u0 = static_cast<int>(std::floor(u));
        int v0 = static_cast<int>(std::floor(v));
        double fu = u - u0, fv = v - v0;
        for (int du = 0; du <= 1; ++du) {
            for (int dv = 0; dv <= 1; ++dv) {
                int cu = u0 + du, cv = v0 + dv;
                if (cu < 0 || cu >= g || cv < 0 || cv >= g) continue;
                double wgt = (du ? fu : 1.0 - fu) * (dv ? fv : 1.0 - fv);
                desc[(static_cast<std::size_t>(cv) * g + cu) * 3 + obj.category] += wgt;
            }
        }
    }
    return desc;
}

std::vector<double> corrupt_descriptor(const std::vector<double>& clean, Domain domain,
                                       const ToySceneParams& p, RngStream& rng) {
    std::vector<double> d = clean;
    switch (domain) {
        case Domain::Source:
            for (double& v : d) v += p.source_noise * rng.normal();
            break;
        case Domain::TargetNight:
            for (double& v : d) v += p.night_offset + p.night_noise * rng.normal();
            break;
        case Domain::TargetHaze:
            for (double& v : d) v = v * p.haze_gain + p.haze_noise * rng.normal();
            break;
        case Domain::TargetRain:
            for (double& v : d) {
                double u = rng.next_double();
                if (u < p.rain_occlusion)
                    v = 0.0;
                else if (u < p.rain_occlusion + p.rain_spike)
                    v = 1.0;
                v += p.rain_noise * rng.normal();
            }
            break;
    }
    return d;
}

std::vector<ToyScene> make_toy_dataset(int n_scenes, Domain domain, std::uint64_t seed,
                                       const ToySceneParams& p) {
    require(n_scenes > 0, "make_toy_dataset: n_scenes must be > 0");
    std::vector<ToyScene> scenes;
    scenes.reserve(n_scenes);
    std::uint64_t domain_mix = hash_name(domain_name(domain));
    for (int i = 0; i < n_scenes; ++i) {
        ToyScene s;
        s.scene_id = static_cast<std::uint64_t>(i);
        s.domain = domain;
        RngStream rng = RngStream::derive(seed, domain_mix ^ (0x51ce5ce5ULL + s.scene_id * 2));
        int n_obj = rng.uniform_int(p.min_objects, p.max_objects);
        for (int o = 0; o < n_obj; ++o) {
            int cat;
            double u = rng.next_double();
            if (u < p.category_freq[0])
                cat = 0;
            else if (u < p.category_freq[0] + p.category_freq[1])
                cat = 1;
            else
                cat = 2;
            double margin = 2.0;
            double x = 0, y = 0;
            for (int attempt = 0; attempt < 20; ++attempt) {
                x = rng.uniform(-p.field + margin, p.field - margin);
                y = rng.uniform(-p.field + margin, p.field - margin);
                bool ok = true;
                for (const GtBox& other : s.objects)
                    if (std::hypot(x - other.box.x, y - other.box.y) < p.min_separation) {
                        ok = false;
                        break;
                    }
                if (ok) break;
            }
            auto ext = category_extents(cat);
            s.objects.push_back(GtBox{Box3D(x, y, 0.0, ext[1], ext[2], ext[0], 0.0), cat});
        }
        RngStream desc_rng = RngStream::derive(seed, domain_mix ^ (0xde5c0000ULL + s.scene_id * 2 + 1));
        s.descriptor = corrupt_descriptor(rasterize_objects(s.objects, p), domain, p, desc_rng);
        scenes.push_back(std::move(s));
    }
    return scenes;
}

// ---------------------------------------------------------------------------
// trainer

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)), batch_rng_(RngStream::derive(cfg_.seed, hash_name("batching"))) {
    cfg_.validate();
    scene_params_.grid = cfg_.grid;
    det_cfg_.descriptor_dim = scene_params_.descriptor_dim();
    det_cfg_.hidden = cfg_.hidden;
    det_cfg_.n_queries = cfg_.n_queries;
    det_cfg_.feat_dim = cfg_.feat_dim;
    det_cfg_.n_categories = 3;

    RngStream init_rng = RngStream::derive(cfg_.seed, hash_name("init"));
    init_detector(student_, det_cfg_, init_rng);
    align::init_discriminator(student_, "disc",
                              align::DiscriminatorDims{det_cfg_.feat_dim, cfg_.disc_hidden},
                              init_rng);
    // Teacher starts as a copy of the student's detector.
    for (const auto& [name, t] : student_.items)
        if (name.rfind("det/", 0) == 0) teacher_.add(name, t);

    opt_.lr = cfg_.lr;
    opt_.momentum = cfg_.momentum;
    memory_ = align::GlobalClassMemory::create(det_cfg_.n_categories, det_cfg_.feat_dim);

    std::uint64_t train_seed = RngStream::derive(cfg_.seed, hash_name("train-data")).next_u64();
    src_train_ = make_toy_dataset(cfg_.n_train_scenes, Domain::Source, train_seed, scene_params_);
    std::vector<Domain> targets;
    if (cfg_.target_domain == "mixed")
        targets = {Domain::TargetNight, Domain::TargetRain, Domain::TargetHaze};
    else
        targets = {domain_from_name(cfg_.target_domain)};
    for (Domain d : targets)
        tgt_train_.push_back(make_toy_dataset(cfg_.n_train_scenes, d, train_seed, scene_params_));
}

StepMetrics Trainer::step() {
    // One extreme condition per batch.
    int which = 0;
    if (tgt_train_.size() > 1) which = batch_rng_.uniform_int(0, static_cast<int>(tgt_train_.size()) - 1);
    std::vector<const ToyScene*> src, tgt;
    for (int i = 0; i < cfg_.batch_source; ++i)
        src.push_back(&src_train_[batch_rng_.uniform_int(0, static_cast<int>(src_train_.size()) - 1)]);
    for (int i = 0; i < cfg_.batch_target; ++i)
        tgt.push_back(&tgt_train_[which][batch_rng_.uniform_int(0, static_cast<int>(tgt_train_[which].size()) - 1)]);
    return train_step(src, tgt);
}

namespace {

QueryBatch concat_query_batches(const std::vector<QueryBatch>& parts, Domain domain) {
    QueryBatch out;
    require(!parts.empty(), "concat_query_batches: empty");
    out.feat_dim = parts.front().feat_dim;
    out.n_categories = parts.front().n_categories;
    out.domain = domain;
    for (const QueryBatch& p : parts) {
        out.n_queries += p.n_queries;
        out.features.insert(out.features.end(), p.features.begin(), p.features.end());
        out.logits.insert(out.logits.end(), p.logits.begin(), p.logits.end());
        out.boxes.insert(out.boxes.end(), p.boxes.begin(), p.boxes.end());
    }
    out.validate();
    return out;
}

}  // namespace

StepMetrics Trainer::train_step(const std::vector<const ToyScene*>& src_frames,
                                const std::vector<const ToyScene*>& tgt_frames) {
    StepMetrics m;
    m.iteration = iteration_;
    ScheduleParams sp{cfg_.lambda_dom, cfg_.lambda_con, cfg_.alpha_start, cfg_.alpha_end,
                      cfg_.ramp_fraction};
    ScheduleValues sched = schedules(std::min(iteration_, cfg_.iterations), cfg_.iterations, sp);
    m.lambda_dom = sched.lambda_dom;
    m.lambda_con = sched.lambda_con;
    m.alpha = sched.alpha;

    // Teacher forward on targets, value path only (no tape, no gradients),
    // producing pseudo labels.
    std::vector<std::vector<GtBox>> pseudo(tgt_frames.size());
    if (cfg_.self_training) {
        for (std::size_t i = 0; i < tgt_frames.size(); ++i) {
            DetectorValues tv = detector_forward(teacher_, det_cfg_, tgt_frames[i]->descriptor);
            pseudo[i] = match::filter_pseudo_labels(detections_from_values(tv, det_cfg_),
                                                    cfg_.beta, cfg_.nms_threshold);
            m.n_pseudo += static_cast<int>(pseudo[i].size());
        }
        last_pseudo_.clear();
        for (const auto& pl : pseudo) last_pseudo_.insert(last_pseudo_.end(), pl.begin(), pl.end());
    }

    std::vector<ad::Tensor> teacher_before;
    teacher_before.reserve(teacher_.items.size());
    for (const auto& [name, t] : teacher_.items) teacher_before.push_back(t);

    ad::Tape tape;
    BoundParams bound = bind_params(tape, student_);

    // Student forward on all frames.
    std::vector<DetectorGraph> src_graphs, tgt_graphs;
    std::vector<QueryBatch> src_meta, tgt_meta;
    for (const ToyScene* s : src_frames) {
        src_graphs.push_back(detector_forward_graph(tape, student_, bound, det_cfg_, s->descriptor));
        DetectorValues vals{tape.value(src_graphs.back().features), tape.value(src_graphs.back().logits),
                            tape.value(src_graphs.back().boxraw)};
        src_meta.push_back(query_batch_from_values(vals, det_cfg_, Domain::Source));
    }
    for (const ToyScene* s : tgt_frames) {
        tgt_graphs.push_back(detector_forward_graph(tape, student_, bound, det_cfg_, s->descriptor));
        DetectorValues vals{tape.value(tgt_graphs.back().features), tape.value(tgt_graphs.back().logits),
                            tape.value(tgt_graphs.back().boxraw)};
        tgt_meta.push_back(query_batch_from_values(vals, det_cfg_, s->domain));
    }

    auto mean_detection_loss = [&](const std::vector<DetectorGraph>& graphs,
                                   auto labels_for) -> std::optional<ad::Var> {
        std::optional<ad::Var> acc;
        int n = 0;
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            const std::vector<GtBox>* labels = labels_for(i);
            if (!labels) continue;
            ad::Var term = detection_loss(tape, graphs[i].logits, graphs[i].boxraw, *labels,
                                          det_cfg_.n_categories, cfg_.lambda_box, det_cfg_.decode,
                                          cfg_.use_bev_iou_cost);
            acc = acc ? tape.add(*acc, term) : term;
            ++n;
        }
        if (acc && n > 1) acc = tape.mul_scalar(*acc, 1.0 / n);
        return acc;
    };

    std::optional<ad::Var> l_gt = mean_detection_loss(
        src_graphs, [&](std::size_t i) { return &src_frames[i]->objects; });

    std::optional<ad::Var> l_pseudo;
    if (cfg_.self_training && !tgt_frames.empty()) {
        l_pseudo = mean_detection_loss(tgt_graphs, [&](std::size_t i) -> const std::vector<GtBox>* {
            if (pseudo[i].empty() && !cfg_.pseudo_on_empty) return nullptr;
            return &pseudo[i];
        });
    }

    std::optional<ad::Var> l_dom, l_con;
    if (cfg_.qddm && !src_graphs.empty() && !tgt_graphs.empty()) {
        std::optional<ad::Var> src_feats, tgt_feats;
        for (const auto& g : src_graphs)
            src_feats = src_feats ? tape.concat_rows(*src_feats, g.features) : g.features;
        for (const auto& g : tgt_graphs)
            tgt_feats = tgt_feats ? tape.concat_rows(*tgt_feats, g.features) : g.features;
        QueryBatch src_all = concat_query_batches(src_meta, Domain::Source);
        QueryBatch tgt_all = concat_query_batches(tgt_meta, tgt_frames.front()->domain);

        align::CenterVars src_cv = align::build_center_graph(tape, *src_feats, src_all, cfg_.gamma);
        align::CenterVars tgt_cv = align::build_center_graph(tape, *tgt_feats, tgt_all, cfg_.gamma);
        m.src_counts = src_cv.counts;
        m.tgt_counts = tgt_cv.counts;
        m.zero_norm_skipped = src_cv.zero_norm_skipped + tgt_cv.zero_norm_skipped;

        auto disc = align::discriminator_vars(student_, bound, "disc");
        auto adv = align::domain_adversarial_loss(tape, src_cv, tgt_cv, disc);
        if (!adv.empty) l_dom = adv.loss;

        auto con_s = align::contrastive_loss(tape, src_cv, memory_, cfg_.tau);
        auto con_t = align::contrastive_loss(tape, tgt_cv, memory_, cfg_.tau);
        m.contrast_skipped = con_s.skipped + con_t.skipped;
        if (con_s.terms + con_t.terms > 0) l_con = tape.add(con_s.loss, con_t.loss);
    }
    if (m.src_counts.empty()) m.src_counts.assign(det_cfg_.n_categories, 0);
    if (m.tgt_counts.empty()) m.tgt_counts.assign(det_cfg_.n_categories, 0);

    // L = L_gt + L_pseudo + lambda_dom * L_dom + lambda_con * L_contrast
    std::optional<ad::Var> total = l_gt;
    if (l_pseudo) total = total ? tape.add(*total, *l_pseudo) : l_pseudo;
    std::optional<ad::Var> wdom, wcon;
    if (l_dom) {
        wdom = tape.mul_scalar(*l_dom, sched.lambda_dom);
        total = total ? tape.add(*total, *wdom) : wdom;
    }
    if (l_con) {
        wcon = tape.mul_scalar(*l_con, sched.lambda_con);
        total = total ? tape.add(*total, *wcon) : wcon;
    }
    require(total.has_value(), "train_step: nothing to optimize");

    m.loss_gt = l_gt ? tape.value(*l_gt)[0] : 0.0;
    m.loss_pseudo = l_pseudo ? tape.value(*l_pseudo)[0] : 0.0;
    m.loss_dom = l_dom ? tape.value(*l_dom)[0] : 0.0;
    m.loss_con = l_con ? tape.value(*l_con)[0] : 0.0;
    m.weighted_dom = wdom ? tape.value(*wdom)[0] : 0.0;
    m.weighted_con = wcon ? tape.value(*wcon)[0] : 0.0;
    m.loss_total = tape.value(*total)[0];

    if (!std::isfinite(m.loss_total)) {
        if (!dump_dir_.empty()) {
            save_checkpoint(dump_dir_ + "/student_dump.ckpt", student_,
                            "{\"iteration\":" + std::to_string(iteration_) + "}");
            save_checkpoint(dump_dir_ + "/teacher_dump.ckpt", teacher_,
                            "{\"iteration\":" + std::to_string(iteration_) + "}");
        }
        throw std::runtime_error("train_step: non-finite loss at iteration " +
                                 std::to_string(iteration_));
    }

    tape.backward(*total);
    opt_.step(student_, tape, bound);

    // Memory update between optimizer steps, outside the gradient graph.
    if (cfg_.qddm && !src_meta.empty() && !tgt_meta.empty()) {
        QueryBatch src_all = concat_query_batches(src_meta, Domain::Source);
        QueryBatch tgt_all = concat_query_batches(tgt_meta, tgt_frames.front()->domain);
        memory_ = align::memory_update(memory_, align::class_centers(src_all, cfg_.gamma));
        memory_ = align::memory_update(memory_, align::class_centers(tgt_all, cfg_.gamma));
    }
    m.memory_counts = memory_.counts;

    // The teacher is not on the tape; verify bitwise that backward left it
    // untouched, then EMA last.
    for (std::size_t i = 0; i < teacher_.items.size(); ++i) {
        const ad::Tensor& now = teacher_.items[i].second;
        const ad::Tensor& was = teacher_before[i];
        for (int e = 0; e < now.size(); ++e)
            if (std::memcmp(now.data() + e, was.data() + e, sizeof(double)) != 0)
                m.teacher_untouched = false;
    }

    ema_update(teacher_, student_, sched.alpha);
    for (std::size_t i = 0; i < teacher_.items.size(); ++i) {
        const ad::Tensor& now = teacher_.items[i].second;
        const ad::Tensor& was = teacher_before[i];
        const ad::Tensor* stu = student_.find(teacher_.items[i].first);
        for (int e = 0; e < now.size(); ++e) {
            double lo = std::min(was[e], (*stu)[e]);
            double hi = std::max(was[e], (*stu)[e]);
            double slack = 1e-12 * std::max(1.0, std::max(std::fabs(lo), std::fabs(hi)));
            if (now[e] < lo - slack || now[e] > hi + slack) m.ema_in_hull = false;
        }
    }

    ++iteration_;
    return m;
}

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows,
                       int n_categories) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "iteration,lambda_dom,lambda_con,alpha,loss_gt,loss_pseudo,loss_dom,loss_con,"
         "weighted_dom,weighted_con,loss_total,n_pseudo";
    for (int k = 0; k < n_categories; ++k) f << ",src_n_" << k;
    for (int k = 0; k < n_categories; ++k) f << ",tgt_n_" << k;
    for (int k = 0; k < n_categories; ++k) f << ",S_" << k;
    f << ",contrast_skipped,zero_norm_skipped,teacher_untouched,ema_in_hull\n";
    f.precision(17);
    for (const StepMetrics& m : rows) {
        f << m.iteration << "," << m.lambda_dom << "," << m.lambda_con << "," << m.alpha << ","
          << m.loss_gt << "," << m.loss_pseudo << "," << m.loss_dom << "," << m.loss_con << ","
          << m.weighted_dom << "," << m.weighted_con << "," << m.loss_total << "," << m.n_pseudo;
        for (int k = 0; k < n_categories; ++k) f << "," << (k < (int)m.src_counts.size() ? m.src_counts[k] : 0);
        for (int k = 0; k < n_categories; ++k) f << "," << (k < (int)m.tgt_counts.size() ? m.tgt_counts[k] : 0);
        for (int k = 0; k < n_categories; ++k) f << "," << (k < (int)m.memory_counts.size() ? m.memory_counts[k] : 0);
        f << "," << m.contrast_skipped << "," << m.zero_norm_skipped << ","
          << (m.teacher_untouched ? 1 : 0) << "," << (m.ema_in_hull ? 1 : 0) << "\n";
    }
}

// ---------------------------------------------------------------------------
// evaluation glue

SceneEvalData predict_scenes(const ParamBag& params, const DetectorConfig& cfg,
                             const std::vector<ToyScene>& scenes, double nms_threshold) {
    SceneEvalData out;
    for (const ToyScene& s : scenes) {
        DetectorValues v = detector_forward(params, cfg, s.descriptor);
        out.pred_frames.push_back(geom::nms(detections_from_values(v, cfg), nms_threshold));
        out.gt_frames.push_back(s.objects);
        out.query_batches.push_back(query_batch_from_values(v, cfg, s.domain));
    }
    return out;
}

ExperimentResult run_experiment(const TrainConfig& cfg) {
    Trainer trainer(cfg);
    ExperimentResult res;
    res.metrics.reserve(cfg.iterations);
    for (long t = 0; t < cfg.iterations; ++t) res.metrics.push_back(trainer.step());

    ToySceneParams sp;
    sp.grid = cfg.grid;
    std::uint64_t eval_seed = RngStream::derive(cfg.seed, hash_name("eval-data")).next_u64();
    Domain eval_target = cfg.target_domain == "mixed" ? Domain::TargetNight
                                                      : domain_from_name(cfg.target_domain);
    auto src_eval = make_toy_dataset(cfg.n_eval_scenes, Domain::Source, eval_seed, sp);
    auto tgt_eval = make_toy_dataset(cfg.n_eval_scenes, eval_target, eval_seed, sp);

    auto src_pred = predict_scenes(trainer.student(), trainer.detector_config(), src_eval,
                                   cfg.nms_threshold);
    auto tgt_pred = predict_scenes(trainer.student(), trainer.detector_config(), tgt_eval,
                                   cfg.nms_threshold);
    auto src_res = metrics::evaluate({src_pred.pred_frames, src_pred.gt_frames, 3});
    auto tgt_res = metrics::evaluate({tgt_pred.pred_frames, tgt_pred.gt_frames, 3});
    res.source_map = src_res.mean_ap;
    res.target_map = tgt_res.mean_ap;
    res.source_mate = src_res.mate;
    res.target_mate = tgt_res.mate;
    res.source_eval_json = src_res.to_json();
    res.target_eval_json = tgt_res.to_json();
    return res;
}

}  // namespace awda::train
