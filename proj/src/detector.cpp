#include "awda/detector.hpp"

#include <algorithm>
#include <cmath>

#include "awda/kernels.hpp"

namespace awda::train {

namespace {

ad::Tensor randn(int rows, int cols, double scale, RngStream& rng) {
    ad::Tensor t(rows, cols);
    for (int i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

ad::Tensor mm(const ad::Tensor& a, const ad::Tensor& b) {
    ad::Tensor c(a.rows(), b.cols());
    kernels::mm_nn(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
    return c;
}

ad::Tensor add_t(const ad::Tensor& a, const ad::Tensor& b) {
    ad::Tensor c = a;
    for (int i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

ad::Tensor relu_t(const ad::Tensor& a) {
    ad::Tensor c = a;
    for (int i = 0; i < c.size(); ++i) c[i] = std::max(0.0, c[i]);
    return c;
}

}  // namespace

ad::Tensor query_anchors(const DetectorConfig& cfg) {
    ad::Tensor anchors(cfg.n_queries, 8, 0.0);
    int g = 1;
    while (g * g < cfg.n_queries) ++g;
    double cell = 2.0 * cfg.anchor_extent / g;
    for (int q = 0; q < cfg.n_queries; ++q) {
        int gx = q % g, gy = q / g;
        anchors.at(q, 0) = -cfg.anchor_extent + cell * (gx + 0.5);
        anchors.at(q, 1) = -cfg.anchor_extent + cell * (gy + 0.5);
    }
    return anchors;
}

void init_detector(ParamBag& bag, const DetectorConfig& cfg, RngStream& rng) {
    require(cfg.descriptor_dim > 0 && cfg.hidden > 0 && cfg.n_queries > 0 && cfg.feat_dim > 0 &&
                cfg.n_categories > 0,
            "init_detector: bad config");
    int s = cfg.descriptor_dim, h = cfg.hidden, d = cfg.feat_dim;
    bag.add("det/enc_w1", randn(s, h, 1.0 / std::sqrt(double(s)), rng));
    bag.add("det/enc_b1", ad::Tensor(1, h, 0.0));
    bag.add("det/enc_w2", randn(h, d, 1.0 / std::sqrt(double(h)), rng));
    bag.add("det/enc_b2", ad::Tensor(1, d, 0.0));
    bag.add("det/queries", randn(cfg.n_queries, d, 1.0, rng));
    bag.add("det/mix_w", randn(d, d, 1.0 / std::sqrt(double(d)), rng));
    bag.add("det/mix_b", ad::Tensor(1, d, 0.0));
    bag.add("det/cls_w", randn(d, cfg.logit_cols(), 1.0 / std::sqrt(double(d)), rng));
    bag.add("det/cls_b", ad::Tensor(1, cfg.logit_cols(), 0.0));
    bag.add("det/box_w", randn(d, 8, 0.1 / std::sqrt(double(d)), rng));
    bag.add("det/box_b", ad::Tensor(1, 8, 0.0));
}

DetectorValues detector_forward(const ParamBag& params, const DetectorConfig& cfg,
                                const std::vector<double>& descriptor) {
    require(static_cast<int>(descriptor.size()) == cfg.descriptor_dim,
            "detector_forward: descriptor dimension mismatch");
    auto p = [&](const char* name) -> const ad::Tensor& {
        const ad::Tensor* t = params.find(name);
        require(t != nullptr, std::string("detector_forward: missing parameter ") + name);
        return *t;
    };
    ad::Tensor x = ad::Tensor::row(descriptor);
    ad::Tensor ones(cfg.n_queries, 1, 1.0);

    ad::Tensor henc = relu_t(add_t(mm(x, p("det/enc_w1")), p("det/enc_b1")));
    ad::Tensor e = add_t(mm(henc, p("det/enc_w2")), p("det/enc_b2"));
    ad::Tensor f0 = add_t(p("det/queries"), mm(ones, e));
    ad::Tensor f = relu_t(add_t(mm(f0, p("det/mix_w")), mm(ones, p("det/mix_b"))));

    DetectorValues out;
    out.logits = add_t(mm(f, p("det/cls_w")), mm(ones, p("det/cls_b")));
    out.boxraw = add_t(add_t(mm(f, p("det/box_w")), mm(ones, p("det/box_b"))), query_anchors(cfg));
    out.features = std::move(f);
    return out;
}

DetectorGraph detector_forward_graph(ad::Tape& tape, const ParamBag& params,
                                     const BoundParams& bound, const DetectorConfig& cfg,
                                     const std::vector<double>& descriptor) {
    require(static_cast<int>(descriptor.size()) == cfg.descriptor_dim,
            "detector_forward_graph: descriptor dimension mismatch");
    require(bound.vars.size() == params.items.size(), "detector_forward_graph: binding mismatch");
    auto p = [&](const char* name) {
        int i = params.index_of(name);
        require(i >= 0, std::string("detector_forward_graph: missing parameter ") + name);
        return bound.vars[i];
    };
    ad::Var x = tape.leaf(ad::Tensor::row(descriptor));
    ad::Var ones = tape.leaf(ad::Tensor(cfg.n_queries, 1, 1.0));

    ad::Var henc = tape.relu(tape.add(tape.matmul(x, p("det/enc_w1")), p("det/enc_b1")));
    ad::Var e = tape.add(tape.matmul(henc, p("det/enc_w2")), p("det/enc_b2"));
    ad::Var f0 = tape.add(p("det/queries"), tape.matmul(ones, e));
    ad::Var f = tape.relu(tape.add(tape.matmul(f0, p("det/mix_w")), tape.matmul(ones, p("det/mix_b"))));

    DetectorGraph out;
    out.features = f;
    out.logits = tape.add(tape.matmul(f, p("det/cls_w")), tape.matmul(ones, p("det/cls_b")));
    out.boxraw = tape.add(tape.add(tape.matmul(f, p("det/box_w")), tape.matmul(ones, p("det/box_b"))),
                          tape.leaf(query_anchors(cfg)));
    return out;
}

namespace {

double sigmoid_d(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double logit_d(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

Box3D decode_box(const double* r, const BoxDecode& d) {
    double span = std::log(d.ext_hi) - std::log(d.ext_lo);
    auto ext = [&](double raw) { return std::exp(std::log(d.ext_lo) + span * sigmoid_d(raw)); };
    return Box3D(r[0], r[1], r[2], ext(r[3]), ext(r[4]), ext(r[5]), std::atan2(r[6], r[7]));
}

std::array<double, 8> encode_box(const Box3D& box, const BoxDecode& d) {
    double span = std::log(d.ext_hi) - std::log(d.ext_lo);
    auto inv_ext = [&](double v) { return logit_d((std::log(v) - std::log(d.ext_lo)) / span); };
    return {box.x,          box.y,          box.z,
            inv_ext(box.w), inv_ext(box.h), inv_ext(box.l),
            std::sin(box.yaw), std::cos(box.yaw)};
}

QueryBatch query_batch_from_values(const DetectorValues& out, const DetectorConfig& cfg,
                                   Domain domain) {
    QueryBatch q;
    q.n_queries = cfg.n_queries;
    q.feat_dim = cfg.feat_dim;
    q.n_categories = cfg.n_categories;
    q.domain = domain;
    q.features.assign(out.features.data(), out.features.data() + out.features.size());
    q.logits.reserve(static_cast<std::size_t>(cfg.n_queries) * cfg.n_categories);
    for (int i = 0; i < cfg.n_queries; ++i)
        for (int c = 0; c < cfg.n_categories; ++c) q.logits.push_back(out.logits.at(i, c));
    q.boxes.reserve(cfg.n_queries);
    for (int i = 0; i < cfg.n_queries; ++i)
        q.boxes.push_back(decode_box(out.boxraw.data() + static_cast<std::size_t>(i) * 8, cfg.decode));
    q.validate();
    return q;
}

std::vector<Detection> detections_from_values(const DetectorValues& out,
                                              const DetectorConfig& cfg) {
    std::vector<Detection> dets;
    for (int i = 0; i < cfg.n_queries; ++i) {
        std::vector<double> full(out.logits.data() + static_cast<std::size_t>(i) * cfg.logit_cols(),
                                 out.logits.data() + static_cast<std::size_t>(i + 1) * cfg.logit_cols());
        int argmax = static_cast<int>(std::max_element(full.begin(), full.end()) - full.begin());
        if (argmax == cfg.n_categories) continue;  // background
        std::vector<double> fg(full.begin(), full.begin() + cfg.n_categories);
        dets.push_back(detection_from_logits(
            fg, decode_box(out.boxraw.data() + static_cast<std::size_t>(i) * 8, cfg.decode)));
    }
    return dets;
}

}  // namespace awda::train
