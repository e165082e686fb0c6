#pragma once

#include <array>
#include <vector>

#include "awda/ad.hpp"
#include "awda/core.hpp"
#include "awda/params.hpp"
#include "awda/util.hpp"

namespace awda::train {

// Raw head outputs map to boxes so decoded boxes are always valid and the
// regression gradient gain stays at unit scale:
//   x = r0, y = r1, z = r2 (meters),
//   extent = exp(log lo + (log hi - log lo) * sigmoid(r)),
//   yaw = atan2(r6, r7).
struct BoxDecode {
    double ext_lo = 0.3;
    double ext_hi = 8.0;
};

// Query-based toy detector. Each query row is its learned embedding
// concatenated with the scene descriptor; a shared two-layer relu MLP maps
// rows to query features, and two linear heads emit per-query class logits
// (K categories + background) and raw box regressions (x, y, z, w, h, l,
// sin yaw, cos yaw parameters before decoding), with x/y offsets from fixed
// per-query anchors.
struct DetectorConfig {
    int descriptor_dim = 0;
    int query_dim = 16;
    int hidden = 96;
    int n_queries = 9;
    int feat_dim = 32;
    int n_categories = 3;  // background is logit column n_categories
    double anchor_extent = 20.0;
    BoxDecode decode;

    int logit_cols() const { return n_categories + 1; }
};

// Fixed per-query reference points on a grid over the scene square; the box
// head regresses offsets from these, which keeps assignments stable. Returned
// as an n_queries x 8 tensor with only the x/y columns populated.
ad::Tensor query_anchors(const DetectorConfig& cfg);

// Adds detector parameters to the bag under "det/".
void init_detector(ParamBag& bag, const DetectorConfig& cfg, RngStream& rng);

struct DetectorValues {
    ad::Tensor features;  // n_queries x feat_dim
    ad::Tensor logits;    // n_queries x (K+1)
    ad::Tensor boxraw;    // n_queries x 8, xy columns scaled
};

// Inference path: plain tensor math, no tape. Used by the teacher and by
// evaluation. Mirrors the graph path operation for operation.
DetectorValues detector_forward(const ParamBag& params, const DetectorConfig& cfg,
                                const std::vector<double>& descriptor);

struct DetectorGraph {
    ad::Var features, logits, boxraw;
};

DetectorGraph detector_forward_graph(ad::Tape& tape, const ParamBag& params,
                                     const BoundParams& bound, const DetectorConfig& cfg,
                                     const std::vector<double>& descriptor);

// Raw 8-vector -> Box3D via the bounded mapping above.
Box3D decode_box(const double* row, const BoxDecode& d);

// Inverse of decode_box for boxes strictly inside the decode ranges.
std::array<double, 8> encode_box(const Box3D& box, const BoxDecode& d);

// All queries, with the K foreground logit columns.
QueryBatch query_batch_from_values(const DetectorValues& out, const DetectorConfig& cfg,
                                   Domain domain);

// Queries whose (K+1)-way argmax is background are dropped; survivors carry
// softmax over the K foreground logits.
std::vector<Detection> detections_from_values(const DetectorValues& out,
                                              const DetectorConfig& cfg);

}  // namespace awda::train
