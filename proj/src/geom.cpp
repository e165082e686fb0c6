#include "awda/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "awda/geom_overlap.hpp"
#include "awda/util.hpp"

namespace awda::geom {

namespace {

using Overlap = BoxOverlap<DoubleOps>;

Overlap::Rep to_rep(const Box3D& b) {
    return Overlap::Rep{b.x, b.y, b.z, b.w, b.h, b.l, std::cos(b.yaw), std::sin(b.yaw)};
}

std::array<Overlap::Pt, 4> to_pts(const BEVPolygon& p) {
    std::array<Overlap::Pt, 4> out;
    for (int i = 0; i < 4; ++i) out[i] = {p.v[i][0], p.v[i][1]};
    return out;
}

}  // namespace

BEVPolygon bev_corners(const Box3D& box) {
    Overlap ov{DoubleOps{}};
    auto pts = ov.bev_corners(to_rep(box));
    BEVPolygon poly;
    for (int i = 0; i < 4; ++i) poly.v[i] = {pts[i].x, pts[i].y};
    return poly;
}

double polygon_area(const BEVPolygon& p) {
    double twice = 0;
    for (int i = 0; i < 4; ++i) {
        const auto& a = p.v[i];
        const auto& b = p.v[(i + 1) % 4];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * twice;
}

double convex_intersection_area(const BEVPolygon& a, const BEVPolygon& b) {
    Overlap ov{DoubleOps{}};
    return ov.intersection_area(to_pts(a), to_pts(b));
}

double iou_3d(const Box3D& a, const Box3D& b) {
    Overlap ov{DoubleOps{}};
    double v = ov.iou3d(to_rep(a), to_rep(b));
    return std::clamp(v, 0.0, 1.0);
}

double iou_bev(const Box3D& a, const Box3D& b) {
    Overlap ov{DoubleOps{}};
    double inter = ov.intersection_area(ov.bev_corners(to_rep(a)), ov.bev_corners(to_rep(b)));
    double uni = a.w * a.l + b.w * b.l - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    require(iou_threshold >= 0 && iou_threshold <= 1, "nms: threshold must be in [0,1]");
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
        return dets[i].confidence > dets[j].confidence;
    });
    std::vector<Detection> kept;
    kept.reserve(dets.size());
    for (int idx : order) {
        const Detection& cand = dets[idx];
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.category != cand.category) continue;
            if (iou_3d(k.box, cand.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }
    return kept;
}

}  // namespace awda::geom
