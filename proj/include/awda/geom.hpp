#pragma once

#include <array>
#include <vector>

#include "awda/core.hpp"

namespace awda::geom {

// Ground-plane box footprint: 4 vertices, counter-clockwise, convex.
struct BEVPolygon {
    std::array<std::array<double, 2>, 4> v;
};

// Footprint corners of the w x l rectangle rotated by yaw about (x, y), CCW.
BEVPolygon bev_corners(const Box3D& box);

double polygon_area(const BEVPolygon& p);

// Area of the intersection of two convex CCW quads; 0 when disjoint.
double convex_intersection_area(const BEVPolygon& a, const BEVPolygon& b);

// (bev intersection x z overlap) / (vol_a + vol_b - intersection), in [0, 1].
double iou_3d(const Box3D& a, const Box3D& b);

// Footprint-only IoU, exposed as an alternative matching cost term.
double iou_bev(const Box3D& a, const Box3D& b);

// Greedy per-category suppression: sort by confidence descending (stable, so
// ties keep input order), keep a detection iff its iou_3d with every kept
// detection of the same category is <= threshold.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

}  // namespace awda::geom
