#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "awda/ad.hpp"

// Rotated-box overlap core, parameterized over the scalar type. DoubleOps
// instantiates the plain geometry used by NMS/matching/eval; GraphOps
// instantiates the same arithmetic as tape nodes so losses can differentiate
// through the box overlap. Branch decisions (clipping topology) are always
// taken on plain values, which makes the graph variant exact for the realized
// polygon configuration.
namespace awda::geom {

struct DoubleOps {
    using S = double;
    S c(double v) const { return v; }
    double val(S x) const { return x; }
    S add(S a, S b) const { return a + b; }
    S sub(S a, S b) const { return a - b; }
    S mul(S a, S b) const { return a * b; }
    S div(S a, S b) const { return a / b; }
    S min(S a, S b) const { return a <= b ? a : b; }
    S max(S a, S b) const { return a >= b ? a : b; }
    S relu(S a) const { return a > 0 ? a : 0.0; }
};

struct GraphOps {
    ad::Tape* tape = nullptr;
    using S = ad::Var;
    S c(double v) const { return tape->leaf(ad::Tensor::scalar(v)); }
    double val(S x) const { return tape->value(x)[0]; }
    S add(S a, S b) const { return tape->add(a, b); }
    S sub(S a, S b) const { return tape->sub(a, b); }
    S mul(S a, S b) const { return tape->mul(a, b); }
    S div(S a, S b) const { return tape->div(a, b); }
    S min(S a, S b) const { return tape->minimum(a, b); }
    S max(S a, S b) const { return tape->maximum(a, b); }
    S relu(S a) const { return tape->relu(a); }
};

template <class Ops>
struct BoxOverlap {
    using S = typename Ops::S;

    struct Pt {
        S x, y;
    };

    // Box with yaw as (cos, sin). Local x axis spans length l, local y spans
    // width w.
    struct Rep {
        S x, y, z, w, h, l, cos_yaw, sin_yaw;
    };

    Ops o;

    explicit BoxOverlap(Ops ops) : o(ops) {}

    std::array<Pt, 4> bev_corners(const Rep& b) const {
        S hl = o.mul(b.l, o.c(0.5));
        S hw = o.mul(b.w, o.c(0.5));
        constexpr double sx[4] = {1, -1, -1, 1};
        constexpr double sy[4] = {1, 1, -1, -1};
        std::array<Pt, 4> out;
        for (int i = 0; i < 4; ++i) {
            S lx = o.mul(hl, o.c(sx[i]));
            S ly = o.mul(hw, o.c(sy[i]));
            out[i].x = o.add(b.x, o.sub(o.mul(b.cos_yaw, lx), o.mul(b.sin_yaw, ly)));
            out[i].y = o.add(b.y, o.add(o.mul(b.sin_yaw, lx), o.mul(b.cos_yaw, ly)));
        }
        return out;
    }

    // Sutherland-Hodgman: clip the subject quad by the convex CCW clipper
    // quad, then shoelace. Both quads must be CCW.
    S intersection_area(const std::array<Pt, 4>& subject, const std::array<Pt, 4>& clipper) const {
        std::vector<Pt> poly(subject.begin(), subject.end());
        for (int e = 0; e < 4 && poly.size() >= 3; ++e) {
            const Pt& c1 = clipper[e];
            const Pt& c2 = clipper[(e + 1) % 4];
            double ex = o.val(c2.x) - o.val(c1.x);
            double ey = o.val(c2.y) - o.val(c1.y);
            std::vector<Pt> out;
            out.reserve(poly.size() + 4);
            int n = static_cast<int>(poly.size());
            for (int i = 0; i < n; ++i) {
                const Pt& p1 = poly[i];
                const Pt& p2 = poly[(i + 1) % n];
                double d1 = ex * (o.val(p1.y) - o.val(c1.y)) - ey * (o.val(p1.x) - o.val(c1.x));
                double d2 = ex * (o.val(p2.y) - o.val(c1.y)) - ey * (o.val(p2.x) - o.val(c1.x));
                bool in1 = d1 >= 0;
                bool in2 = d2 >= 0;
                if (in2) {
                    if (!in1) out.push_back(edge_hit(p1, p2, c1, c2));
                    out.push_back(p2);
                } else if (in1) {
                    out.push_back(edge_hit(p1, p2, c1, c2));
                }
            }
            poly = std::move(out);
        }
        if (poly.size() < 3) return o.c(0.0);
        // Clipping two CCW convex polygons yields a CCW polygon; the relu only
        // absorbs round-off on degenerate slivers.
        S twice = o.c(0.0);
        int n = static_cast<int>(poly.size());
        for (int i = 0; i < n; ++i) {
            const Pt& p = poly[i];
            const Pt& q = poly[(i + 1) % n];
            twice = o.add(twice, o.sub(o.mul(p.x, q.y), o.mul(q.x, p.y)));
        }
        return o.relu(o.mul(twice, o.c(0.5)));
    }

    S iou3d(const Rep& a, const Rep& b) const {
        S inter_bev = intersection_area(bev_corners(a), bev_corners(b));
        S half = o.c(0.5);
        S top = o.min(o.add(a.z, o.mul(a.h, half)), o.add(b.z, o.mul(b.h, half)));
        S bot = o.max(o.sub(a.z, o.mul(a.h, half)), o.sub(b.z, o.mul(b.h, half)));
        S z_overlap = o.relu(o.sub(top, bot));
        S inter = o.mul(inter_bev, z_overlap);
        S vol_a = o.mul(a.w, o.mul(a.h, a.l));
        S vol_b = o.mul(b.w, o.mul(b.h, b.l));
        S uni = o.sub(o.add(vol_a, vol_b), inter);
        return o.div(inter, uni);
    }

private:
    // Crossing point of segment p1->p2 with the clip edge line; only called
    // when p1 and p2 straddle the line, so the denominator is nonzero.
    Pt edge_hit(const Pt& p1, const Pt& p2, const Pt& c1, const Pt& c2) const {
        S ex = o.sub(c2.x, c1.x);
        S ey = o.sub(c2.y, c1.y);
        S d1 = o.sub(o.mul(ex, o.sub(p1.y, c1.y)), o.mul(ey, o.sub(p1.x, c1.x)));
        S d2 = o.sub(o.mul(ex, o.sub(p2.y, c1.y)), o.mul(ey, o.sub(p2.x, c1.x)));
        S t = o.div(d1, o.sub(d1, d2));
        return Pt{o.add(p1.x, o.mul(t, o.sub(p2.x, p1.x))),
                  o.add(p1.y, o.mul(t, o.sub(p2.y, p1.y)))};
    }
};

}  // namespace awda::geom
