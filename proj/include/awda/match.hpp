#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "awda/core.hpp"

namespace awda::match {

// rows = predictions, cols = targets. Entries are finite (probabilities
// floored at 1e-7 before the log).
struct CostMatrix {
    int rows = 0, cols = 0;
    std::vector<double> c;

    CostMatrix() = default;
    CostMatrix(int rows, int cols, double fill = 0.0);
    double& at(int i, int j) { return c[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return c[static_cast<std::size_t>(i) * cols + j]; }
    bool empty() const { return rows == 0 || cols == 0; }
};

constexpr double kProbFloor = 1e-7;

// C_ij = -log(max(p_ij, 1e-7)) + lambda_box * (1 - IoU(b_i, b_j)) where p_ij
// is prediction i's probability for target j's category. use_bev_iou selects
// the footprint IoU as the box term.
CostMatrix cost_matrix(const std::vector<Detection>& preds,
                       const std::vector<GtBox>& targets,
                       double lambda_box,
                       bool use_bev_iou = false);

// (prediction index, target index) pairs; injective in both coordinates,
// size = min(#preds, #targets).
struct Assignment {
    std::vector<std::pair<int, int>> pairs;
    double total_cost = 0;
};

// Minimum-cost assignment of size min(rows, cols) via the O(n^3)
// potential-based shortest augmenting path method. Handles rectangular and
// negative-entry matrices; entries must be finite.
Assignment hungarian(const CostMatrix& cost);

// NMS first, then drop detections with confidence < beta; survivors become
// (box, argmax category) pseudo labels.
std::vector<GtBox> filter_pseudo_labels(const std::vector<Detection>& teacher_dets,
                                        double beta,
                                        double nms_threshold);

// Pseudo labels serialize as label records plus a provenance object
// {teacher_iteration, beta} for audit.
void write_pseudo_labels(const std::string& path,
                         const std::vector<GtBox>& labels,
                         int n_categories,
                         Domain domain,
                         std::int64_t teacher_iteration,
                         double beta);

struct PseudoLabelFile {
    std::vector<GtBox> labels;
    std::int64_t teacher_iteration = 0;
    double beta = 0;
};

PseudoLabelFile read_pseudo_labels(const std::string& path);

}  // namespace awda::match
