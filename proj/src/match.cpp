#include "awda/match.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "awda/geom.hpp"
#include "awda/util.hpp"

namespace awda::match {

CostMatrix::CostMatrix(int rows_, int cols_, double fill) : rows(rows_), cols(cols_) {
    require(rows >= 0 && cols >= 0, "CostMatrix: negative dimension");
    c.assign(static_cast<std::size_t>(rows) * cols, fill);
}

CostMatrix cost_matrix(const std::vector<Detection>& preds,
                       const std::vector<GtBox>& targets,
                       double lambda_box,
                       bool use_bev_iou) {
    require(lambda_box >= 0, "cost_matrix: lambda_box must be >= 0");
    CostMatrix m(static_cast<int>(preds.size()), static_cast<int>(targets.size()));
    for (int i = 0; i < m.rows; ++i) {
        for (int j = 0; j < m.cols; ++j) {
            double p = preds[i].probs.at(targets[j].category);
            double iou = use_bev_iou ? geom::iou_bev(preds[i].box, targets[j].box)
                                     : geom::iou_3d(preds[i].box, targets[j].box);
            m.at(i, j) = -std::log(std::max(p, kProbFloor)) + lambda_box * (1.0 - iou);
        }
    }
    return m;
}

namespace {

// Shortest augmenting path with potentials, 1-based arrays, rows <= cols.
// Returns col assignment per row.
std::vector<int> solve_rows_leq_cols(const CostMatrix& a) {
    int n = a.rows, m = a.cols;
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, kInf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                double cur = a.at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
    Assignment out;
    if (cost.empty()) return out;
    for (double v : cost.c)
        require(std::isfinite(v), "hungarian: cost entries must be finite");

    if (cost.rows <= cost.cols) {
        auto row_to_col = solve_rows_leq_cols(cost);
        for (int i = 0; i < cost.rows; ++i)
            out.pairs.emplace_back(i, row_to_col[i]);
    } else {
        CostMatrix t(cost.cols, cost.rows);
        for (int i = 0; i < cost.rows; ++i)
            for (int j = 0; j < cost.cols; ++j) t.at(j, i) = cost.at(i, j);
        auto col_to_row = solve_rows_leq_cols(t);
        for (int j = 0; j < cost.cols; ++j)
            out.pairs.emplace_back(col_to_row[j], j);
        std::sort(out.pairs.begin(), out.pairs.end());
    }
    for (auto [i, j] : out.pairs) out.total_cost += cost.at(i, j);
    return out;
}

std::vector<GtBox> filter_pseudo_labels(const std::vector<Detection>& teacher_dets,
                                        double beta,
                                        double nms_threshold) {
    require(beta >= 0 && beta <= 1, "filter_pseudo_labels: beta must be in [0,1]");
    std::vector<GtBox> out;
    for (const Detection& d : geom::nms(teacher_dets, nms_threshold)) {
        if (d.confidence < beta) continue;
        out.push_back(GtBox{d.box, d.category});
    }
    return out;
}

void write_pseudo_labels(const std::string& path,
                         const std::vector<GtBox>& labels,
                         int n_categories,
                         Domain domain,
                         std::int64_t teacher_iteration,
                         double beta) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const GtBox& gt : labels) {
        nlohmann::json j = nlohmann::json::parse(
            box_record_to_json(record_from_label(gt, n_categories, domain, 0)));
        j["kind"] = "pseudo_label";
        j["provenance"] = {{"teacher_iteration", teacher_iteration}, {"beta", beta}};
        f << j.dump() << "\n";
    }
}

PseudoLabelFile read_pseudo_labels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    PseudoLabelFile out;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (j.value("kind", "") != "pseudo_label")
            throw std::invalid_argument(path + ": expected kind \"pseudo_label\"");
        Box3D box(j["x"].get<double>(), j["y"].get<double>(), j["z"].get<double>(),
                  j["w"].get<double>(), j["h"].get<double>(), j["l"].get<double>(),
                  j["yaw"].get<double>());
        auto probs = j["probs"].get<std::vector<double>>();
        int cat = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
        out.labels.push_back(GtBox{box, cat});
        if (first) {
            out.teacher_iteration = j["provenance"]["teacher_iteration"].get<std::int64_t>();
            out.beta = j["provenance"]["beta"].get<double>();
            first = false;
        }
    }
    return out;
}

}  // namespace awda::match
