#pragma once

#include <string>
#include <vector>

#include "awda/core.hpp"

namespace awda::metrics {

struct CenterMatch {
    int pred = -1;
    int gt = -1;
    double distance = 0;
};

// Greedy confidence-descending matching within one frame: each prediction
// takes the nearest unmatched same-category ground truth within the
// ground-plane distance threshold.
std::vector<CenterMatch> match_by_center_distance(const std::vector<Detection>& preds,
                                                  const std::vector<GtBox>& gts,
                                                  double threshold);

// Area under the precision-recall curve via the 101-point interpolation.
// outcomes holds (confidence, is_true_positive) for every prediction of one
// category at one threshold; n_gt > 0.
double average_precision(std::vector<std::pair<double, bool>> outcomes, int n_gt);

struct EvalInput {
    std::vector<std::vector<Detection>> pred_frames;
    std::vector<std::vector<GtBox>> gt_frames;  // same length as pred_frames
    int n_categories = 0;
};

struct EvalResult {
    std::vector<double> thresholds;
    std::vector<std::vector<double>> ap;  // [category][threshold]
    std::vector<bool> category_has_gt;    // categories without ground truth are excluded
    double mean_ap = 0;
    double mate = 0;  // mean center distance of true positives at the 2 m threshold
    int mate_matches = 0;

    std::string to_json() const;
};

inline const std::vector<double>& default_thresholds() {
    static const std::vector<double> t = {0.5, 1.0, 2.0, 4.0};
    return t;
}

EvalResult evaluate(const EvalInput& input,
                    const std::vector<double>& thresholds = default_thresholds());

// CSV rows (domain, predicted class, confidence, feature columns) for
// external embedding tools.
void export_features(const std::string& path, const std::vector<QueryBatch>& batches);

}  // namespace awda::metrics
