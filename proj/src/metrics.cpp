#include "awda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "awda/util.hpp"

namespace awda::metrics {

std::vector<CenterMatch> match_by_center_distance(const std::vector<Detection>& preds,
                                                  const std::vector<GtBox>& gts,
                                                  double threshold) {
    require(threshold > 0, "match_by_center_distance: threshold must be > 0");
    std::vector<int> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
        return preds[i].confidence > preds[j].confidence;
    });
    std::vector<char> gt_taken(gts.size(), 0);
    std::vector<CenterMatch> matches;
    for (int pi : order) {
        const Detection& p = preds[pi];
        int best = -1;
        double best_d = threshold;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_taken[gi] || gts[gi].category != p.category) continue;
            double d = std::hypot(p.box.x - gts[gi].box.x, p.box.y - gts[gi].box.y);
            if (d <= best_d) {
                best_d = d;
                best = static_cast<int>(gi);
            }
        }
        if (best >= 0) {
            gt_taken[best] = 1;
            matches.push_back(CenterMatch{pi, best, best_d});
        }
    }
    return matches;
}

double average_precision(std::vector<std::pair<double, bool>> outcomes, int n_gt) {
    require(n_gt > 0, "average_precision: needs at least one ground truth");
    std::stable_sort(outcomes.begin(), outcomes.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> recall, precision;
    int tp = 0, fp = 0;
    for (const auto& [conf, is_tp] : outcomes) {
        if (is_tp)
            ++tp;
        else
            ++fp;
        recall.push_back(static_cast<double>(tp) / n_gt);
        precision.push_back(static_cast<double>(tp) / (tp + fp));
    }
    double total = 0;
    for (int i = 0; i <= 100; ++i) {
        double r = i / 100.0;
        double best = 0;
        for (std::size_t j = 0; j < recall.size(); ++j)
            if (recall[j] >= r) best = std::max(best, precision[j]);
        total += best;
    }
    return total / 101.0;
}

EvalResult evaluate(const EvalInput& input, const std::vector<double>& thresholds) {
    require(input.pred_frames.size() == input.gt_frames.size(),
            "evaluate: prediction/ground-truth frame count mismatch");
    require(input.n_categories > 0, "evaluate: n_categories must be positive");
    require(!thresholds.empty(), "evaluate: no thresholds");

    EvalResult res;
    res.thresholds = thresholds;
    res.ap.assign(input.n_categories, std::vector<double>(thresholds.size(), 0.0));
    res.category_has_gt.assign(input.n_categories, false);

    std::vector<int> gt_count(input.n_categories, 0);
    for (const auto& frame : input.gt_frames)
        for (const auto& gt : frame) ++gt_count[gt.category];
    for (int k = 0; k < input.n_categories; ++k) res.category_has_gt[k] = gt_count[k] > 0;

    double mate_sum = 0;
    int mate_n = 0;

    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
        double thr = thresholds[ti];
        // Within-frame matching is independent across frames, so per-frame
        // greedy matching in confidence order equals the global greedy order.
        std::vector<std::vector<std::pair<double, bool>>> outcomes(input.n_categories);
        for (std::size_t f = 0; f < input.pred_frames.size(); ++f) {
            const auto& preds = input.pred_frames[f];
            auto matches = match_by_center_distance(preds, input.gt_frames[f], thr);
            std::vector<char> is_tp(preds.size(), 0);
            for (const auto& m : matches) {
                is_tp[m.pred] = 1;
                if (thr == 2.0) {
                    mate_sum += m.distance;
                    ++mate_n;
                }
            }
            for (std::size_t pi = 0; pi < preds.size(); ++pi)
                outcomes[preds[pi].category].push_back({preds[pi].confidence, is_tp[pi] != 0});
        }
        for (int k = 0; k < input.n_categories; ++k) {
            if (!res.category_has_gt[k]) continue;
            res.ap[k][ti] = average_precision(outcomes[k], gt_count[k]);
        }
    }

    double sum = 0;
    int cells = 0;
    for (int k = 0; k < input.n_categories; ++k) {
        if (!res.category_has_gt[k]) continue;
        for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
            sum += res.ap[k][ti];
            ++cells;
        }
    }
    res.mean_ap = cells > 0 ? sum / cells : 0.0;
    res.mate_matches = mate_n;
    res.mate = mate_n > 0 ? mate_sum / mate_n : 0.0;
    return res;
}

std::string EvalResult::to_json() const {
    nlohmann::json j;
    j["thresholds"] = thresholds;
    j["map"] = mean_ap;
    j["mate"] = mate;
    j["mate_matches"] = mate_matches;
    j["ap"] = nlohmann::json::object();
    j["excluded_categories"] = nlohmann::json::array();
    for (std::size_t k = 0; k < ap.size(); ++k) {
        if (!category_has_gt[k]) {
            j["excluded_categories"].push_back(k);
            continue;
        }
        nlohmann::json per;
        for (std::size_t ti = 0; ti < thresholds.size(); ++ti)
            per[std::to_string(thresholds[ti])] = ap[k][ti];
        j["ap"][std::to_string(k)] = per;
    }
    return j.dump(2);
}

void export_features(const std::string& path, const std::vector<QueryBatch>& batches) {
    require(!batches.empty(), "export_features: no batches");
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    int d = batches.front().feat_dim;
    f << "domain,pred_class,confidence";
    for (int c = 0; c < d; ++c) f << ",f" << c;
    f << "\n";
    f.precision(17);
    for (const QueryBatch& b : batches) {
        require(b.feat_dim == d, "export_features: inconsistent feature dimension");
        for (int q = 0; q < b.n_queries; ++q) {
            std::vector<double> row(b.logit_row(q), b.logit_row(q) + b.n_categories);
            std::vector<double> probs = softmax(row);
            auto it = std::max_element(probs.begin(), probs.end());
            f << domain_name(b.domain) << "," << (it - probs.begin()) << "," << *it;
            for (int c = 0; c < d; ++c) f << "," << b.feature_row(q)[c];
            f << "\n";
        }
    }
}

}  // namespace awda::metrics
