#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace awda {

// Domain of a frame or query batch. The adversarial label is 0 for Source
// and 1 for any target condition.
enum class Domain { Source, TargetNight, TargetRain, TargetHaze };

bool is_target(Domain d);
int adversarial_label(Domain d);
std::string domain_name(Domain d);
Domain domain_from_name(const std::string& name);

// Maps any finite angle into [-pi, pi). Rejects non-finite input.
double normalize_yaw(double angle);

// Oriented 3D box: center (x, y, z), extents (w, h, l) all positive, yaw
// normalized into [-pi, pi). Immutable value type.
struct Box3D {
    double x = 0, y = 0, z = 0;
    double w = 0, h = 0, l = 0;
    double yaw = 0;

    Box3D() = default;
    Box3D(double x, double y, double z, double w, double h, double l, double yaw);

    double volume() const { return w * h * l; }
};

// A box with a per-category probability vector (entries >= 0, sum 1 within
// 1e-6) and confidence = max(probs).
struct Detection {
    Box3D box;
    std::vector<double> probs;
    double confidence = 0;
    int category = 0;  // argmax of probs

    Detection() = default;
    Detection(Box3D box, std::vector<double> probs);
};

// softmax(logits) -> Detection. Probabilities computed with the max-shift
// for stability.
Detection detection_from_logits(const std::vector<double>& logits, const Box3D& box);

std::vector<double> softmax(const std::vector<double>& logits);

struct GtBox {
    Box3D box;
    int category = 0;
};

// One frame: a scene/image reference, ground truth (may be empty for target
// frames), and its domain.
struct LabeledFrame {
    std::string ref;
    std::vector<GtBox> labels;
    Domain domain = Domain::Source;

    void validate(int n_categories) const;
};

// Per-query detector outputs for one frame: N_Q feature rows of dimension D,
// N_Q x K category logits, and N_Q decoded boxes.
struct QueryBatch {
    int n_queries = 0;
    int feat_dim = 0;
    int n_categories = 0;
    std::vector<double> features;  // n_queries x feat_dim, row-major
    std::vector<double> logits;    // n_queries x n_categories, row-major
    std::vector<Box3D> boxes;
    Domain domain = Domain::Source;

    const double* feature_row(int q) const { return features.data() + static_cast<std::size_t>(q) * feat_dim; }
    const double* logit_row(int q) const { return logits.data() + static_cast<std::size_t>(q) * n_categories; }
    void validate() const;
};

// JSON-lines records {x,y,z,w,h,l,yaw,probs:[...],domain:...} plus a frame
// index and a kind discriminator ("prediction" | "label") so files cannot be
// swapped silently.
struct BoxRecord {
    Box3D box;
    std::vector<double> probs;
    Domain domain = Domain::Source;
    std::int64_t frame = 0;
    std::string kind;  // "prediction" or "label"
};

std::string box_record_to_json(const BoxRecord& rec);
BoxRecord box_record_from_json(const std::string& line);

std::vector<BoxRecord> read_jsonl(const std::string& path, const std::string& expected_kind);
void write_jsonl(const std::string& path, const std::vector<BoxRecord>& records);

BoxRecord record_from_detection(const Detection& det, Domain domain, std::int64_t frame);
BoxRecord record_from_label(const GtBox& gt, int n_categories, Domain domain, std::int64_t frame);

}  // namespace awda
