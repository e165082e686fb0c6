#include "awda/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "awda/util.hpp"

namespace awda {

bool is_target(Domain d) { return d != Domain::Source; }

int adversarial_label(Domain d) { return is_target(d) ? 1 : 0; }

std::string domain_name(Domain d) {
    switch (d) {
        case Domain::Source: return "source";
        case Domain::TargetNight: return "night";
        case Domain::TargetRain: return "rain";
        case Domain::TargetHaze: return "haze";
    }
    throw std::invalid_argument("domain_name: bad enum value");
}

Domain domain_from_name(const std::string& name) {
    if (name == "source") return Domain::Source;
    if (name == "night") return Domain::TargetNight;
    if (name == "rain") return Domain::TargetRain;
    if (name == "haze") return Domain::TargetHaze;
    throw std::invalid_argument("unknown domain: " + name);
}

double normalize_yaw(double angle) {
    require(std::isfinite(angle), "normalize_yaw: non-finite angle");
    constexpr double two_pi = 6.283185307179586476925286766559;
    constexpr double pi = 3.1415926535897932384626433832795;
    double a = std::fmod(angle + pi, two_pi);
    if (a < 0) a += two_pi;
    return a - pi;
}

Box3D::Box3D(double x, double y, double z, double w, double h, double l, double yaw)
    : x(x), y(y), z(z), w(w), h(h), l(l) {
    for (double v : {x, y, z, w, h, l, yaw})
        require(std::isfinite(v), "Box3D: non-finite field");
    require(w > 0 && h > 0 && l > 0, "Box3D: extents must be positive");
    this->yaw = normalize_yaw(yaw);
}

Detection::Detection(Box3D box_, std::vector<double> probs_) : box(box_), probs(std::move(probs_)) {
    require(!probs.empty(), "Detection: empty probability vector");
    double sum = 0;
    for (double p : probs) {
        require(std::isfinite(p) && p >= 0, "Detection: probabilities must be finite and >= 0");
        sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-6, "Detection: probabilities must sum to 1");
    auto it = std::max_element(probs.begin(), probs.end());
    confidence = *it;
    category = static_cast<int>(it - probs.begin());
}

std::vector<double> softmax(const std::vector<double>& logits) {
    require(!logits.empty(), "softmax: empty logits");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits) {
        require(std::isfinite(v), "softmax: non-finite logit");
        mx = std::max(mx, v);
    }
    std::vector<double> out(logits.size());
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

Detection detection_from_logits(const std::vector<double>& logits, const Box3D& box) {
    return Detection(box, softmax(logits));
}

void LabeledFrame::validate(int n_categories) const {
    for (const auto& gt : labels)
        require(gt.category >= 0 && gt.category < n_categories, "LabeledFrame: category out of range");
    if (domain == Domain::Source)
        require(!labels.empty(), "LabeledFrame: source frames carry labels");
}

void QueryBatch::validate() const {
    require(n_queries > 0 && feat_dim > 0 && n_categories > 0, "QueryBatch: bad dimensions");
    require(features.size() == static_cast<std::size_t>(n_queries) * feat_dim, "QueryBatch: feature size mismatch");
    require(logits.size() == static_cast<std::size_t>(n_queries) * n_categories, "QueryBatch: logit size mismatch");
    require(boxes.size() == static_cast<std::size_t>(n_queries), "QueryBatch: box count mismatch");
}

std::string box_record_to_json(const BoxRecord& rec) {
    nlohmann::json j;
    j["x"] = rec.box.x;
    j["y"] = rec.box.y;
    j["z"] = rec.box.z;
    j["w"] = rec.box.w;
    j["h"] = rec.box.h;
    j["l"] = rec.box.l;
    j["yaw"] = rec.box.yaw;
    j["probs"] = rec.probs;
    j["domain"] = domain_name(rec.domain);
    j["frame"] = rec.frame;
    j["kind"] = rec.kind;
    return j.dump();
}

BoxRecord box_record_from_json(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    for (const char* key : {"x", "y", "z", "w", "h", "l", "yaw", "probs", "domain", "kind"})
        if (!j.contains(key)) throw std::invalid_argument(std::string("record missing field: ") + key);
    BoxRecord rec;
    rec.box = Box3D(j["x"].get<double>(), j["y"].get<double>(), j["z"].get<double>(),
                    j["w"].get<double>(), j["h"].get<double>(), j["l"].get<double>(),
                    j["yaw"].get<double>());
    rec.probs = j["probs"].get<std::vector<double>>();
    rec.domain = domain_from_name(j["domain"].get<std::string>());
    rec.frame = j.value("frame", std::int64_t{0});
    rec.kind = j["kind"].get<std::string>();
    return rec;
}

std::vector<BoxRecord> read_jsonl(const std::string& path, const std::string& expected_kind) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<BoxRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        BoxRecord rec = box_record_from_json(line);
        if (!expected_kind.empty() && rec.kind != expected_kind)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected kind \"" +
                                        expected_kind + "\", found \"" + rec.kind + "\"");
        out.push_back(std::move(rec));
    }
    return out;
}

void write_jsonl(const std::string& path, const std::vector<BoxRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& rec : records) out << box_record_to_json(rec) << "\n";
}

BoxRecord record_from_detection(const Detection& det, Domain domain, std::int64_t frame) {
    BoxRecord rec;
    rec.box = det.box;
    rec.probs = det.probs;
    rec.domain = domain;
    rec.frame = frame;
    rec.kind = "prediction";
    return rec;
}

BoxRecord record_from_label(const GtBox& gt, int n_categories, Domain domain, std::int64_t frame) {
    BoxRecord rec;
    rec.box = gt.box;
    rec.probs.assign(n_categories, 0.0);
    rec.probs.at(gt.category) = 1.0;
    rec.domain = domain;
    rec.frame = frame;
    rec.kind = "label";
    return rec;
}

}  // namespace awda
