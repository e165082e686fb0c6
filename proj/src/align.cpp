#include "awda/align.hpp"

#include <algorithm>
#include <cmath>

namespace awda::align {

namespace {

struct QueryMask {
    // Confident, nonzero-norm query indices per category.
    std::vector<std::vector<int>> by_category;
    int zero_norm_skipped = 0;
};

QueryMask confident_queries(const QueryBatch& q, double gamma) {
    require(gamma >= 0 && gamma <= 1, "class centers: gamma must be in [0,1]");
    q.validate();
    QueryMask mask;
    mask.by_category.resize(q.n_categories);
    for (int i = 0; i < q.n_queries; ++i) {
        std::vector<double> row(q.logit_row(i), q.logit_row(i) + q.n_categories);
        std::vector<double> probs = softmax(row);
        auto it = std::max_element(probs.begin(), probs.end());
        if (*it < gamma) continue;
        double nrm2 = 0;
        for (int c = 0; c < q.feat_dim; ++c) nrm2 += q.feature_row(i)[c] * q.feature_row(i)[c];
        if (!(nrm2 > 0)) {
            ++mask.zero_norm_skipped;
            continue;
        }
        mask.by_category[static_cast<int>(it - probs.begin())].push_back(i);
    }
    return mask;
}

}  // namespace

ClassCenters class_centers(const QueryBatch& queries, double gamma) {
    QueryMask mask = confident_queries(queries, gamma);
    ClassCenters out;
    out.n_categories = queries.n_categories;
    out.feat_dim = queries.feat_dim;
    out.domain = queries.domain;
    out.centers.resize(queries.n_categories);
    out.counts.assign(queries.n_categories, 0);
    out.zero_norm_skipped = mask.zero_norm_skipped;
    for (int k = 0; k < queries.n_categories; ++k) {
        const auto& idx = mask.by_category[k];
        if (idx.empty()) continue;
        std::vector<double> acc(queries.feat_dim, 0.0);
        for (int i : idx) {
            const double* f = queries.feature_row(i);
            double nrm = 0;
            for (int c = 0; c < queries.feat_dim; ++c) nrm += f[c] * f[c];
            nrm = std::sqrt(nrm);
            for (int c = 0; c < queries.feat_dim; ++c) acc[c] += f[c] / nrm;
        }
        for (double& v : acc) v /= static_cast<double>(idx.size());
        out.centers[k] = std::move(acc);
        out.counts[k] = static_cast<int>(idx.size());
    }
    return out;
}

GlobalClassMemory GlobalClassMemory::create(int n_categories, int feat_dim) {
    GlobalClassMemory m;
    m.n_categories = n_categories;
    m.feat_dim = feat_dim;
    m.prototypes.assign(n_categories, {});
    m.counts.assign(n_categories, 0);
    return m;
}

GlobalClassMemory memory_update(const GlobalClassMemory& mem, const ClassCenters& centers) {
    require(mem.n_categories == centers.n_categories, "memory_update: category count mismatch");
    require(mem.feat_dim == centers.feat_dim, "memory_update: feature dimension mismatch");
    GlobalClassMemory out = mem;
    for (int k = 0; k < mem.n_categories; ++k) {
        if (!centers.has(k)) continue;
        long long n = centers.counts[k];
        long long s = mem.counts[k];
        if (s == 0) {
            out.prototypes[k] = centers.centers[k];
        } else {
            double w = static_cast<double>(n) / static_cast<double>(n + s);
            for (int c = 0; c < mem.feat_dim; ++c)
                out.prototypes[k][c] = (1.0 - w) * mem.prototypes[k][c] + w * centers.centers[k][c];
        }
        out.counts[k] = s + n;
    }
    return out;
}

void init_discriminator(ParamBag& bag, const std::string& prefix, const DiscriminatorDims& dims,
                        RngStream& rng) {
    require(dims.in_dim > 0 && dims.hidden > 0, "init_discriminator: bad dimensions");
    ad::Tensor w1(dims.in_dim, dims.hidden);
    double s1 = 1.0 / std::sqrt(static_cast<double>(dims.in_dim));
    for (int i = 0; i < w1.size(); ++i) w1[i] = s1 * rng.normal();
    ad::Tensor w2(dims.hidden, 1);
    double s2 = 1.0 / std::sqrt(static_cast<double>(dims.hidden));
    for (int i = 0; i < w2.size(); ++i) w2[i] = s2 * rng.normal();
    bag.add(prefix + "/w1", std::move(w1));
    bag.add(prefix + "/b1", ad::Tensor(1, dims.hidden, 0.0));
    bag.add(prefix + "/w2", std::move(w2));
    bag.add(prefix + "/b2", ad::Tensor(1, 1, 0.0));
}

DiscriminatorVars discriminator_vars(const ParamBag& bag, const BoundParams& bound,
                                     const std::string& prefix) {
    auto at = [&](const std::string& name) {
        int i = bag.index_of(prefix + "/" + name);
        require(i >= 0, "discriminator_vars: missing " + prefix + "/" + name);
        return bound.vars[i];
    };
    return DiscriminatorVars{at("w1"), at("b1"), at("w2"), at("b2")};
}

ad::Var discriminator_prob(ad::Tape& tape, const DiscriminatorVars& disc, ad::Var x) {
    ad::Var h = tape.relu(tape.add(tape.matmul(x, disc.w1), disc.b1));
    ad::Var z = tape.add(tape.matmul(h, disc.w2), disc.b2);
    return tape.sigmoid(z);
}

CenterVars build_center_graph(ad::Tape& tape, ad::Var features, const QueryBatch& meta,
                              double gamma) {
    QueryMask mask = confident_queries(meta, gamma);
    CenterVars out;
    out.n_categories = meta.n_categories;
    out.domain = meta.domain;
    out.centers.resize(meta.n_categories);
    out.counts.assign(meta.n_categories, 0);
    out.zero_norm_skipped = mask.zero_norm_skipped;
    for (int k = 0; k < meta.n_categories; ++k) {
        const auto& idx = mask.by_category[k];
        if (idx.empty()) continue;
        ad::Var rows = tape.gather_rows(features, idx);
        ad::Var unit = tape.l2_normalize_rows(rows);
        out.centers[k] = tape.mean_rows(unit);
        out.counts[k] = static_cast<int>(idx.size());
    }
    return out;
}

CenterVars centers_to_vars(ad::Tape& tape, const ClassCenters& centers) {
    CenterVars out;
    out.n_categories = centers.n_categories;
    out.domain = centers.domain;
    out.centers.resize(centers.n_categories);
    out.counts = centers.counts;
    out.zero_norm_skipped = centers.zero_norm_skipped;
    for (int k = 0; k < centers.n_categories; ++k)
        if (centers.has(k)) out.centers[k] = tape.leaf(ad::Tensor::row(centers.centers[k]));
    return out;
}

ad::Var bce_from_prob(ad::Tape& tape, ad::Var prob, int label) {
    require(label == 0 || label == 1, "bce_from_prob: label must be 0 or 1");
    constexpr double kFloor = 1e-12;
    if (label == 1)
        return tape.mul_scalar(tape.log(tape.clamp_min(prob, kFloor)), -1.0);
    ad::Var one_minus = tape.add_scalar(tape.mul_scalar(prob, -1.0), 1.0);
    return tape.mul_scalar(tape.log(tape.clamp_min(one_minus, kFloor)), -1.0);
}

AdvLossResult domain_adversarial_loss(ad::Tape& tape, const CenterVars& src,
                                      const CenterVars& tgt, const DiscriminatorVars& disc,
                                      bool use_grl) {
    AdvLossResult out;
    std::optional<ad::Var> acc;
    for (const CenterVars* cv : {&src, &tgt}) {
        int label = adversarial_label(cv->domain);
        for (int k = 0; k < cv->n_categories; ++k) {
            if (!cv->has(k)) continue;
            ad::Var in = use_grl ? tape.grl(*cv->centers[k]) : *cv->centers[k];
            ad::Var p = discriminator_prob(tape, disc, in);
            ad::Var term = bce_from_prob(tape, p, label);
            acc = acc ? tape.add(*acc, term) : term;
            ++out.terms;
        }
    }
    if (!acc) {
        out.empty = true;
        out.loss = tape.leaf(ad::Tensor::scalar(0.0));
    } else {
        out.loss = *acc;
    }
    return out;
}

ContrastiveResult contrastive_loss(ad::Tape& tape, const CenterVars& centers,
                                   const GlobalClassMemory& mem, double tau) {
    require(tau > 0, "contrastive_loss: tau must be > 0");
    require(centers.n_categories == mem.n_categories, "contrastive_loss: category count mismatch");

    std::vector<int> mem_classes;
    for (int k = 0; k < mem.n_categories; ++k)
        if (mem.has(k)) mem_classes.push_back(k);

    ContrastiveResult out;
    std::optional<ad::Var> acc;
    for (int k = 0; k < centers.n_categories; ++k) {
        if (!centers.has(k)) continue;
        auto pos = std::find(mem_classes.begin(), mem_classes.end(), k);
        if (pos == mem_classes.end()) {
            ++out.skipped;
            continue;
        }
        std::optional<ad::Var> simrow;
        for (int j : mem_classes) {
            ad::Var proto = tape.leaf(ad::Tensor::row(mem.prototypes[j]));
            ad::Var s = tape.cosine_similarity(*centers.centers[k], proto);
            simrow = simrow ? tape.concat_cols(*simrow, s) : s;
        }
        ad::Var probs = tape.softmax_rows(tape.mul_scalar(*simrow, 1.0 / tau));
        ad::Var term = tape.mul_scalar(
            tape.log(tape.pick(probs, 0, static_cast<int>(pos - mem_classes.begin()))), -1.0);
        acc = acc ? tape.add(*acc, term) : term;
        ++out.terms;
    }
    out.loss = acc ? *acc : tape.leaf(ad::Tensor::scalar(0.0));
    return out;
}

}  // namespace awda::align
