#pragma once

#include <optional>
#include <string>
#include <vector>

#include "awda/ad.hpp"
#include "awda/core.hpp"
#include "awda/params.hpp"
#include "awda/util.hpp"

namespace awda::align {

// Per-category mean of L2-normalized features over confident queries of that
// predicted category. Centers are means of unit vectors and are not
// re-normalized. A category is present iff its count is positive.
struct ClassCenters {
    int n_categories = 0;
    int feat_dim = 0;
    Domain domain = Domain::Source;
    std::vector<std::vector<double>> centers;  // empty vector when absent
    std::vector<int> counts;                   // n_k
    int zero_norm_skipped = 0;

    bool has(int k) const { return counts[k] > 0; }
};

// Queries with confidence < gamma are masked out; zero-norm feature rows are
// excluded and counted.
ClassCenters class_centers(const QueryBatch& queries, double gamma);

// Per-category running prototype c_k and accumulated sample count S_k. The
// prototype update is a pure bookkeeping rule; no gradient flows into it.
struct GlobalClassMemory {
    int n_categories = 0;
    int feat_dim = 0;
    std::vector<std::vector<double>> prototypes;
    std::vector<long long> counts;  // S_k

    static GlobalClassMemory create(int n_categories, int feat_dim);
    bool has(int k) const { return counts[k] > 0; }
};

// Per present category: c <- (1 - n/(n+S)) * c + (n/(n+S)) * c_batch, then
// S <- S + n. The first observation copies the batch center exactly.
GlobalClassMemory memory_update(const GlobalClassMemory& mem, const ClassCenters& centers);

// MLP domain discriminator: D -> hidden (relu) -> 1 (sigmoid).
struct DiscriminatorDims {
    int in_dim = 0;
    int hidden = 64;
};

// Adds disc parameters (<prefix>/w1, b1, w2, b2) to the bag.
void init_discriminator(ParamBag& bag, const std::string& prefix, const DiscriminatorDims& dims,
                        RngStream& rng);

struct DiscriminatorVars {
    ad::Var w1, b1, w2, b2;
};

DiscriminatorVars discriminator_vars(const ParamBag& bag, const BoundParams& bound,
                                     const std::string& prefix);

// Sigmoid probability for one 1 x D input row.
ad::Var discriminator_prob(ad::Tape& tape, const DiscriminatorVars& disc, ad::Var x);

// Graph-side class centers: same masking and arithmetic as class_centers but
// producing tape nodes, so alignment losses backpropagate into the features.
struct CenterVars {
    int n_categories = 0;
    Domain domain = Domain::Source;
    std::vector<std::optional<ad::Var>> centers;  // 1 x D nodes
    std::vector<int> counts;
    int zero_norm_skipped = 0;

    bool has(int k) const { return centers[k].has_value(); }
};

// meta supplies the value-level logits used for the confidence mask;
// features is the graph node carrying the same rows as meta.features.
CenterVars build_center_graph(ad::Tape& tape, ad::Var features, const QueryBatch& meta,
                              double gamma);

// CenterVars with leaf centers, for standalone loss evaluation.
CenterVars centers_to_vars(ad::Tape& tape, const ClassCenters& centers);

// Binary cross-entropy of one probability node against label d in {0,1},
// with the probability floored at 1e-12 inside the logs.
ad::Var bce_from_prob(ad::Tape& tape, ad::Var prob, int label);

struct AdvLossResult {
    ad::Var loss;
    int terms = 0;
    bool empty = false;  // set when neither domain contributed a center
};

// Every present center passes through GRL then the discriminator; BCE terms
// (label 0 source, 1 target) are summed. Categories absent in a domain
// contribute no term for that domain. use_grl=false swaps the reversal for
// identity; finite-difference checks need that variant because the reversal
// is intentionally not the derivative of its forward pass.
AdvLossResult domain_adversarial_loss(ad::Tape& tape, const CenterVars& src,
                                      const CenterVars& tgt, const DiscriminatorVars& disc,
                                      bool use_grl = true);

struct ContrastiveResult {
    ad::Var loss;
    int terms = 0;
    int skipped = 0;  // categories present in centers but absent from memory
};

// Temperature-scaled cosine similarities of each present batch center against
// all memory prototypes, softmax over prototype categories, cross-entropy
// against the center's own category. tau must be > 0.
ContrastiveResult contrastive_loss(ad::Tape& tape, const CenterVars& centers,
                                   const GlobalClassMemory& mem, double tau);

}  // namespace awda::align
