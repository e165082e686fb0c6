#include "awda/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "awda/align.hpp"
#include "awda/detector.hpp"
#include "awda/train.hpp"
#include "awda/util.hpp"

namespace awda {

namespace {

using ad::Tape;
using ad::Tensor;
using ad::Var;

Tensor random_tensor(RngStream& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
    Tensor t(rows, cols);
    for (int i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Keeps kinked ops (relu/abs/min/max/clamp) away from their kinks so the
// finite-difference window stays one-sided.
Tensor random_away_from(RngStream& rng, int rows, int cols, double margin) {
    Tensor t(rows, cols);
    for (int i = 0; i < t.size(); ++i) {
        double v = rng.uniform(margin, 1.0);
        t[i] = rng.next_double() < 0.5 ? -v : v;
    }
    return t;
}

struct Check {
    std::string name;
    double tolerance;
    // Returns max relative error for one random instance.
    std::function<double(RngStream&)> run;
};

double check_simple(RngStream& rng, const Tensor& x,
                    const std::function<Var(Tape&, Var)>& build, double step = 1e-6) {
    (void)rng;
    return ad::grad_check(build, x, step);
}

}  // namespace

GradCheckReport run_gradcheck_suite(std::uint64_t seed, int instances_per_check) {
    std::vector<Check> checks;
    constexpr double kSmooth = 1e-6;
    constexpr double kComposed = 1e-4;

    auto other = [](RngStream& rng, int r, int c) { return random_tensor(rng, r, c); };

    checks.push_back({"add", kSmooth, [&](RngStream& rng) {
        Tensor b = other(rng, 3, 4);
        return check_simple(rng, random_tensor(rng, 3, 4), [b](Tape& t, Var x) {
            return t.sum(t.add(x, t.leaf(b)));
        });
    }});
    checks.push_back({"sub", kSmooth, [&](RngStream& rng) {
        Tensor b = other(rng, 3, 4);
        return check_simple(rng, random_tensor(rng, 3, 4), [b](Tape& t, Var x) {
            return t.sum(t.sub(t.leaf(b), x));
        });
    }});
    checks.push_back({"multiply", kSmooth, [&](RngStream& rng) {
        Tensor b = other(rng, 3, 4);
        return check_simple(rng, random_tensor(rng, 3, 4), [b](Tape& t, Var x) {
            return t.sum(t.mul(x, t.mul(x, t.leaf(b))));
        });
    }});
    checks.push_back({"divide", kSmooth, [&](RngStream& rng) {
        Tensor b = random_away_from(rng, 3, 4, 0.4);
        return check_simple(rng, random_tensor(rng, 3, 4), [b](Tape& t, Var x) {
            return t.sum(t.div(x, t.leaf(b)));
        });
    }});
    checks.push_back({"scalar_ops", kSmooth, [&](RngStream& rng) {
        double a = rng.uniform(-2, 2), b = rng.uniform(0.5, 2);
        return check_simple(rng, random_tensor(rng, 2, 5), [a, b](Tape& t, Var x) {
            return t.sum(t.add_scalar(t.mul_scalar(x, b), a));
        });
    }});
    checks.push_back({"matmul", kSmooth, [&](RngStream& rng) {
        Tensor b = other(rng, 4, 3);
        return check_simple(rng, random_tensor(rng, 2, 4), [b](Tape& t, Var x) {
            return t.sum(t.matmul(x, t.leaf(b)));
        });
    }});
    checks.push_back({"matmul_rhs", kSmooth, [&](RngStream& rng) {
        Tensor a = other(rng, 3, 4);
        return check_simple(rng, random_tensor(rng, 4, 2), [a](Tape& t, Var x) {
            return t.sum(t.matmul(t.leaf(a), x));
        });
    }});
    checks.push_back({"relu", kSmooth, [&](RngStream& rng) {
        return check_simple(rng, random_away_from(rng, 3, 4, 0.1),
                            [](Tape& t, Var x) { return t.sum(t.relu(x)); });
    }});
    checks.push_back({"abs", kSmooth, [&](RngStream& rng) {
        return check_simple(rng, random_away_from(rng, 3, 4, 0.1),
                            [](Tape& t, Var x) { return t.sum(t.abs(x)); });
    }});
    checks.push_back({"exponential", kSmooth, [&](RngStream& rng) {
        return check_simple(rng, random_tensor(rng, 3, 4),
                            [](Tape& t, Var x) { return t.sum(t.exp(x)); });
    }});
    checks.push_back({"logarithm", kSmooth, [&](RngStream& rng) {
        return check_simple(rng, random_tensor(rng, 3, 4, 0.2, 2.0),
                            [](Tape& t, Var x) { return t.sum(t.log(x)); });
    }});
    checks.push_back({"sigmoid", kSmooth, [&](RngStream& rng) {
        return check_simple(rng, random_tensor(rng, 3, 4, -3, 3),
                            [](Tape& t, Var x) { return t.sum(t.sigmoid(x)); });
    }});
    checks.push_back({"softmax", kSmooth, [&](RngStream& rng) {
        Tensor w = other(rng, 2, 5);
        return check_simple(rng, random_tensor(rng, 2, 5, -2, 2), [w](Tape& t, Var x) {
            return t.sum(t.mul(t.softmax_rows(x), t.leaf(w)));
        });
    }});
    checks.push_back({"l2_normalize", kComposed, [&](RngStream& rng) {
        Tensor w = other(rng, 2, 5);
        return check_simple(rng, random_away_from(rng, 2, 5, 0.2), [w](Tape& t, Var x) {
            return t.sum(t.mul(t.l2_normalize_rows(x), t.leaf(w)));
        }, 1e-5);
    }});
    checks.push_back({"cosine_similarity", kComposed, [&](RngStream& rng) {
        Tensor b = random_away_from(rng, 1, 6, 0.2);
        return check_simple(rng, random_away_from(rng, 1, 6, 0.2), [b](Tape& t, Var x) {
            return t.cosine_similarity(x, t.leaf(b));
        }, 1e-5);
    }});
    checks.push_back({"concat", kSmooth, [&](RngStream& rng) {
        Tensor b = other(rng, 2, 4);
        Tensor w = other(rng, 5, 4);
        Tensor w2 = other(rng, 3, 7);
        return std::max(
            check_simple(rng, random_tensor(rng, 3, 4), [b, w](Tape& t, Var x) {
                return t.sum(t.mul(t.concat_rows(x, t.leaf(b)), t.leaf(w)));
            }),
            check_simple(rng, random_tensor(rng, 3, 3), [b, w2](Tape& t, Var x) {
                Tensor bb(3, 4, 0.5);
                return t.sum(t.mul(t.concat_cols(x, t.leaf(bb)), t.leaf(w2)));
            }));
    }});
    checks.push_back({"gather_mean_sum_pick", kSmooth, [&](RngStream& rng) {
        return check_simple(rng, random_tensor(rng, 4, 3), [](Tape& t, Var x) {
            Var g = t.gather_rows(x, {0, 2, 2});
            Var m = t.mean_rows(g);
            return t.add(t.sum(m), t.pick(x, 1, 1));
        });
    }});
    checks.push_back({"clamp_min", kSmooth, [&](RngStream& rng) {
        return check_simple(rng, random_away_from(rng, 3, 4, 0.1),
                            [](Tape& t, Var x) { return t.sum(t.clamp_min(x, 0.0)); });
    }});
    checks.push_back({"minimum_maximum", kSmooth, [&](RngStream& rng) {
        Tensor b(3, 4, 0.0);  // inputs stay away from 0, so ties cannot occur
        return check_simple(rng, random_away_from(rng, 3, 4, 0.1), [b](Tape& t, Var x) {
            Var lo = t.minimum(x, t.leaf(b));
            Var hi = t.maximum(x, t.leaf(b));
            return t.sum(t.add(lo, hi));
        });
    }});
    checks.push_back({"grl_chain", kSmooth, [&](RngStream& rng) {
        // L = sum(grl(x)^2); gradient must be exactly -2x.
        Tensor x = random_tensor(rng, 2, 3);
        Tape t;
        Var leaf = t.leaf(x);
        Var g = t.grl(leaf);
        Var root = t.sum(t.mul(g, g));
        t.backward(root);
        const Tensor& grad = t.grad(leaf);
        double err = 0;
        for (int i = 0; i < x.size(); ++i) {
            double expect = -2.0 * x[i];
            err = std::max(err, std::fabs(grad[i] - expect) /
                                    std::max({1.0, std::fabs(expect), std::fabs(grad[i])}));
        }
        return err;
    }});
    checks.push_back({"mlp_bce", kComposed, [&](RngStream& rng) {
        Tensor w1 = random_tensor(rng, 6, 8, -0.5, 0.5);
        Tensor w2 = random_tensor(rng, 8, 1, -0.5, 0.5);
        int label = rng.uniform_int(0, 1);
        return check_simple(rng, random_tensor(rng, 1, 6), [w1, w2, label](Tape& t, Var x) {
            Var h = t.relu(t.matmul(x, t.leaf(w1)));
            Var p = t.sigmoid(t.matmul(h, t.leaf(w2)));
            return align::bce_from_prob(t, p, label);
        }, 1e-5);
    }});
    checks.push_back({"contrastive_objective", kComposed, [&](RngStream& rng) {
        int k = 3, d = 6;
        auto mem = align::GlobalClassMemory::create(k, d);
        for (int i = 0; i < k; ++i) {
            mem.counts[i] = 2 + i;
            mem.prototypes[i].resize(d);
            for (int c = 0; c < d; ++c) mem.prototypes[i][c] = rng.uniform(-1, 1);
        }
        double tau = 0.07;
        return check_simple(rng, random_away_from(rng, 1, d, 0.2), [mem, tau, k](Tape& t, Var x) {
            align::CenterVars cv;
            cv.n_categories = k;
            cv.domain = Domain::TargetNight;
            cv.centers.resize(k);
            cv.counts.assign(k, 0);
            cv.centers[1] = x;
            cv.counts[1] = 1;
            return align::contrastive_loss(t, cv, mem, tau).loss;
        }, 1e-5);
    }});
    checks.push_back({"alignment_objective", kComposed, [&](RngStream& rng) {
        // Full objective: centers from features, GRL + discriminator BCE plus
        // contrastive terms, differentiated with respect to query features.
        int n_q = 6, d = 5, k = 3;
        QueryBatch src, tgt;
        for (QueryBatch* q : {&src, &tgt}) {
            q->n_queries = n_q;
            q->feat_dim = d;
            q->n_categories = k;
            q->features.assign(n_q * d, 0.0);
            for (int i = 0; i < n_q * k; ++i) q->logits.push_back(rng.uniform(-3, 3));
            for (int i = 0; i < n_q; ++i) q->boxes.push_back(Box3D(0, 0, 0, 1, 1, 1, 0));
        }
        src.domain = Domain::Source;
        tgt.domain = Domain::TargetHaze;
        auto mem = align::GlobalClassMemory::create(k, d);
        for (int i = 0; i < k; ++i) {
            mem.counts[i] = 3;
            mem.prototypes[i].resize(d);
            for (int c = 0; c < d; ++c) mem.prototypes[i][c] = rng.uniform(-1, 1);
        }
        ParamBag bag;
        RngStream disc_rng(rng.next_u64());
        align::init_discriminator(bag, "disc", {d, 8}, disc_rng);
        QueryBatch tgt_meta = tgt;
        Tensor tgt_feats = random_away_from(rng, n_q, d, 0.15);
        for (int i = 0; i < tgt_feats.size(); ++i) tgt_meta.features[i] = tgt_feats[i];
        QueryBatch src_meta = src;
        Tensor x0 = random_away_from(rng, n_q, d, 0.15);
        for (int i = 0; i < x0.size(); ++i) src_meta.features[i] = x0[i];

        // The reversal layer is bypassed here: its backward is the negated
        // forward derivative by definition, so it can never agree with finite
        // differences. The sign law is checked separately at 1e-12.
        return check_simple(rng, x0, [=](Tape& t, Var x) {
            BoundParams bound = bind_params(t, bag);
            auto disc = align::discriminator_vars(bag, bound, "disc");
            auto src_cv = align::build_center_graph(t, x, src_meta, 0.5);
            Var tf = t.leaf(tgt_feats);
            auto tgt_cv = align::build_center_graph(t, tf, tgt_meta, 0.5);
            Var loss = align::domain_adversarial_loss(t, src_cv, tgt_cv, disc, false).loss;
            auto con_s = align::contrastive_loss(t, src_cv, mem, 0.07);
            auto con_t = align::contrastive_loss(t, tgt_cv, mem, 0.07);
            return t.add(loss, t.add(con_s.loss, con_t.loss));
        }, 1e-5);
    }});
    checks.push_back({"detection_loss", kComposed, [&](RngStream& rng) {
        int n_q = 4, k = 3;
        std::vector<GtBox> labels;
        int n_lab = rng.uniform_int(0, 2);
        for (int j = 0; j < n_lab; ++j) {
            labels.push_back(GtBox{Box3D(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-0.5, 0.5),
                                         rng.uniform(0.8, 2.5), rng.uniform(0.8, 2.5),
                                         rng.uniform(0.8, 2.5), rng.uniform(-1.2, 1.2)),
                                   rng.uniform_int(0, k - 1)});
        }
        // One leaf carries logits and box regressions side by side; constant
        // selectors split it so the check perturbs everything at once.
        Tensor x(n_q, k + 1 + 8);
        for (int q = 0; q < n_q; ++q) {
            for (int c = 0; c < k + 1; ++c) x.at(q, c) = rng.uniform(-2, 2);
            x.at(q, k + 1 + 0) = rng.uniform(-1.5, 1.5);
            x.at(q, k + 1 + 1) = rng.uniform(-1.5, 1.5);
            x.at(q, k + 1 + 2) = rng.uniform(-0.5, 0.5);
            for (int c = 3; c < 6; ++c) x.at(q, k + 1 + c) = rng.uniform(-1.5, 1.5);
            x.at(q, k + 1 + 6) = rng.uniform(-1, 1) + (rng.next_double() < 0.5 ? -0.3 : 0.3);
            x.at(q, k + 1 + 7) = rng.uniform(-1, 1) + (rng.next_double() < 0.5 ? -0.3 : 0.3);
        }
        Tensor sel_logits(k + 1 + 8, k + 1, 0.0), sel_box(k + 1 + 8, 8, 0.0);
        for (int c = 0; c < k + 1; ++c) sel_logits.at(c, c) = 1.0;
        for (int c = 0; c < 8; ++c) sel_box.at(k + 1 + c, c) = 1.0;
        return check_simple(rng, x, [=](Tape& t, Var xx) {
            Var logits = t.matmul(xx, t.leaf(sel_logits));
            Var boxraw = t.matmul(xx, t.leaf(sel_box));
            return train::detection_loss(t, logits, boxraw, labels, k, 2.0, train::BoxDecode{});
        }, 1e-5);
    }});

    GradCheckReport report;
    for (const Check& c : checks) {
        GradCheckReport::Entry e;
        e.name = c.name;
        e.tolerance = c.tolerance;
        e.instances = instances_per_check;
        RngStream rng = RngStream::derive(seed, hash_name(c.name));
        for (int i = 0; i < instances_per_check; ++i) e.max_err = std::max(e.max_err, c.run(rng));
        e.pass = e.max_err <= e.tolerance;
        report.all_pass = report.all_pass && e.pass;
        report.entries.push_back(std::move(e));
    }
    return report;
}

void print_gradcheck_report(std::ostream& os, const GradCheckReport& report) {
    for (const auto& e : report.entries) {
        os << (e.pass ? "[PASS] " : "[FAIL] ") << e.name << ": max_rel_err=" << e.max_err
           << " tol=" << e.tolerance << " instances=" << e.instances << "\n";
    }
    os << (report.all_pass ? "all gradient checks passed\n" : "GRADIENT CHECK FAILURES\n");
}

}  // namespace awda
