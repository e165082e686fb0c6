#include "awda/ad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "awda/kernels.hpp"
#include "awda/util.hpp"

namespace awda::ad {

const Tensor Tape::zero_ = Tensor(1, 1, 0.0);

Tensor::Tensor(int rows, int cols, double fill) : rows_(rows), cols_(cols) {
    require(rows > 0 && cols > 0, "Tensor: dimensions must be positive");
    d_.assign(static_cast<std::size_t>(rows) * cols, fill);
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = static_cast<int>(rows.size());
    require(rows_ > 0, "Tensor: empty initializer");
    cols_ = static_cast<int>(rows.begin()->size());
    require(cols_ > 0, "Tensor: empty row");
    d_.reserve(static_cast<std::size_t>(rows_) * cols_);
    for (const auto& r : rows) {
        require(static_cast<int>(r.size()) == cols_, "Tensor: ragged initializer");
        d_.insert(d_.end(), r.begin(), r.end());
    }
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, v); }

Tensor Tensor::row(const std::vector<double>& v) {
    Tensor t(1, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), t.data());
    return t;
}

bool Tensor::all_finite() const {
    for (double v : d_)
        if (!std::isfinite(v)) return false;
    return true;
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.idx >= static_cast<int>(nodes_.size()))
        throw std::invalid_argument("Tape: invalid Var");
    return nodes_[v.idx];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    return n.grad_live ? n.grad : zero_;
}

void Tape::ensure_grad(int idx) {
    Node& n = nodes_[idx];
    if (!n.grad_live) {
        n.grad = Tensor(n.value.rows(), n.value.cols(), 0.0);
        n.grad_live = true;
    }
}

Tensor& Tape::grad_mut(int idx) {
    ensure_grad(idx);
    return nodes_[idx].grad;
}

Var Tape::push_node(Tensor value, std::vector<int> parents, BackwardFn back) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value) { return push_node(std::move(value), {}, nullptr); }

void Tape::backward(Var root) {
    if (consumed_) throw std::logic_error("Tape: backward on a consumed tape");
    const Node& r = node(root);
    require(r.value.rows() == 1 && r.value.cols() == 1, "backward: root must be scalar");
    consumed_ = true;
    grad_mut(root.idx)[0] = 1.0;
    for (int i = root.idx; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.grad_live || !n.back) continue;
        n.back(*this, i);
    }
}

// ---------------------------------------------------------------------------
// primitives

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Var Tape::add(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape(va, vb, "add");
    Tensor out = va;
    for (int i = 0; i < out.size(); ++i) out[i] += vb[i];
    return push_node(std::move(out), {a.idx, b.idx}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape(va, vb, "sub");
    Tensor out = va;
    for (int i = 0; i < out.size(); ++i) out[i] -= vb[i];
    return push_node(std::move(out), {a.idx, b.idx}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape(va, vb, "mul");
    Tensor out = va;
    for (int i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push_node(std::move(out), {a.idx, b.idx}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor &va = t.value(a), &vb = t.value(b);
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * vb[i];
            gb[i] += g[i] * va[i];
        }
    });
}

Var Tape::div(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape(va, vb, "div");
    Tensor out = va;
    for (int i = 0; i < out.size(); ++i) out[i] /= vb[i];
    return push_node(std::move(out), {a.idx, b.idx}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor &va = t.value(a), &vb = t.value(b);
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int i = 0; i < g.size(); ++i) {
            ga[i] += g[i] / vb[i];
            gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
        }
    });
}

Var Tape::add_scalar(Var a, double s) {
    Tensor out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] += s;
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var Tape::mul_scalar(Var a, double s) {
    Tensor out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] *= s;
    return push_node(std::move(out), {a.idx}, [a, s](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    if (va.cols() != vb.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    int m = va.rows(), k = va.cols(), n = vb.cols();
    Tensor out(m, n);
    kernels::mm_nn(va.data(), vb.data(), out.data(), m, k, n);
    return push_node(std::move(out), {a.idx, b.idx}, [a, b, m, k, n](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor &va = t.value(a), &vb = t.value(b);
        // dA += dC * B^T ; dB += A^T * dC
        kernels::mm_nt(g.data(), vb.data(), t.grad_mut(a.idx).data(), m, n, k, true);
        kernels::mm_tn(va.data(), g.data(), t.grad_mut(b.idx).data(), k, m, n, true);
    });
}

Var Tape::relu(Var a) {
    Tensor out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i)
            if (va[i] > 0) ga[i] += g[i];
    });
}

Var Tape::abs(Var a) {
    Tensor out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i) {
            if (va[i] > 0)
                ga[i] += g[i];
            else if (va[i] < 0)
                ga[i] -= g[i];
        }
    });
}

Var Tape::exp(Var a) {
    Tensor out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor& vo = t.value(Var{self});
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * vo[i];
    });
}

Var Tape::log(Var a) {
    const Tensor& va = value(a);
    Tensor out = va;
    for (int i = 0; i < out.size(); ++i) {
        if (!(out[i] > 0)) throw std::invalid_argument("log: non-positive entry");
        out[i] = std::log(out[i]);
    }
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
    });
}

Var Tape::sigmoid(Var a) {
    Tensor out = value(a);
    for (int i = 0; i < out.size(); ++i) {
        double x = out[i];
        out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor& vo = t.value(Var{self});
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * vo[i] * (1.0 - vo[i]);
    });
}

Var Tape::softmax_rows(Var a) {
    const Tensor& va = value(a);
    Tensor out = va;
    for (int r = 0; r < out.rows(); ++r) {
        double mx = out.at(r, 0);
        for (int c = 1; c < out.cols(); ++c) mx = std::max(mx, out.at(r, c));
        double sum = 0;
        for (int c = 0; c < out.cols(); ++c) {
            out.at(r, c) = std::exp(out.at(r, c) - mx);
            sum += out.at(r, c);
        }
        for (int c = 0; c < out.cols(); ++c) out.at(r, c) /= sum;
    }
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor& y = t.value(Var{self});
        Tensor& ga = t.grad_mut(a.idx);
        for (int r = 0; r < y.rows(); ++r) {
            double dot = 0;
            for (int c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
            for (int c = 0; c < y.cols(); ++c)
                ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
    });
}

Var Tape::l2_normalize_rows(Var a) {
    const Tensor& va = value(a);
    Tensor out = va;
    for (int r = 0; r < out.rows(); ++r) {
        double nrm2 = 0;
        for (int c = 0; c < out.cols(); ++c) nrm2 += out.at(r, c) * out.at(r, c);
        if (!(nrm2 > 0)) throw std::invalid_argument("l2_normalize_rows: zero-norm row");
        double inv = 1.0 / std::sqrt(nrm2);
        for (int c = 0; c < out.cols(); ++c) out.at(r, c) *= inv;
    }
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor& y = t.value(Var{self});
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_mut(a.idx);
        for (int r = 0; r < y.rows(); ++r) {
            double nrm = 0;
            for (int c = 0; c < y.cols(); ++c) nrm += va.at(r, c) * va.at(r, c);
            nrm = std::sqrt(nrm);
            double dot = 0;
            for (int c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
            for (int c = 0; c < y.cols(); ++c)
                ga.at(r, c) += (g.at(r, c) - y.at(r, c) * dot) / nrm;
        }
    });
}

Var Tape::cosine_similarity(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape(va, vb, "cosine_similarity");
    double dot = 0, na2 = 0, nb2 = 0;
    for (int i = 0; i < va.size(); ++i) {
        dot += va[i] * vb[i];
        na2 += va[i] * va[i];
        nb2 += vb[i] * vb[i];
    }
    if (!(na2 > 0) || !(nb2 > 0)) throw std::invalid_argument("cosine_similarity: zero-norm input");
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    double cosv = dot / (na * nb);
    return push_node(Tensor::scalar(cosv), {a.idx, b.idx}, [a, b, na, nb, cosv](Tape& t, int self) {
        double g = t.grad(Var{self})[0];
        const Tensor &va = t.value(a), &vb = t.value(b);
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int i = 0; i < va.size(); ++i) {
            ga[i] += g * (vb[i] / (na * nb) - cosv * va[i] / (na * na));
            gb[i] += g * (va[i] / (na * nb) - cosv * vb[i] / (nb * nb));
        }
    });
}

Var Tape::concat_rows(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    if (va.cols() != vb.cols()) throw std::invalid_argument("concat_rows: column mismatch");
    Tensor out(va.rows() + vb.rows(), va.cols());
    std::copy(va.data(), va.data() + va.size(), out.data());
    std::copy(vb.data(), vb.data() + vb.size(), out.data() + va.size());
    int ra = va.rows();
    return push_node(std::move(out), {a.idx, b.idx}, [a, b, ra](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int i = 0; i < ga.size(); ++i) ga[i] += g[i];
        int off = ra * g.cols();
        for (int i = 0; i < gb.size(); ++i) gb[i] += g[off + i];
    });
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    if (va.rows() != vb.rows()) throw std::invalid_argument("concat_cols: row mismatch");
    Tensor out(va.rows(), va.cols() + vb.cols());
    for (int r = 0; r < out.rows(); ++r) {
        for (int c = 0; c < va.cols(); ++c) out.at(r, c) = va.at(r, c);
        for (int c = 0; c < vb.cols(); ++c) out.at(r, va.cols() + c) = vb.at(r, c);
    }
    int ca = va.cols();
    return push_node(std::move(out), {a.idx, b.idx}, [a, b, ca](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int r = 0; r < g.rows(); ++r) {
            for (int c = 0; c < ca; ++c) ga.at(r, c) += g.at(r, c);
            for (int c = 0; c < gb.cols(); ++c) gb.at(r, c) += g.at(r, ca + c);
        }
    });
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
    const Tensor& va = value(a);
    require(!rows.empty(), "gather_rows: empty index list");
    for (int r : rows)
        require(r >= 0 && r < va.rows(), "gather_rows: index out of range");
    Tensor out(static_cast<int>(rows.size()), va.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int c = 0; c < va.cols(); ++c) out.at(static_cast<int>(i), c) = va.at(rows[i], c);
    return push_node(std::move(out), {a.idx}, [a, rows = std::move(rows)](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor& ga = t.grad_mut(a.idx);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (int c = 0; c < g.cols(); ++c) ga.at(rows[i], c) += g.at(static_cast<int>(i), c);
    });
}

Var Tape::mean_rows(Var a) {
    const Tensor& va = value(a);
    Tensor out(1, va.cols(), 0.0);
    for (int r = 0; r < va.rows(); ++r)
        for (int c = 0; c < va.cols(); ++c) out.at(0, c) += va.at(r, c);
    for (int c = 0; c < va.cols(); ++c) out.at(0, c) /= va.rows();
    int nr = va.rows();
    return push_node(std::move(out), {a.idx}, [a, nr](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor& ga = t.grad_mut(a.idx);
        for (int r = 0; r < nr; ++r)
            for (int c = 0; c < g.cols(); ++c) ga.at(r, c) += g.at(0, c) / nr;
    });
}

Var Tape::sum(Var a) {
    const Tensor& va = value(a);
    double s = 0;
    for (int i = 0; i < va.size(); ++i) s += va[i];
    return push_node(Tensor::scalar(s), {a.idx}, [a](Tape& t, int self) {
        double g = t.grad(Var{self})[0];
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Var Tape::pick(Var a, int r, int c) {
    const Tensor& va = value(a);
    require(r >= 0 && r < va.rows() && c >= 0 && c < va.cols(), "pick: index out of range");
    return push_node(Tensor::scalar(va.at(r, c)), {a.idx}, [a, r, c](Tape& t, int self) {
        t.grad_mut(a.idx).at(r, c) += t.grad(Var{self})[0];
    });
}

Var Tape::clamp_min(Var a, double m) {
    Tensor out = value(a);
    for (int i = 0; i < out.size(); ++i) out[i] = std::max(out[i], m);
    return push_node(std::move(out), {a.idx}, [a, m](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i)
            if (va[i] > m) ga[i] += g[i];
    });
}

Var Tape::minimum(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape(va, vb, "minimum");
    Tensor out = va;
    for (int i = 0; i < out.size(); ++i) out[i] = std::min(out[i], vb[i]);
    return push_node(std::move(out), {a.idx, b.idx}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor &va = t.value(a), &vb = t.value(b);
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int i = 0; i < g.size(); ++i) {
            if (va[i] <= vb[i])
                ga[i] += g[i];
            else
                gb[i] += g[i];
        }
    });
}

Var Tape::maximum(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    check_same_shape(va, vb, "maximum");
    Tensor out = va;
    for (int i = 0; i < out.size(); ++i) out[i] = std::max(out[i], vb[i]);
    return push_node(std::move(out), {a.idx, b.idx}, [a, b](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        const Tensor &va = t.value(a), &vb = t.value(b);
        Tensor &ga = t.grad_mut(a.idx), &gb = t.grad_mut(b.idx);
        for (int i = 0; i < g.size(); ++i) {
            if (va[i] >= vb[i])
                ga[i] += g[i];
            else
                gb[i] += g[i];
        }
    });
}

Var Tape::grl(Var a) {
    Tensor out = value(a);
    return push_node(std::move(out), {a.idx}, [a](Tape& t, int self) {
        const Tensor& g = t.grad(Var{self});
        Tensor& ga = t.grad_mut(a.idx);
        for (int i = 0; i < g.size(); ++i) ga[i] -= g[i];
    });
}

// ---------------------------------------------------------------------------

double grad_check(const std::function<Var(Tape&, Var)>& build, const Tensor& x, double step) {
    require(step > 0, "grad_check: step must be positive");

    Tape tape;
    Var leaf = tape.leaf(x);
    Var root = build(tape, leaf);
    const Tensor& rv = tape.value(root);
    require(rv.rows() == 1 && rv.cols() == 1, "grad_check: builder must return a scalar");
    if (!rv.all_finite()) throw std::runtime_error("grad_check: non-finite forward value");
    tape.backward(root);
    Tensor g_ad = tape.grad(leaf);
    if (!g_ad.all_finite()) throw std::runtime_error("grad_check: non-finite gradient");

    auto eval = [&](const Tensor& xp) {
        Tape t2;
        Var l2 = t2.leaf(xp);
        Var r2 = build(t2, l2);
        double v = t2.value(r2)[0];
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite perturbed value");
        return v;
    };

    double max_err = 0;
    Tensor xp = x;
    for (int i = 0; i < x.size(); ++i) {
        double orig = xp[i];
        xp[i] = orig + step;
        double fp = eval(xp);
        xp[i] = orig - step;
        double fm = eval(xp);
        xp[i] = orig;
        double g_fd = (fp - fm) / (2 * step);
        double denom = std::max({1.0, std::fabs(g_ad[i]), std::fabs(g_fd)});
        max_err = std::max(max_err, std::fabs(g_ad[i] - g_fd) / denom);
    }
    return max_err;
}

}  // namespace awda::ad
