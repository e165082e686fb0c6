#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

namespace awda::ad {

// Dense row-major tensor, rank <= 2. A row vector is 1 x n, a scalar 1 x 1.
class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols, double fill = 0.0);
    Tensor(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor scalar(double v);
    static Tensor row(const std::vector<double>& v);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int size() const { return rows_ * cols_; }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& at(int r, int c) { return d_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return d_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](int i) { return d_[i]; }
    double operator[](int i) const { return d_[i]; }

    double* data() { return d_.data(); }
    const double* data() const { return d_.data(); }

    bool all_finite() const;

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> d_;
};

// Handle to a node on a tape.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Records one forward pass; backward() traverses the records in reverse and
// accumulates exact analytic adjoints. A tape is consumed by backward() and
// rejects a second pass, so gradients cannot silently accumulate across
// steps. Single-threaded for its lifetime.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Var leaf(Tensor value);

    const Tensor& value(Var v) const;
    // Valid after backward(); zero tensor for nodes the root does not reach.
    const Tensor& grad(Var v) const;

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var div(Var a, Var b);  // elementwise
    Var add_scalar(Var a, double s);
    Var mul_scalar(Var a, double s);
    Var matmul(Var a, Var b);
    Var relu(Var a);
    Var abs(Var a);
    Var exp(Var a);
    Var log(Var a);  // entries must be positive
    Var sigmoid(Var a);
    Var softmax_rows(Var a);
    Var l2_normalize_rows(Var a);  // rows must have positive norm
    Var cosine_similarity(Var a, Var b);  // same shape, treated as flat vectors -> 1x1
    Var concat_rows(Var a, Var b);
    Var concat_cols(Var a, Var b);
    Var gather_rows(Var a, std::vector<int> rows);
    Var mean_rows(Var a);  // 1 x cols
    Var sum(Var a);        // 1 x 1
    Var pick(Var a, int r, int c);  // 1 x 1
    Var clamp_min(Var a, double m);
    Var minimum(Var a, Var b);  // elementwise
    Var maximum(Var a, Var b);  // elementwise

    // Identity forward, negated gradient backward.
    Var grl(Var a);

    // Generic node; public so callers can define custom operations.
    Var push_node(Tensor value, std::vector<int> parents, BackwardFn back);

    // root must be scalar (1x1). Throws if the tape was already consumed.
    void backward(Var root);
    bool consumed() const { return consumed_; }

    int node_count() const { return static_cast<int>(nodes_.size()); }

    Tensor& grad_mut(int idx);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        bool grad_live = false;
        std::vector<int> parents;
        BackwardFn back;
    };

    const Node& node(Var v) const;
    void ensure_grad(int idx);

    std::vector<Node> nodes_;
    bool consumed_ = false;
    static const Tensor zero_;
};

// Compares the reverse-mode gradient of build(tape, leaf(x)) against central
// finite differences with the given step. Returns the max over coordinates of
// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|). Throws if any evaluation is
// non-finite.
double grad_check(const std::function<Var(Tape&, Var)>& build, const Tensor& x, double step);

}  // namespace awda::ad
