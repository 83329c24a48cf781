#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "wsseg/mat.hpp"
#include "wsseg/params.hpp"

namespace wsseg {

// Handle into a Graph. Carries the shape so callers can wire ops without
// touching node storage.
struct TensorRef {
    int id = -1;
    int rows = 0;
    int cols = 0;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One Graph per forward pass; nodes are created in
// topological order, so backward() is a single reverse sweep. Parameter
// leaves are bound to their Param and receive accumulated gradients at the
// end of backward().
class Graph {
public:
    TensorRef input(Mat value);
    TensorRef param(Param& p);

    // c = a + b (same shape)
    TensorRef add(TensorRef a, TensorRef b);
    // c = a + row-broadcast bias [1 x n]
    TensorRef add_rowvec(TensorRef a, TensorRef bias);
    // c = s * a, constant s
    TensorRef scale(TensorRef a, double s);
    // c = a .* b (same shape)
    TensorRef hadamard(TensorRef a, TensorRef b);
    // c = s * a where s is a [1x1] tensor (learnable scalar)
    TensorRef mul_scalar(TensorRef a, TensorRef s);

    TensorRef matmul(TensorRef a, TensorRef b);      // a * b
    TensorRef matmul_nt(TensorRef a, TensorRef b);   // a * b^T
    TensorRef transpose_of(TensorRef a);             // a^T

    TensorRef relu(TensorRef a);
    TensorRef gelu(TensorRef a);
    TensorRef row_softmax(TensorRef a);
    TensorRef layer_norm(TensorRef a, TensorRef gamma, TensorRef beta, double eps = 1e-5);

    TensorRef slice_cols(TensorRef a, int c0, int c1);
    TensorRef concat_cols(TensorRef a, TensorRef b);
    // [h*w x c] tokens -> [(h/p)*(w/p) x p*p*c], non-overlapping p x p patches
    TensorRef patchify(TensorRef a, int h, int w, int p);
    // [h*w x c] -> [(h/r)*(w/r) x c], mean over r x r cells
    TensorRef avg_pool_tokens(TensorRef a, int h, int w, int r);
    // [1 x c] -> [n x c]
    TensorRef broadcast_row(TensorRef v, int n);
    // [n x c] -> [1 x c] column-wise max; subgradient to first argmax row
    TensorRef global_max_rows(TensorRef a);

    // Multi-label BCE with sigmoid, numerically stable, mean over classes.
    // logits: [1 x K]; target entries in {0, 1}.
    TensorRef multilabel_bce(TensorRef logits, const std::vector<double>& target);
    // Softmax cross-entropy over the columns of a [1 x n] logit row.
    TensorRef softmax_ce(TensorRef logits, const std::vector<double>& onehot);

    const Mat& value(TensorRef t) const { return nodes_[t.id].value; }
    const Mat& grad(TensorRef t) const { return nodes_[t.id].grad; }

    // Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse, then adds the
    // leaf gradients into their bound Params.
    void backward(TensorRef scalar_loss);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        std::function<void(Graph&)> backprop;
    };

    TensorRef make(Mat value, bool needs_grad, std::function<void(Graph&)> backprop);
    Mat& grad_of(int id) { return nodes_[id].grad; }
    bool needs(TensorRef t) const { return nodes_[t.id].needs_grad; }

    std::vector<Node> nodes_;
    std::vector<std::pair<int, Param*>> bindings_;
    std::map<const Param*, int> param_nodes_;
};

}  // namespace wsseg
