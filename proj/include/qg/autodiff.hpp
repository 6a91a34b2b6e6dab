#pragma once

#include <functional>
#include <vector>

#include "qg/params.hpp"
#include "qg/tensor.hpp"

namespace qg {

// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended during the forward pass; creation
// order is the topological order used by backward(). Gradients of parameter
// leaves accumulate directly into their ParamStore grad buffers, so several
// backward passes (micro-batches) sum naturally.
class Tape {
public:
    // Leaves.
    Var constant(Tensor v);
    Var param(ParamStore& store, int entry);         // grads sink into the store
    Var leaf(const Tensor& v);                       // view; grads are discarded

    // Ops. All enforce shapes via the tensor core.
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a @ b^T
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_row_bias(Var x, Var bias);
    Var gelu(Var x);
    Var layer_norm(Var x, Var gain, Var bias);  // rows; eps 1e-5
    // softmax over rows of (x + add_mask); add_mask may be null.
    Var softmax_rows(Var x, const Tensor* add_mask = nullptr);
    Var embedding(Var table, std::vector<int> ids);
    Var slice_cols(Var x, int c0, int c1);
    Var concat_cols(const std::vector<Var>& xs);
    Var mul_mask(Var x, Tensor mask);  // elementwise by a constant mask

    // Scalar node = sum over unmasked steps of log softmax(logits_t)[targets_t].
    // pad_mask[t] == true excludes the step. per_step_out, when given, receives
    // the per-step log-probabilities (0 at masked steps).
    Var sequence_log_prob(Var logits, std::vector<int> targets, std::vector<bool> pad_mask = {},
                          std::vector<double>* per_step_out = nullptr);

    // Scalar node = mean over included positions of the binary cross-entropy
    // of logits z [T,1] against labels.
    Var bce_with_logits(Var z, std::vector<bool> labels, std::vector<bool> include);

    const Tensor& value(Var v) const;
    Tensor& grad(Var v);  // allocated on first access

    // Seeds d(loss)/d(loss) = seed and propagates. Throws if the tape is
    // empty or the node is not a scalar.
    void backward(Var loss, double seed = 1.0);

    void reset();
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor value;                      // owned unless view != nullptr
        const Tensor* view = nullptr;      // leaf view (params, borrowed tensors)
        Tensor grad;                       // lazily allocated
        Tensor* grad_sink = nullptr;       // param leaves accumulate here
        std::function<void(Tape&)> back;   // empty for leaves
    };

    int push(Tensor value, std::function<void(Tape&)> back);
    Node& node(Var v);
    const Node& node(Var v) const;
    void check(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace qg
