#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qg/common.hpp"

namespace qg {

// Dense row-major tensor of doubles. All reductions run in a fixed order
// (row-major loops), so results are bit-identical across runs on the same
// platform.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);
    static Tensor from(std::vector<int> shape, std::vector<double> data);
    static Tensor scalar(double v) { return from({1}, {v}); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;
    bool all_finite() const;
    void fill(double v);

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// Core algebra. Shape mismatches throw ContractError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]@[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a @ b^T : [m,k],[n,k] -> [m,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T @ b : [k,m],[k,n] -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor transpose(const Tensor& a);  // 2-D only
// x: [m,n], bias: [n]; adds bias to every row. The only broadcast in the core.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// Row softmax with max-subtraction. Input may be 1-D (one row) or 2-D.
Tensor softmax_rows(const Tensor& x);

struct CrossEntropyResult {
    double total_nll = 0.0;
    std::vector<double> per_step_nll;
};

// logits: [T,V]; targets: length T; pad_mask[t] == true marks a PAD step that
// contributes 0. Empty pad_mask means no padding.
CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                                 const std::vector<bool>& pad_mask = {});

}  // namespace qg
