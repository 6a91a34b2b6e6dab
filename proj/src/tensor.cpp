#include "qg/tensor.hpp"

#include <cmath>
#include <sstream>

namespace qg {

namespace {

int64_t shape_product(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ContractError("negative dimension in shape");
        n *= d;
    }
    return n;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ContractError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                        b.shape_str());
}

void require_2d(const char* op, const Tensor& t) {
    if (t.rank() != 2) {
        throw ContractError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
    }
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
    if (shape_product(shape) != static_cast<int64_t>(data.size())) {
        throw ContractError("Tensor::from: data length does not match shape");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream ss;
    ss << "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) ss << "x";
        ss << shape_[i];
    }
    ss << "]";
    return ss.str();
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d("matmul", a);
    require_2d("matmul", b);
    if (a.dim(1) != b.dim(0)) shape_error("matmul", a, b);
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    // i-k-j order: the k loop order is fixed, the j loop is contiguous.
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double aik = pa[static_cast<size_t>(i) * k + kk];
            const double* brow = pb + static_cast<size_t>(kk) * n;
            double* crow = pc + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d("matmul_nt", a);
    require_2d("matmul_nt", b);
    if (a.dim(1) != b.dim(1)) shape_error("matmul_nt", a, b);
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int i = 0; i < m; ++i) {
        const double* arow = pa + static_cast<size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            const double* brow = pb + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            pc[static_cast<size_t>(i) * n + j] = s;
        }
    }
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_2d("matmul_tn", a);
    require_2d("matmul_tn", b);
    if (a.dim(0) != b.dim(0)) shape_error("matmul_tn", a, b);
    const int k = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    for (int kk = 0; kk < k; ++kk) {
        const double* arow = pa + static_cast<size_t>(kk) * m;
        const double* brow = pb + static_cast<size_t>(kk) * n;
        for (int i = 0; i < m; ++i) {
            const double aki = arow[i];
            double* crow = pc + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_error("add", a, b);
    Tensor c = a;
    double* pc = c.data();
    const double* pb = b.data();
    for (int64_t i = 0; i < c.size(); ++i) pc[i] += pb[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_error("sub", a, b);
    Tensor c = a;
    double* pc = c.data();
    const double* pb = b.data();
    for (int64_t i = 0; i < c.size(); ++i) pc[i] -= pb[i];
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_error("mul", a, b);
    Tensor c = a;
    double* pc = c.data();
    const double* pb = b.data();
    for (int64_t i = 0; i < c.size(); ++i) pc[i] *= pb[i];
    return c;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    double* p = out.data();
    for (int64_t i = 0; i < out.size(); ++i) p[i] *= c;
    return out;
}

Tensor transpose(const Tensor& a) {
    require_2d("transpose", a);
    const int m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    }
    return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    require_2d("add_row_bias", x);
    if (bias.rank() != 1 || bias.dim(0) != x.dim(1)) shape_error("add_row_bias", x, bias);
    Tensor out = x;
    const int m = x.dim(0), n = x.dim(1);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) += bias.at(j);
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 1 && x.rank() != 2) {
        throw ContractError("softmax_rows: expected rank 1 or 2, got " + x.shape_str());
    }
    const int rows = x.rank() == 2 ? x.dim(0) : 1;
    const int cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
    Tensor out = x;
    double* p = out.data();
    for (int i = 0; i < rows; ++i) {
        double* row = p + static_cast<size_t>(i) * cols;
        double mx = row[0];
        for (int j = 1; j < cols; ++j) mx = row[j] > mx ? row[j] : mx;
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < cols; ++j) row[j] /= sum;
    }
    return out;
}

CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                                 const std::vector<bool>& pad_mask) {
    require_2d("cross_entropy", logits);
    const int t_len = logits.dim(0), vocab = logits.dim(1);
    if (static_cast<int>(targets.size()) != t_len) {
        throw ContractError("cross_entropy: targets length " + std::to_string(targets.size()) +
                            " does not match logits rows " + std::to_string(t_len));
    }
    if (!pad_mask.empty() && static_cast<int>(pad_mask.size()) != t_len) {
        throw ContractError("cross_entropy: pad_mask length mismatch");
    }
    CrossEntropyResult res;
    res.per_step_nll.assign(static_cast<size_t>(t_len), 0.0);
    for (int t = 0; t < t_len; ++t) {
        if (!pad_mask.empty() && pad_mask[static_cast<size_t>(t)]) continue;
        int y = targets[static_cast<size_t>(t)];
        if (y < 0 || y >= vocab) {
            throw ContractError("cross_entropy: target id " + std::to_string(y) +
                                " out of range [0," + std::to_string(vocab) + ")");
        }
        const double* row = logits.data() + static_cast<size_t>(t) * vocab;
        double mx = row[0];
        for (int j = 1; j < vocab; ++j) mx = row[j] > mx ? row[j] : mx;
        double sum = 0.0;
        for (int j = 0; j < vocab; ++j) sum += std::exp(row[j] - mx);
        double nll = (mx + std::log(sum)) - row[y];
        res.per_step_nll[static_cast<size_t>(t)] = nll;
        res.total_nll += nll;
    }
    return res;
}

}  // namespace qg
