#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "clv/numerics.hpp"
#include "clv/rng.hpp"

namespace clv::grad {

// Dense row-major matrix. Vectors are n x 1 or 1 x n.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}
    static Tensor scalar(double x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    int size() const { return rows * cols; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

struct Node {
    Tensor data;
    Tensor grad; // same shape as data, allocated lazily on backward
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn; // accumulates into parents' grads
    bool requires_grad = false;
    std::string name; // parameters only

    void ensure_grad() {
        if (grad.size() != data.size()) grad = Tensor(data.rows, data.cols);
    }
};

// Handle to a graph node. Copies share the node.
class Value {
public:
    Value() = default;
    explicit Value(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Value parameter(Tensor t, std::string name = {});
    static Value constant(Tensor t);

    const Tensor& data() const { return node_->data; }
    Tensor& data() { return node_->data; }
    Tensor& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    std::shared_ptr<Node> node() const { return node_; }
    bool defined() const { return node_ != nullptr; }
    double scalar() const {
        if (node_->data.size() != 1) throw std::logic_error("Value: not a scalar");
        return node_->data.v[0];
    }
    void zero_grad() {
        node_->ensure_grad();
        std::fill(node_->grad.v.begin(), node_->grad.v.end(), 0.0);
    }

private:
    std::shared_ptr<Node> node_;
};

// Custom-op escape hatch: forward result plus an explicit backward.
Value make_op(Tensor data, std::vector<Value> parents, std::function<void(Node&)> backward);

// input [n x k] * weights [k x m] + bias [1 x m] broadcast over rows
Value affine(const Value& input, const Value& weights, const Value& bias);

Value relu(const Value& input);
Value softplus(const Value& input);

Value add(const Value& a, const Value& b);       // same shape
Value sub(const Value& a, const Value& b);       // same shape
Value mul(const Value& a, const Value& b);       // elementwise, same shape
Value scale(const Value& a, double c);
Value sum(const Value& a);  // 1 x 1
Value mean(const Value& a); // 1 x 1
Value log_elem(const Value& a);
Value square(const Value& a);
Value col(const Value& a, int j);                 // n x 1 view copy with scatter backward
Value concat_cols(const std::vector<Value>& xs);  // n x k

// Differentiable Gamma draws: one Gamma(shape_i, rate_i) sample per entry,
// drawn by inverting the Gamma CDF at a uniform from `rng`. Consumes exactly
// one uniform per entry, so a fixed rng seed gives common random numbers
// across nearby parameter values. Backward routes through the implicit
// reparameterization gradients.
Value gamma_sample(const Value& shape, const Value& rate, Rng& rng);

// Reverse pass from a scalar loss. Accumulates into .grad of every reachable
// node with requires_grad (or with parents). Repeated calls accumulate.
void backward(const Value& loss);

struct AdamState {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    // per-parameter moments, keyed by node identity
    std::vector<std::pair<std::shared_ptr<Node>, std::pair<std::vector<double>, std::vector<double>>>> moments;
};

void adam_step(const std::vector<Value>& params, AdamState& state);

// Named-array checkpoint container; hexfloat text, bit-exact round trip.
void save_arrays(const std::string& path,
                 const std::vector<std::pair<std::string, Tensor>>& arrays);
std::vector<std::pair<std::string, Tensor>> load_arrays(const std::string& path);

} // namespace clv::grad
