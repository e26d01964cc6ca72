#include "clv/grad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace clv::grad {

Value Value::parameter(Tensor t, std::string name) {
    auto n = std::make_shared<Node>();
    n->data = std::move(t);
    n->requires_grad = true;
    n->name = std::move(name);
    return Value(std::move(n));
}

Value Value::constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->data = std::move(t);
    return Value(std::move(n));
}

Value make_op(Tensor data, std::vector<Value> parents, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->data = std::move(data);
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
    return Value(std::move(n));
}

Value affine(const Value& input, const Value& weights, const Value& bias) {
    const Tensor& x = input.data();
    const Tensor& w = weights.data();
    const Tensor& b = bias.data();
    if (x.cols != w.rows || b.rows != 1 || b.cols != w.cols)
        throw std::invalid_argument("affine: shape mismatch");
    Tensor y(x.rows, w.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < w.cols; ++j) {
            double acc = b.at(0, j);
            for (int k = 0; k < x.cols; ++k) acc += x.at(i, k) * w.at(k, j);
            y.at(i, j) = acc;
        }
    return make_op(std::move(y), {input, weights, bias}, [](Node& self) {
        Node& xn = *self.parents[0];
        Node& wn = *self.parents[1];
        Node& bn = *self.parents[2];
        xn.ensure_grad();
        wn.ensure_grad();
        bn.ensure_grad();
        const Tensor& g = self.grad;
        for (int i = 0; i < xn.data.rows; ++i)
            for (int k = 0; k < xn.data.cols; ++k) {
                double acc = 0.0;
                for (int j = 0; j < wn.data.cols; ++j) acc += g.at(i, j) * wn.data.at(k, j);
                xn.grad.at(i, k) += acc;
            }
        for (int k = 0; k < wn.data.rows; ++k)
            for (int j = 0; j < wn.data.cols; ++j) {
                double acc = 0.0;
                for (int i = 0; i < xn.data.rows; ++i) acc += xn.data.at(i, k) * g.at(i, j);
                wn.grad.at(k, j) += acc;
            }
        for (int j = 0; j < bn.data.cols; ++j) {
            double acc = 0.0;
            for (int i = 0; i < g.rows; ++i) acc += g.at(i, j);
            bn.grad.at(0, j) += acc;
        }
    });
}

Value relu(const Value& input) {
    Tensor y = input.data();
    for (double& e : y.v) e = std::max(0.0, e);
    return make_op(std::move(y), {input}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < p.data.size(); ++i)
            if (p.data.v[i] > 0.0) p.grad.v[i] += self.grad.v[i];
    });
}

static double softplus_scalar(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

Value softplus(const Value& input) {
    Tensor y = input.data();
    for (double& e : y.v) e = softplus_scalar(e);
    return make_op(std::move(y), {input}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < p.data.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-p.data.v[i]));
            p.grad.v[i] += s * self.grad.v[i];
        }
    });
}

static void check_same_shape(const Value& a, const Value& b, const char* what) {
    if (!a.data().same_shape(b.data()))
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

Value add(const Value& a, const Value& b) {
    check_same_shape(a, b, "add");
    Tensor y = a.data();
    for (int i = 0; i < y.size(); ++i) y.v[i] += b.data().v[i];
    return make_op(std::move(y), {a, b}, [](Node& self) {
        for (auto& p : self.parents) {
            p->ensure_grad();
            for (int i = 0; i < p->data.size(); ++i) p->grad.v[i] += self.grad.v[i];
        }
    });
}

Value sub(const Value& a, const Value& b) {
    check_same_shape(a, b, "sub");
    Tensor y = a.data();
    for (int i = 0; i < y.size(); ++i) y.v[i] -= b.data().v[i];
    return make_op(std::move(y), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (int i = 0; i < pa.data.size(); ++i) {
            pa.grad.v[i] += self.grad.v[i];
            pb.grad.v[i] -= self.grad.v[i];
        }
    });
}

Value mul(const Value& a, const Value& b) {
    check_same_shape(a, b, "mul");
    Tensor y = a.data();
    for (int i = 0; i < y.size(); ++i) y.v[i] *= b.data().v[i];
    return make_op(std::move(y), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (int i = 0; i < pa.data.size(); ++i) {
            pa.grad.v[i] += pb.data.v[i] * self.grad.v[i];
            pb.grad.v[i] += pa.data.v[i] * self.grad.v[i];
        }
    });
}

Value scale(const Value& a, double c) {
    Tensor y = a.data();
    for (double& e : y.v) e *= c;
    return make_op(std::move(y), {a}, [c](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < p.data.size(); ++i) p.grad.v[i] += c * self.grad.v[i];
    });
}

Value sum(const Value& a) {
    double acc = 0.0;
    for (double e : a.data().v) acc += e;
    return make_op(Tensor::scalar(acc), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < p.data.size(); ++i) p.grad.v[i] += self.grad.v[0];
    });
}

Value mean(const Value& a) {
    const int n = a.data().size();
    double acc = 0.0;
    for (double e : a.data().v) acc += e;
    return make_op(Tensor::scalar(acc / n), {a}, [n](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < p.data.size(); ++i) p.grad.v[i] += self.grad.v[0] / n;
    });
}

Value log_elem(const Value& a) {
    Tensor y = a.data();
    for (double& e : y.v) e = std::log(e);
    return make_op(std::move(y), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < p.data.size(); ++i) p.grad.v[i] += self.grad.v[i] / p.data.v[i];
    });
}

Value square(const Value& a) {
    Tensor y = a.data();
    for (double& e : y.v) e *= e;
    return make_op(std::move(y), {a}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < p.data.size(); ++i)
            p.grad.v[i] += 2.0 * p.data.v[i] * self.grad.v[i];
    });
}

Value col(const Value& a, int j) {
    const Tensor& x = a.data();
    if (j < 0 || j >= x.cols) throw std::invalid_argument("col: index out of range");
    Tensor y(x.rows, 1);
    for (int i = 0; i < x.rows; ++i) y.at(i, 0) = x.at(i, j);
    return make_op(std::move(y), {a}, [j](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < p.data.rows; ++i) p.grad.at(i, j) += self.grad.at(i, 0);
    });
}

Value concat_cols(const std::vector<Value>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
    const int rows = xs[0].data().rows;
    int cols = 0;
    for (const auto& x : xs) {
        if (x.data().rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += x.data().cols;
    }
    Tensor y(rows, cols);
    int off = 0;
    for (const auto& x : xs) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < x.data().cols; ++j) y.at(i, off + j) = x.data().at(i, j);
        off += x.data().cols;
    }
    return make_op(std::move(y), xs, [](Node& self) {
        int off = 0;
        for (auto& p : self.parents) {
            p->ensure_grad();
            for (int i = 0; i < p->data.rows; ++i)
                for (int j = 0; j < p->data.cols; ++j)
                    p->grad.at(i, j) += self.grad.at(i, off + j);
            off += p->data.cols;
        }
    });
}

Value gamma_sample(const Value& shape, const Value& rate, Rng& rng) {
    check_same_shape(shape, rate, "gamma_sample");
    const Tensor& a = shape.data();
    const Tensor& r = rate.data();
    Tensor z(a.rows, a.cols);
    for (int i = 0; i < a.size(); ++i) {
        if (!(a.v[i] > 0.0) || !(r.v[i] > 0.0))
            throw std::invalid_argument("gamma_sample: nonpositive shape or rate");
        const double u = rng.next_double();
        z.v[i] = num::gamma_quantile(a.v[i], u) / r.v[i];
    }
    return make_op(std::move(z), {shape, rate}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pr = *self.parents[1];
        pa.ensure_grad();
        pr.ensure_grad();
        for (int i = 0; i < self.data.size(); ++i) {
            const num::GammaParams g(pa.data.v[i], pr.data.v[i]);
            const auto [ds, dr] = num::gamma_reparam_gradient(g, self.data.v[i]);
            pa.grad.v[i] += ds * self.grad.v[i];
            pr.grad.v[i] += dr * self.grad.v[i];
        }
    });
}

void backward(const Value& loss) {
    if (loss.data().size() != 1)
        throw std::logic_error("backward: loss must be a scalar");
    // reverse topological order via iterative DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad.v[0] += 1.0;
    std::unordered_set<Node*> visited;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!visited.insert(n).second)
            throw std::logic_error("backward: node visited twice (graph not acyclic)");
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

void adam_step(const std::vector<Value>& params, AdamState& state) {
    for (const auto& p : params)
        if (!p.node()->requires_grad)
            throw std::logic_error("adam_step: value is not a trainable parameter");
    if (state.moments.empty()) {
        for (const auto& p : params) {
            const size_t n = p.node()->data.v.size();
            state.moments.push_back({p.node(), {std::vector<double>(n, 0.0),
                                                std::vector<double>(n, 0.0)}});
        }
    }
    if (state.moments.size() != params.size())
        throw std::logic_error("adam_step: parameter set changed");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (size_t k = 0; k < params.size(); ++k) {
        Node& n = *params[k].node();
        if (state.moments[k].first.get() != &n)
            throw std::logic_error("adam_step: parameter order changed");
        if (n.grad.size() != n.data.size())
            throw std::logic_error("adam_step: gradient missing for parameter " + n.name);
        auto& [m, v] = state.moments[k].second;
        for (size_t i = 0; i < n.data.v.size(); ++i) {
            const double g = n.grad.v[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            n.data.v[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

void save_arrays(const std::string& path,
                 const std::vector<std::pair<std::string, Tensor>>& arrays) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_arrays: cannot open " + path);
    out << "clvtensors 1\n" << arrays.size() << "\n";
    char buf[40];
    for (const auto& [name, t] : arrays) {
        out << name << " " << t.rows << " " << t.cols << "\n";
        for (int i = 0; i < t.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%a", t.v[i]);
            out << buf << (i + 1 == t.size() ? "\n" : " ");
        }
        if (t.size() == 0) out << "\n";
    }
    if (!out) throw std::runtime_error("save_arrays: write failed for " + path);
}

std::vector<std::pair<std::string, Tensor>> load_arrays(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_arrays: cannot open " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "clvtensors" || version != 1)
        throw std::runtime_error("load_arrays: unrecognized container format");
    size_t count = 0;
    in >> count;
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (size_t k = 0; k < count; ++k) {
        std::string name;
        int rows = 0, cols = 0;
        in >> name >> rows >> cols;
        Tensor t(rows, cols);
        for (int i = 0; i < t.size(); ++i) {
            std::string tok;
            in >> tok;
            t.v[i] = std::strtod(tok.c_str(), nullptr);
        }
        if (!in) throw std::runtime_error("load_arrays: truncated container");
        out.push_back({std::move(name), std::move(t)});
    }
    return out;
}

} // namespace clv::grad
