#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ctnorm/errors.hpp"
#include "ctnorm/rng.hpp"

// Reverse-mode autodiff over dense n-d tensors. The op set is exactly what
// the networks here need; nothing more. A tape and its tensors belong to a
// single thread; parameter tensors may be shared read-only for inference.

namespace ctnorm::nn {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Thread-local switch: when disabled, ops run forward-only and record nothing.
class GradMode {
public:
    static bool enabled() { return flag(); }
    static void set(bool on) { flag() = on; }

private:
    static bool& flag() {
        thread_local bool f = true;
        return f;
    }
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }

private:
    bool prev_;
};

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until backward touches this node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // scatters node.grad into parents
    const char* op = "leaf";

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void accumulate(std::int64_t i, T g) { grad[static_cast<std::size_t>(i)] += g; }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static Tensor filled(Shape shape, T value, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->data.assign(static_cast<std::size_t>(numel(n->shape)), value);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
        auto t = zeros(std::move(shape), requires_grad);
        for (auto& v : t.node()->data) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    std::int64_t size() const { return static_cast<std::int64_t>(n_->data.size()); }
    std::vector<T>& data() { return n_->data; }
    const std::vector<T>& data() const { return n_->data; }
    const std::vector<T>& grad() const { return n_->grad; }
    bool has_grad() const { return !n_->grad.empty(); }
    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }
    void zero_grad() { n_->grad.assign(n_->data.size(), T(0)); }
    void clear_grad() { n_->grad.clear(); }

    T item() const {
        if (size() != 1) throw ShapeError("item(): tensor is not scalar, shape " + shape_str(shape()));
        return n_->data[0];
    }

    std::shared_ptr<Node<T>> node() const { return n_; }

    bool all_finite() const {
        for (T v : n_->data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    explicit Tensor(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

private:
    std::shared_ptr<Node<T>> n_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const char* op,
                      std::vector<std::shared_ptr<Node<T>>> parents,
                      std::function<void(Node<T>&)> backward) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->op = op;
    bool needs = false;
    if (GradMode::enabled()) {
        for (const auto& p : parents) needs = needs || p->requires_grad;
    }
    if (needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward);
    }
    return Tensor<T>(std::move(n));
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

}  // namespace detail

// The recorded computation, in topological order (inputs precede users).
template <typename T>
class Tape {
public:
    static Tape trace(const Tensor<T>& root) {
        Tape tape;
        std::unordered_set<const Node<T>*> seen;
        // Iterative post-order DFS; parent visit order is the recorded order,
        // so two traces of the same graph are identical.
        struct Frame {
            Node<T>* node;
            std::size_t next_parent;
        };
        std::vector<Frame> stack;
        Node<T>* r = root.node().get();
        if (seen.insert(r).second) stack.push_back({r, 0});
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                Node<T>* p = f.node->parents[f.next_parent++].get();
                if (seen.insert(p).second) stack.push_back({p, 0});
            } else {
                tape.order_.push_back(f.node);
                stack.pop_back();
            }
        }
        return tape;
    }

    const std::vector<Node<T>*>& order() const { return order_; }

    bool is_topological() const {
        std::unordered_set<const Node<T>*> placed;
        for (Node<T>* n : order_) {
            for (const auto& p : n->parents) {
                if (!placed.count(p.get())) return false;
            }
            placed.insert(n);
        }
        return true;
    }

private:
    std::vector<Node<T>*> order_;
};

// Propagates d(loss)/d(node) to every requires_grad tensor reachable from
// loss. Tensors outside the graph keep an empty grad.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    Tape<T> tape = Tape<T>::trace(loss);
    for (Node<T>* n : tape.order()) n->ensure_grad();
    loss.node()->grad[0] = T(1);
    const auto& order = tape.order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && n->requires_grad) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    auto pa = a.node(), pb = b.node();
    return detail::make_result<T>(a.shape(), std::move(out), "add", {pa, pb}, [pa, pb](Node<T>& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    auto pa = a.node(), pb = b.node();
    return detail::make_result<T>(a.shape(), std::move(out), "sub", {pa, pb}, [pa, pb](Node<T>& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    auto pa = a.node(), pb = b.node();
    return detail::make_result<T>(a.shape(), std::move(out), "mul", {pa, pb}, [pa, pb](Node<T>& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i] * pa->data[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> out(a.data());
    for (auto& v : out) v *= s;
    auto pa = a.node();
    return detail::make_result<T>(a.shape(), std::move(out), "scale", {pa}, [pa, s](Node<T>& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * s;
    });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    std::vector<T> out(a.data());
    for (auto& v : out) v = std::abs(v);
    auto pa = a.node();
    return detail::make_result<T>(a.shape(), std::move(out), "abs", {pa}, [pa](Node<T>& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const T x = pa->data[i];
            const T s = x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
            pa->grad[i] += n.grad[i] * s;
        }
    });
}

// x >= 0 -> x, else alpha*x. Gradient at the kink uses the x >= 0 branch.
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, double alpha) {
    if (alpha < 0.0 || alpha >= 1.0) {
        throw ValueError("leaky_relu: alpha must lie in [0,1), got " + std::to_string(alpha));
    }
    const T al = static_cast<T>(alpha);
    std::vector<T> out(a.data());
    for (auto& v : out) v = v >= T(0) ? v : al * v;
    auto pa = a.node();
    return detail::make_result<T>(a.shape(), std::move(out), "leaky_relu", {pa}, [pa, al](Node<T>& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            pa->grad[i] += n.grad[i] * (pa->data[i] >= T(0) ? T(1) : al);
        }
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> out(a.data());
    for (auto& v : out) {
        const double x = static_cast<double>(v);
        v = static_cast<T>(x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                    : std::exp(x) / (1.0 + std::exp(x)));
    }
    auto pa = a.node();
    auto saved = out;
    return detail::make_result<T>(a.shape(), std::move(out), "sigmoid", {pa},
                                  [pa, saved = std::move(saved)](Node<T>& n) {
                                      pa->ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                          const T y = saved[i];
                                          pa->grad[i] += n.grad[i] * y * (T(1) - y);
                                      }
                                  });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    auto pa = a.node();
    return detail::make_result<T>({1}, {acc}, "sum_all", {pa}, [pa](Node<T>& n) {
        pa->ensure_grad();
        const T g = n.grad[0];
        for (auto& v : pa->grad) v += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    const T inv = T(1) / static_cast<T>(a.size());
    T acc = T(0);
    for (T v : a.data()) acc += v;
    auto pa = a.node();
    return detail::make_result<T>({1}, {acc * inv}, "mean_all", {pa}, [pa, inv](Node<T>& n) {
        pa->ensure_grad();
        const T g = n.grad[0] * inv;
        for (auto& v : pa->grad) v += g;
    });
}

// Mean over every axis except the leading one: [N, ...] -> [N].
template <typename T>
Tensor<T> mean_per_sample(const Tensor<T>& a) {
    if (a.shape().empty()) throw ShapeError("mean_per_sample: rank-0 tensor");
    const std::int64_t n = a.shape()[0];
    const std::int64_t per = a.size() / n;
    std::vector<T> out(static_cast<std::size_t>(n), T(0));
    const auto& ad = a.data();
    for (std::int64_t i = 0; i < n; ++i) {
        T acc = T(0);
        for (std::int64_t j = 0; j < per; ++j) acc += ad[static_cast<std::size_t>(i * per + j)];
        out[static_cast<std::size_t>(i)] = acc / static_cast<T>(per);
    }
    auto pa = a.node();
    return detail::make_result<T>({n}, std::move(out), "mean_per_sample", {pa}, [pa, n, per](Node<T>& nd) {
        pa->ensure_grad();
        const T inv = T(1) / static_cast<T>(per);
        for (std::int64_t i = 0; i < n; ++i) {
            const T g = nd.grad[static_cast<std::size_t>(i)] * inv;
            for (std::int64_t j = 0; j < per; ++j) pa->grad[static_cast<std::size_t>(i * per + j)] += g;
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    auto pa = a.node();
    return detail::make_result<T>(std::move(shape), std::vector<T>(a.data()), "reshape", {pa},
                                  [pa](Node<T>& n) {
                                      pa->ensure_grad();
                                      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
                                  });
}

// Concatenate two NCHW tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4) {
        throw ShapeError("concat_channels: expected rank-4 inputs");
    }
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(sa) + " vs " + shape_str(sb));
    }
    const std::int64_t n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
    Shape os{n, ca + cb, sa[2], sa[3]};
    std::vector<T> out(static_cast<std::size_t>(numel(os)));
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(ad.begin() + i * ca * hw, ca * hw, out.begin() + i * (ca + cb) * hw);
        std::copy_n(bd.begin() + i * cb * hw, cb * hw, out.begin() + i * (ca + cb) * hw + ca * hw);
    }
    auto pa = a.node(), pb = b.node();
    return detail::make_result<T>(std::move(os), std::move(out), "concat_channels", {pa, pb},
                                  [pa, pb, n, ca, cb, hw](Node<T>& nd) {
                                      for (std::int64_t i = 0; i < n; ++i) {
                                          const std::size_t base = static_cast<std::size_t>(i * (ca + cb) * hw);
                                          if (pa->requires_grad) {
                                              pa->ensure_grad();
                                              for (std::int64_t j = 0; j < ca * hw; ++j)
                                                  pa->grad[static_cast<std::size_t>(i * ca * hw + j)] += nd.grad[base + j];
                                          }
                                          if (pb->requires_grad) {
                                              pb->ensure_grad();
                                              for (std::int64_t j = 0; j < cb * hw; ++j)
                                                  pb->grad[static_cast<std::size_t>(i * cb * hw + j)] +=
                                                      nd.grad[base + ca * hw + j];
                                          }
                                      }
                                  });
}

// Numerically stabilized softmax over the trailing axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
    if (a.shape().empty()) throw ShapeError("softmax: rank-0 tensor");
    const std::int64_t k = a.shape().back();
    if (k < 1) throw ShapeError("softmax: trailing axis must have size >= 1");
    const std::int64_t rows = a.size() / k;
    std::vector<T> out(a.data().size());
    const auto& ad = a.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r * k);
        T m = ad[base];
        for (std::int64_t j = 1; j < k; ++j) m = std::max(m, ad[base + j]);
        T denom = T(0);
        for (std::int64_t j = 0; j < k; ++j) {
            out[base + j] = static_cast<T>(std::exp(static_cast<double>(ad[base + j] - m)));
            denom += out[base + j];
        }
        for (std::int64_t j = 0; j < k; ++j) out[base + j] /= denom;
    }
    auto pa = a.node();
    auto saved = out;
    return detail::make_result<T>(a.shape(), std::move(out), "softmax", {pa},
                                  [pa, saved = std::move(saved), rows, k](Node<T>& n) {
                                      pa->ensure_grad();
                                      for (std::int64_t r = 0; r < rows; ++r) {
                                          const std::size_t base = static_cast<std::size_t>(r * k);
                                          T dot = T(0);
                                          for (std::int64_t j = 0; j < k; ++j) dot += n.grad[base + j] * saved[base + j];
                                          for (std::int64_t j = 0; j < k; ++j)
                                              pa->grad[base + j] += saved[base + j] * (n.grad[base + j] - dot);
                                      }
                                  });
}

// Mean cross-entropy of softmax(logits[N,K]) against integer labels.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.shape().size() != 2) throw ShapeError("softmax_cross_entropy: expected [N,K] logits");
    const std::int64_t n = logits.shape()[0], k = logits.shape()[1];
    if (static_cast<std::int64_t>(labels.size()) != n) {
        throw ShapeError("softmax_cross_entropy: label count mismatch");
    }
    const auto& ld = logits.data();
    std::vector<T> probs(ld.size());
    T loss = T(0);
    for (std::int64_t r = 0; r < n; ++r) {
        const std::size_t base = static_cast<std::size_t>(r * k);
        T m = ld[base];
        for (std::int64_t j = 1; j < k; ++j) m = std::max(m, ld[base + j]);
        double denom = 0.0;
        for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(ld[base + j] - m));
        const double logz = static_cast<double>(m) + std::log(denom);
        for (std::int64_t j = 0; j < k; ++j) {
            probs[base + j] = static_cast<T>(std::exp(static_cast<double>(ld[base + j]) - logz));
        }
        loss += static_cast<T>(logz - static_cast<double>(ld[base + labels[static_cast<std::size_t>(r)]]));
    }
    loss /= static_cast<T>(n);
    auto pl = logits.node();
    return detail::make_result<T>({1}, {loss}, "softmax_ce", {pl},
                                  [pl, probs = std::move(probs), labels, n, k](Node<T>& nd) {
                                      pl->ensure_grad();
                                      const T g = nd.grad[0] / static_cast<T>(n);
                                      for (std::int64_t r = 0; r < n; ++r) {
                                          const std::size_t base = static_cast<std::size_t>(r * k);
                                          for (std::int64_t j = 0; j < k; ++j) {
                                              T p = probs[base + j];
                                              if (j == labels[static_cast<std::size_t>(r)]) p -= T(1);
                                              pl->grad[base + j] += g * p;
                                          }
                                      }
                                  });
}

// Mean over rows of the Euclidean distance between paired rows of [N,K]
// tensors. Zero-distance rows get a zero subgradient.
template <typename T>
Tensor<T> batch_l2_distance(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "batch_l2_distance");
    if (a.shape().size() != 2) throw ShapeError("batch_l2_distance: expected [N,K] inputs");
    const std::int64_t n = a.shape()[0], k = a.shape()[1];
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<T> norms(static_cast<std::size_t>(n));
    T loss = T(0);
    for (std::int64_t r = 0; r < n; ++r) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
            const double d = static_cast<double>(ad[static_cast<std::size_t>(r * k + j)]) -
                             static_cast<double>(bd[static_cast<std::size_t>(r * k + j)]);
            acc += d * d;
        }
        norms[static_cast<std::size_t>(r)] = static_cast<T>(std::sqrt(acc));
        loss += norms[static_cast<std::size_t>(r)];
    }
    loss /= static_cast<T>(n);
    auto pa = a.node(), pb = b.node();
    return detail::make_result<T>({1}, {loss}, "batch_l2", {pa, pb},
                                  [pa, pb, norms = std::move(norms), n, k](Node<T>& nd) {
                                      const T g = nd.grad[0] / static_cast<T>(n);
                                      if (pa->requires_grad) pa->ensure_grad();
                                      if (pb->requires_grad) pb->ensure_grad();
                                      for (std::int64_t r = 0; r < n; ++r) {
                                          const T nr = norms[static_cast<std::size_t>(r)];
                                          if (nr <= T(0)) continue;
                                          for (std::int64_t j = 0; j < k; ++j) {
                                              const std::size_t i = static_cast<std::size_t>(r * k + j);
                                              const T d = (pa->data[i] - pb->data[i]) / nr;
                                              if (pa->requires_grad) pa->grad[i] += g * d;
                                              if (pb->requires_grad) pb->grad[i] -= g * d;
                                          }
                                      }
                                  });
}

}  // namespace ctnorm::nn
