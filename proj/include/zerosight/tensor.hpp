#pragma once

#include <cstring>
#include <functional>
#include <initializer_list>
#include <memory>
#include <utility>

#include "zerosight/common.hpp"
#include "zerosight/rng.hpp"

namespace zerosight {

// Dense N-d tensor with reverse-mode autodiff. Tensor is a value handle on a
// shared node; copies alias the same storage, which is what the tape needs.
// T is float for training, double for gradient verification.
template <class T>
struct TensorNode {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until the backward pass reaches this node
    bool requires_grad = false;

    std::size_t size() const { return data.size(); }

    void accumulate_grad(std::size_t i, T v) {
        if (grad.empty()) grad.assign(data.size(), T(0));
        grad[i] += v;
    }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

template <class T>
class Tape;

template <class T>
class Tensor {
public:
    Tensor() : node_(std::make_shared<TensorNode<T>>()) {}

    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
        : node_(std::make_shared<TensorNode<T>>()) {
        node_->shape = std::move(shape);
        node_->data.assign(numel(node_->shape), fill);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
    static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }

    static Tensor scalar(T v) {
        Tensor t{Shape{}};
        t.node_->data.assign(1, v);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> values) {
        if (numel(shape) != values.size())
            throw ShapeError("tensor: " + std::to_string(values.size()) +
                             " values do not fill shape " + shape_str(shape));
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(values);
        return t;
    }

    static Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
        Tensor t{std::move(shape)};
        for (auto& v : t.node_->data) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    static Tensor normal(Shape shape, Rng& rng, double mean = 0.0, double stddev = 1.0) {
        Tensor t{std::move(shape)};
        for (auto& v : t.node_->data) v = static_cast<T>(rng.normal(mean, stddev));
        return t;
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape[i]; }

    const std::vector<T>& data() const { return node_->data; }
    std::vector<T>& data() { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        node_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const { return node_->grad; }
    std::vector<T>& grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    T item() const {
        if (size() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
        return node_->data[0];
    }

    T& at(std::size_t i) { return node_->data[i]; }
    T at(std::size_t i) const { return node_->data[i]; }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

// Ordered record of executed primitive ops. Execution order is a topological
// order of the graph, so the backward pass just replays adjoints back to
// front. One tape per training step; the step owns it exclusively.
template <class T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    struct Entry {
        std::shared_ptr<TensorNode<T>> output;
        std::function<void()> adjoint;
    };

    static Tape* active() { return active_; }

    void record(std::shared_ptr<TensorNode<T>> output, std::function<void()> adjoint) {
        entries_.push_back(Entry{std::move(output), std::move(adjoint)});
    }

    std::size_t size() const { return entries_.size(); }

    void clear() { entries_.clear(); }

    // Seeds d(root)/d(root) = 1 and replays adjoints in reverse op order.
    // Entries whose output never received a gradient are dead branches.
    void backward(const Tensor<T>& root) {
        if (root.size() != 1)
            throw ShapeError("backward: root has shape " + shape_str(root.shape()) +
                             ", expected a scalar");
        root.node()->ensure_grad();
        root.node()->grad[0] += T(1);
        for (std::size_t i = entries_.size(); i-- > 0;) {
            Entry& e = entries_[i];
            if (e.output->grad.empty()) continue;
            e.adjoint();
        }
    }

    // RAII activation; ops record onto the innermost active tape.
    class Scope {
    public:
        explicit Scope(Tape& tape) : prev_(active_) { active_ = &tape; }
        ~Scope() { active_ = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

private:
    static thread_local Tape* active_;
    std::vector<Entry> entries_;
};

template <class T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

// True when a tape is recording and the op involves a grad-requiring input.
template <class T>
inline bool recording(std::initializer_list<const Tensor<T>*> inputs) {
    if (Tape<T>::active() == nullptr) return false;
    for (const Tensor<T>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace zerosight
