#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace seqfake::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

// Optimizer learning-rate group.
enum class ParamGroup { backbone, transformer };

template <class T>
struct Parameter {
    std::string name;
    Matrix<T> value;
    Matrix<T> grad;
    ParamGroup group = ParamGroup::transformer;
    bool decay = true;  // weight decay applies

    Parameter(std::string n, Matrix<T> v, ParamGroup g, bool wd = true)
        : name(std::move(n)), value(std::move(v)), grad(Matrix<T>::Zero(value.rows(), value.cols())), group(g), decay(wd) {}

    void zero_grad() { grad.setZero(); }
};

template <class T>
using ParamPtr = std::shared_ptr<Parameter<T>>;

// Handle to a value recorded on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over matrix-valued nodes. Nodes are recorded in
// execution order; backward() replays their closures in reverse. A node's
// gradient buffer is allocated on first use, and closures only touch the
// gradients of inputs that require them.
template <class T>
class Tape {
public:
    // Called with the node's own handle during backward().
    using Backward = std::function<void(Tape&, Var self)>;

    Tape() = default;
    // With gradients disabled, parameters are read as constants and no closures are kept.
    explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix<T> value) { return push(std::move(value), false, {}); }

    Var input(Matrix<T> value, bool requires_grad) {
        return push(std::move(value), requires_grad && grad_enabled_, {});
    }

    // Parameter leaf: reads the parameter in place and accumulates into its grad.
    Var param(const ParamPtr<T>& p) {
        Node n;
        n.external_value = &p->value;
        n.external_grad = &p->grad;
        n.requires_grad = grad_enabled_;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Var record(Matrix<T> value, bool requires_grad, Backward backward) {
        return push(std::move(value), requires_grad, requires_grad ? std::move(backward) : Backward{});
    }

    const Matrix<T>& value(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        return n.external_value ? *n.external_value : n.value;
    }

    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    bool has_grad(Var v) const {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        return n.external_grad ? n.touched : n.grad.size() > 0;
    }

    // Gradient buffer of a node, zero-initialised on first access.
    Matrix<T>& grad(Var v) {
        Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.external_grad) {
            n.touched = true;
            return *n.external_grad;
        }
        if (n.grad.size() == 0) {
            const auto& val = value(v);
            n.grad = Matrix<T>::Zero(val.rows(), val.cols());
        }
        return n.grad;
    }

    // Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
    void backward(Var loss, T seed = T(1)) {
        grad(loss).array() += seed;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.backward || n.grad.size() == 0) continue;
            n.backward(*this, Var{i});
        }
    }

    std::size_t size() const { return nodes_.size(); }
    bool grad_enabled() const { return grad_enabled_; }

private:
    struct Node {
        Matrix<T> value;
        Matrix<T> grad;
        const Matrix<T>* external_value = nullptr;
        Matrix<T>* external_grad = nullptr;
        Backward backward;
        bool requires_grad = false;
        bool touched = false;
    };

    Var push(Matrix<T> value, bool requires_grad, Backward backward) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    std::deque<Node> nodes_;
    bool grad_enabled_ = true;
};

}  // namespace seqfake::nn
