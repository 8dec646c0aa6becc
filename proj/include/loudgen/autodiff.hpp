#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace loudgen {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Named trainable tensors. Indices are stable for the lifetime of the set.
class ParameterSet {
public:
    std::size_t add(std::string name, Matrix value);

    std::size_t size() const noexcept { return values_.size(); }
    std::size_t scalar_count() const noexcept;

    const std::string& name(std::size_t index) const { return names_.at(index); }
    const Matrix& value(std::size_t index) const { return values_.at(index); }
    Matrix& value(std::size_t index) { return values_.at(index); }
    std::optional<std::size_t> find(const std::string& name) const;

    /// Zero tensors shaped like every parameter.
    std::vector<Matrix> zeros_like() const;

    bool operator==(const ParameterSet&) const = default;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
};

namespace ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode tape over dense matrices. With gradients disabled it only
/// records values, which is what inference uses.
class Tape {
public:
    explicit Tape(bool gradients = true) : gradients_(gradients) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool gradients_enabled() const noexcept { return gradients_; }

    Var constant(Matrix value);
    /// A leaf whose gradient is tracked (for input-gradient checks).
    Var variable(Matrix value);
    /// Leaf bound to a parameter; one node per parameter index is reused.
    Var parameter(const ParameterSet& params, std::size_t index);

    /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates.
    void backward(const Var& root);

    const Matrix& grad(const Var& v) const;
    /// Accumulated parameter gradients, zero for untouched parameters.
    std::vector<Matrix> parameter_gradients(const ParameterSet& params) const;

    // Used by operations.
    using Backward = std::function<void(Tape&, std::size_t self)>;
    Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
    Var record(Matrix value, std::span<const Var> inputs, Backward backward);
    const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
    const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
    bool tracks(std::size_t id) const { return nodes_[id].tracked; }
    template <typename Expr>
    void accumulate(std::size_t id, const Expr& g)
    {
        Node& n = nodes_[id];
        if (!n.tracked) {
            return;
        }
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        bool tracked = false;
        long parameter = -1;
    };

    bool gradients_;
    std::deque<Node> nodes_;
    std::vector<std::pair<std::size_t, std::size_t>> parameter_nodes_; // (param index, node id)
};

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1 x n row to every row of a.
Var add_row(const Var& a, const Var& row);
/// Row-wise layer normalization with per-column gain and bias rows.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var softmax_rows(const Var& x);
Var gelu(const Var& x);
Var silu(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
/// mean((a - target)^2) as a 1x1 node.
Var mse(const Var& a, const Matrix& target);
Var sum(const Var& a);
Var mean(const Var& a);

} // namespace ad
} // namespace loudgen
