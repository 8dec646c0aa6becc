#include "loudgen/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "loudgen/error.hpp"

namespace loudgen {

std::size_t ParameterSet::add(std::string name, Matrix value)
{
    require(!find(name).has_value(), ErrorCode::Configuration, "duplicate parameter name " + name);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return values_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& v : values_) {
        n += static_cast<std::size_t>(v.size());
    }
    return n;
}

std::optional<std::size_t> ParameterSet::find(const std::string& name) const
{
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<Matrix> ParameterSet::zeros_like() const
{
    std::vector<Matrix> out;
    out.reserve(values_.size());
    for (const auto& v : values_) {
        out.push_back(Matrix::Zero(v.rows(), v.cols()));
    }
    return out;
}

namespace ad {

const Matrix& Var::value() const
{
    return tape_->value_of(id_);
}

Var Tape::constant(Matrix value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, false, -1});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value)
{
    nodes_.push_back(Node{std::move(value), {}, {}, gradients_, -1});
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const ParameterSet& params, std::size_t index)
{
    for (const auto& [p, node] : parameter_nodes_) {
        if (p == index) {
            return Var(this, node);
        }
    }
    nodes_.push_back(Node{params.value(index), {}, {}, gradients_, static_cast<long>(index)});
    parameter_nodes_.emplace_back(index, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward)
{
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward)
{
    bool tracked = false;
    if (gradients_) {
        for (const Var& v : inputs) {
            tracked = tracked || nodes_[v.id()].tracked;
        }
    }
    nodes_.push_back(Node{std::move(value), {}, tracked ? std::move(backward) : Backward{}, tracked, -1});
    return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& root)
{
    require(gradients_, ErrorCode::Configuration, "backward on a tape without gradients");
    require(root.value().size() == 1, ErrorCode::Dimension, "backward needs a scalar root");
    if (!nodes_[root.id()].tracked) {
        return;
    }
    nodes_[root.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward && n.grad.size() != 0) {
            n.backward(*this, i);
        }
    }
}

const Matrix& Tape::grad(const Var& v) const
{
    return nodes_[v.id()].grad;
}

std::vector<Matrix> Tape::parameter_gradients(const ParameterSet& params) const
{
    std::vector<Matrix> out = params.zeros_like();
    for (const auto& [p, node] : parameter_nodes_) {
        if (nodes_[node].grad.size() != 0) {
            out[p] = nodes_[node].grad;
        }
    }
    return out;
}

namespace {

void same_tape(const Var& a, const Var& b)
{
    require(&a.tape() == &b.tape(), ErrorCode::Configuration, "operands live on different tapes");
}

void same_shape(const Var& a, const Var& b, const char* op)
{
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::Dimension,
            std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

} // namespace

Var matmul(const Var& a, const Var& b)
{
    same_tape(a, b);
    require(a.cols() == b.rows(), ErrorCode::Dimension, "matmul: inner dimensions differ");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        if (t.tracks(ia)) {
            t.accumulate(ia, g * t.value_of(ib).transpose());
        }
        if (t.tracks(ib)) {
            t.accumulate(ib, t.value_of(ia).transpose() * g);
        }
    });
}

Var matmul_nt(const Var& a, const Var& b)
{
    same_tape(a, b);
    require(a.cols() == b.cols(), ErrorCode::Dimension, "matmul_nt: inner dimensions differ");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(a.value() * b.value().transpose(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        if (t.tracks(ia)) {
            t.accumulate(ia, g * t.value_of(ib));
        }
        if (t.tracks(ib)) {
            t.accumulate(ib, g.transpose() * t.value_of(ia));
        }
    });
}

Var transpose(const Var& a)
{
    const std::size_t ia = a.id();
    return a.tape().record(a.value().transpose(), {a},
                           [ia](Tape& t, std::size_t self) { t.accumulate(ia, t.grad_of(self).transpose()); });
}

Var add(const Var& a, const Var& b)
{
    same_tape(a, b);
    same_shape(a, b, "add");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        t.accumulate(ia, t.grad_of(self));
        t.accumulate(ib, t.grad_of(self));
    });
}

Var sub(const Var& a, const Var& b)
{
    same_tape(a, b);
    same_shape(a, b, "sub");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        t.accumulate(ia, t.grad_of(self));
        t.accumulate(ib, -t.grad_of(self));
    });
}

Var mul(const Var& a, const Var& b)
{
    same_tape(a, b);
    same_shape(a, b, "mul");
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        if (t.tracks(ia)) {
            t.accumulate(ia, g.cwiseProduct(t.value_of(ib)));
        }
        if (t.tracks(ib)) {
            t.accumulate(ib, g.cwiseProduct(t.value_of(ia)));
        }
    });
}

Var scale(const Var& a, double s)
{
    const std::size_t ia = a.id();
    return a.tape().record(a.value() * s, {a},
                           [ia, s](Tape& t, std::size_t self) { t.accumulate(ia, t.grad_of(self) * s); });
}

Var add_row(const Var& a, const Var& row)
{
    same_tape(a, row);
    require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::Dimension, "add_row: row shape mismatch");
    const std::size_t ia = a.id(), ir = row.id();
    Matrix out = a.value();
    out.rowwise() += row.value().row(0);
    return a.tape().record(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        t.accumulate(ia, g);
        if (t.tracks(ir)) {
            t.accumulate(ir, g.colwise().sum());
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps)
{
    same_tape(x, gain);
    same_tape(x, bias);
    const Eigen::Index n = x.cols();
    require(gain.rows() == 1 && gain.cols() == n && bias.rows() == 1 && bias.cols() == n, ErrorCode::Dimension,
            "layer_norm: gain/bias shape mismatch");
    const Matrix& v = x.value();
    const Eigen::VectorXd mu = v.rowwise().mean();
    Matrix centered = v.colwise() - mu;
    const Eigen::VectorXd inv_std =
        ((centered.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt().matrix();
    Matrix normed = centered.array().colwise() * inv_std.array();
    Matrix out = normed.array().rowwise() * gain.value().row(0).array();
    out.rowwise() += bias.value().row(0);

    const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
    return x.tape().record(std::move(out), {x, gain, bias},
                           [ix, ig, ib, normed = std::move(normed), inv_std](Tape& t, std::size_t self) {
                               const Matrix& g = t.grad_of(self);
                               if (t.tracks(ig)) {
                                   t.accumulate(ig, g.cwiseProduct(normed).colwise().sum());
                               }
                               if (t.tracks(ib)) {
                                   t.accumulate(ib, g.colwise().sum());
                               }
                               if (t.tracks(ix)) {
                                   const Matrix gn = g.array().rowwise() * t.value_of(ig).row(0).array();
                                   const double cols = static_cast<double>(gn.cols());
                                   const Eigen::VectorXd mean_g = gn.rowwise().sum() / cols;
                                   const Eigen::VectorXd mean_gn = gn.cwiseProduct(normed).rowwise().sum() / cols;
                                   Matrix dx = gn.colwise() - mean_g;
                                   dx -= (normed.array().colwise() * mean_gn.array()).matrix();
                                   dx = dx.array().colwise() * inv_std.array();
                                   t.accumulate(ix, dx);
                               }
                           });
}

Var softmax_rows(const Var& x)
{
    Matrix y = x.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double m = y.row(r).maxCoeff();
        y.row(r) = (y.row(r).array() - m).exp();
        y.row(r) /= y.row(r).sum();
    }
    const std::size_t ix = x.id();
    return x.tape().record(y, {x}, [ix, y](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
        t.accumulate(ix, y.cwiseProduct(g.colwise() - dot));
    });
}

namespace {

template <typename F, typename D>
Var unary(const Var& x, F f, D derivative)
{
    Matrix y = x.value().unaryExpr(f);
    const std::size_t ix = x.id();
    return x.tape().record(std::move(y), {x}, [ix, derivative](Tape& t, std::size_t self) {
        t.accumulate(ix, t.grad_of(self).cwiseProduct(t.value_of(ix).unaryExpr(derivative)));
    });
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)

} // namespace

Var gelu(const Var& x)
{
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v))); },
        [](double v) {
            const double th = std::tanh(kGeluC * (v + 0.044715 * v * v * v));
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
        });
}

Var silu(const Var& x)
{
    return unary(
        x, [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
}

Var sigmoid(const Var& x)
{
    return unary(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double v) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 - s);
        });
}

Var tanh(const Var& x)
{
    return unary(
        x, [](double v) { return std::tanh(v); },
        [](double v) {
            const double th = std::tanh(v);
            return 1.0 - th * th;
        });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count)
{
    require(start >= 0 && count >= 0 && start + count <= x.cols(), ErrorCode::Dimension, "slice_cols out of range");
    const std::size_t ix = x.id();
    const Eigen::Index rows = x.rows(), cols = x.cols();
    return x.tape().record(x.value().middleCols(start, count), {x},
                           [ix, start, count, rows, cols](Tape& t, std::size_t self) {
                               Matrix g = Matrix::Zero(rows, cols);
                               g.middleCols(start, count) = t.grad_of(self);
                               t.accumulate(ix, g);
                           });
}

Var slice_rows(const Var& x, Eigen::Index start, Eigen::Index count)
{
    require(start >= 0 && count >= 0 && start + count <= x.rows(), ErrorCode::Dimension, "slice_rows out of range");
    const std::size_t ix = x.id();
    const Eigen::Index rows = x.rows(), cols = x.cols();
    return x.tape().record(x.value().middleRows(start, count), {x},
                           [ix, start, count, rows, cols](Tape& t, std::size_t self) {
                               Matrix g = Matrix::Zero(rows, cols);
                               g.middleRows(start, count) = t.grad_of(self);
                               t.accumulate(ix, g);
                           });
}

Var concat_cols(std::span<const Var> parts)
{
    require(!parts.empty(), ErrorCode::Dimension, "concat_cols of nothing");
    Eigen::Index cols = 0;
    for (const Var& p : parts) {
        require(p.rows() == parts.front().rows(), ErrorCode::Dimension, "concat_cols: row counts differ");
        cols += p.cols();
    }
    Matrix out(parts.front().rows(), cols);
    std::vector<std::pair<std::size_t, Eigen::Index>> layout;
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        layout.emplace_back(p.id(), at);
        at += p.cols();
    }
    return parts.front().tape().record(std::move(out), parts, [layout](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        for (const auto& [id, offset] : layout) {
            if (t.tracks(id)) {
                t.accumulate(id, g.middleCols(offset, t.value_of(id).cols()));
            }
        }
    });
}

Var concat_rows(std::span<const Var> parts)
{
    require(!parts.empty(), ErrorCode::Dimension, "concat_rows of nothing");
    Eigen::Index rows = 0;
    for (const Var& p : parts) {
        require(p.cols() == parts.front().cols(), ErrorCode::Dimension, "concat_rows: column counts differ");
        rows += p.rows();
    }
    Matrix out(rows, parts.front().cols());
    std::vector<std::pair<std::size_t, Eigen::Index>> layout;
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        layout.emplace_back(p.id(), at);
        at += p.rows();
    }
    return parts.front().tape().record(std::move(out), parts, [layout](Tape& t, std::size_t self) {
        const Matrix& g = t.grad_of(self);
        for (const auto& [id, offset] : layout) {
            if (t.tracks(id)) {
                t.accumulate(id, g.middleRows(offset, t.value_of(id).rows()));
            }
        }
    });
}

Var mse(const Var& a, const Matrix& target)
{
    require(a.rows() == target.rows() && a.cols() == target.cols(), ErrorCode::Dimension, "mse: shape mismatch");
    Matrix residual = a.value() - target;
    const double n = static_cast<double>(residual.size());
    Matrix out(1, 1);
    out(0, 0) = residual.squaredNorm() / n;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia, residual = std::move(residual), n](Tape& t, std::size_t self) {
        t.accumulate(ia, residual * (2.0 * t.grad_of(self)(0, 0) / n));
    });
}

Var sum(const Var& a)
{
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    const std::size_t ia = a.id();
    const Eigen::Index r = a.rows(), c = a.cols();
    return a.tape().record(std::move(out), {a}, [ia, r, c](Tape& t, std::size_t self) {
        t.accumulate(ia, Matrix::Constant(r, c, t.grad_of(self)(0, 0)));
    });
}

Var mean(const Var& a)
{
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

} // namespace ad
} // namespace loudgen
