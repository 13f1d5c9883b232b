#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <vector>

#include "rct/error.hpp"

namespace rct {

using Shape = std::vector<int>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// log() floors its input here before evaluating, so saturated softmax outputs
// feed finite values into CE/KL.
inline constexpr double kLogFloor = 1e-12;

namespace detail {

struct TensorNode {
    Shape shape;
    Eigen::ArrayXd values;  // flat, row-major
    Eigen::ArrayXd grad;    // empty until backward touches this node
    bool requires_grad = false;
};

}  // namespace detail

// Dense 64-bit float array with optional participation in the gradient tape.
// Value-semantic handle: copies share the underlying node, as graph edges do.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_array(Shape shape, Eigen::ArrayXd values, bool requires_grad = false);
    static Tensor from_values(Shape shape, const std::vector<double>& values,
                              bool requires_grad = false);
    static Tensor from_matrix(const Eigen::MatrixXd& m, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    Eigen::Index size() const { return node_->values.size(); }

    const Eigen::ArrayXd& values() const { return node_->values; }
    // In-place mutation of a leaf (optimizer updates). Does not touch the tape.
    Eigen::ArrayXd& mutable_values() { return node_->values; }

    // Rank-2 tensors viewed as a matrix (copying; row-major reinterpret).
    Eigen::MatrixXd matrix() const;
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return node_->grad.size() != 0; }
    const Eigen::ArrayXd& grad() const;
    void zero_grad() { node_->grad.resize(0); }

    detail::TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::TensorNode> node_;
    friend Tensor make_op_output(Shape, Eigen::ArrayXd, bool);
};

// ---------------------------------------------------------------------------
// Tape: Wengert list of recorded operations. Entries are appended in execution
// order, so inputs always precede the ops that consume them; backward() replays
// the list once in reverse from the root.
// ---------------------------------------------------------------------------

class Tape {
public:
    struct Entry {
        std::shared_ptr<detail::TensorNode> out;
        std::vector<detail::TensorNode*> inputs;  // owned by the pull closure
        std::function<void()> pull;  // accumulates out->grad into input grads
    };

    // One tape per thread; distinct threads never share tensors by contract.
    static Tape& current();

    bool recording() const { return disable_depth_ == 0; }
    void record(Entry e) { entries_.push_back(std::move(e)); }

    std::size_t size() const { return entries_.size(); }
    void truncate(std::size_t mark);
    void clear() { entries_.clear(); }

    void backward(const std::shared_ptr<detail::TensorNode>& root);

private:
    friend class NoGradGuard;
    std::vector<Entry> entries_;
    int disable_depth_ = 0;
};

// Scoped "no recording" region: ops run value-only and can never be reached by
// a later backward pass.
class NoGradGuard {
public:
    NoGradGuard() { ++Tape::current().disable_depth_; }
    ~NoGradGuard() { --Tape::current().disable_depth_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Scoped truncation: drops every op recorded after construction. Training
// loops wrap each iteration so the tape does not grow without bound.
class TapeScope {
public:
    TapeScope() : mark_(Tape::current().size()) {}
    ~TapeScope() { Tape::current().truncate(mark_); }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    std::size_t mark_;
};

inline bool grad_enabled() { return Tape::current().recording(); }

// Populates grad on every requires_grad tensor reachable from `root`.
// root must be scalar and recorded (or a requires_grad leaf).
void backward(const Tensor& root);

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops broadcast the second operand when its
// shape is a trailing suffix of the first's (bias-style expansion); nothing
// more general.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);                         // ln(max(x, kLogFloor))
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sign(const Tensor& a);                        // sign(0) = 0; not differentiable

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }

}  // namespace rct
