#include "rct/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace rct {

namespace {

Eigen::Index shape_size(const Shape& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ")";
    return os.str();
}

void check_finite(const Eigen::ArrayXd& v, const char* where) {
    if (!v.allFinite()) throw NonFiniteError(std::string(where) + ": non-finite value");
}

std::shared_ptr<detail::TensorNode> make_node(Shape shape, Eigen::ArrayXd values,
                                              bool requires_grad) {
    auto n = std::make_shared<detail::TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return n;
}

void ensure_grad(detail::TensorNode* n) {
    if (n->grad.size() == 0) n->grad = Eigen::ArrayXd::Zero(n->values.size());
}

}  // namespace

// ----------------------------------------------------------------- factories

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Eigen::Index n = shape_size(shape);
    return Tensor(make_node(std::move(shape), Eigen::ArrayXd::Zero(n), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Eigen::Index n = shape_size(shape);
    Eigen::ArrayXd v = Eigen::ArrayXd::Constant(n, value);
    check_finite(v, "full");
    return Tensor(make_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from_array(Shape shape, Eigen::ArrayXd values, bool requires_grad) {
    if (shape_size(shape) != values.size())
        throw DimensionError("from_array: shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    check_finite(values, "from_array");
    return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values, bool requires_grad) {
    Eigen::ArrayXd v =
        Eigen::Map<const Eigen::ArrayXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    return from_array(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m, bool requires_grad) {
    RowMat rm = m;
    Eigen::ArrayXd v = Eigen::Map<const Eigen::ArrayXd>(rm.data(), rm.size());
    return from_array({static_cast<int>(m.rows()), static_cast<int>(m.cols())}, std::move(v),
                      requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_array({1}, Eigen::ArrayXd::Constant(1, value), requires_grad);
}

Eigen::MatrixXd Tensor::matrix() const {
    if (rank() != 2) throw DimensionError("matrix(): tensor is not rank-2");
    return Eigen::Map<const RowMat>(node_->values.data(), shape()[0], shape()[1]);
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item(): tensor is not scalar");
    return node_->values[0];
}

const Eigen::ArrayXd& Tensor::grad() const {
    if (!has_grad()) throw ContractError("grad(): no gradient has been computed");
    return node_->grad;
}

// ---------------------------------------------------------------------- tape

Tape& Tape::current() {
    static thread_local Tape tape;
    return tape;
}

void Tape::truncate(std::size_t mark) {
    if (mark < entries_.size()) entries_.resize(mark);
}

void Tape::backward(const std::shared_ptr<detail::TensorNode>& root) {
    ensure_grad(root.get());
    root->grad[0] = 1.0;

    // Find the entry that produced the root, then sweep backwards. Appending
    // order is topological, so one reverse pass pulls each reachable entry
    // exactly once; reachability spreads from the root through entry inputs.
    std::size_t end = entries_.size();
    while (end > 0 && entries_[end - 1].out.get() != root.get()) --end;

    std::unordered_set<const detail::TensorNode*> reachable;
    reachable.insert(root.get());
    for (std::size_t i = end; i-- > 0;) {
        const Entry& e = entries_[i];
        if (!reachable.count(e.out.get())) continue;
        e.pull();
        for (detail::TensorNode* in : e.inputs) reachable.insert(in);
    }
}

void backward(const Tensor& root) {
    if (!root.defined()) throw ContractError("backward: undefined tensor");
    if (root.size() != 1) throw ContractError("backward: root must be scalar");
    if (!root.requires_grad())
        throw ContractError("backward: root is not on the tape (requires_grad is false)");
    Tape::current().backward(root.node_ptr());
}

// ------------------------------------------------------------ opscaffolding

Tensor make_op_output(Shape shape, Eigen::ArrayXd values, bool requires_grad) {
    return Tensor(make_node(std::move(shape), std::move(values), requires_grad));
}

namespace {

bool track(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// The pull closure owns shared_ptrs to its operands, keeping the subgraph
// alive for the lifetime of the tape entry.
void record(const Tensor& out, std::vector<detail::TensorNode*> inputs,
            std::function<void()> pull) {
    Tape::current().record({out.node_ptr(), std::move(inputs), std::move(pull)});
}

void accumulate(const std::shared_ptr<detail::TensorNode>& n, const Eigen::ArrayXd& g) {
    if (!n->requires_grad) return;
    ensure_grad(n.get());
    n->grad += g;
}

// Broadcast plan for elementwise binary ops: shapes equal (repeat == 1) or
// b's shape is a trailing suffix of a's (b tiled `repeat` times).
struct Broadcast {
    Eigen::Index repeat;
    Eigen::Index block;  // == b.size()
};

Broadcast broadcast_plan(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sb.size() > sa.size())
        throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(sb) + " onto " +
                             shape_str(sa));
    for (std::size_t i = 0; i < sb.size(); ++i)
        if (sb[sb.size() - 1 - i] != sa[sa.size() - 1 - i])
            throw DimensionError(std::string(op) + ": shapes " + shape_str(sa) + " and " +
                                 shape_str(sb) + " are not broadcast-compatible");
    return {a.size() / std::max<Eigen::Index>(b.size(), 1), b.size()};
}

Eigen::ArrayXd tile(const Eigen::ArrayXd& v, const Broadcast& bc) {
    if (bc.repeat == 1) return v;
    Eigen::ArrayXd out(bc.repeat * bc.block);
    for (Eigen::Index r = 0; r < bc.repeat; ++r) out.segment(r * bc.block, bc.block) = v;
    return out;
}

// Sum the gradient over the leading (tiled) dimension back to b's shape.
Eigen::ArrayXd fold(const Eigen::ArrayXd& g, const Broadcast& bc) {
    if (bc.repeat == 1) return g;
    Eigen::ArrayXd out = Eigen::ArrayXd::Zero(bc.block);
    for (Eigen::Index r = 0; r < bc.repeat; ++r) out += g.segment(r * bc.block, bc.block);
    return out;
}

template <typename Fwd, typename Bwd>
Tensor binary_broadcast_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
    Broadcast bc = broadcast_plan(a, b, name);
    Eigen::ArrayXd out = fwd(a.values(), tile(b.values(), bc));
    check_finite(out, name);
    Tensor r = make_op_output(a.shape(), std::move(out), track({&a, &b}));
    if (r.requires_grad()) {
        auto an = a.node_ptr();
        auto bn = b.node_ptr();
        auto rn = r.node_ptr();
        record(r, {an.get(), bn.get()}, [an, bn, rn, bc, bwd]() {
            auto [ga, gb] = bwd(rn->grad, an->values, bn->values, bc);
            accumulate(an, ga);
            if (bn->requires_grad) accumulate(bn, fold(gb, bc));
        });
    }
    return r;
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd, Bwd bwd) {
    Eigen::ArrayXd out = fwd(a.values());
    check_finite(out, name);
    Tensor r = make_op_output(a.shape(), std::move(out), track({&a}));
    if (r.requires_grad()) {
        auto an = a.node_ptr();
        auto rn = r.node_ptr();
        record(r, {an.get()},
               [an, rn, bwd]() { accumulate(an, bwd(rn->grad, an->values, rn->values)); });
    }
    return r;
}

}  // namespace

// ----------------------------------------------------------------------- ops

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, "add", [](const auto& x, const auto& y) -> Eigen::ArrayXd { return x + y; },
        [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&,
           const Broadcast&) { return std::pair{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, "sub", [](const auto& x, const auto& y) -> Eigen::ArrayXd { return x - y; },
        [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&,
           const Broadcast&) { return std::pair{g, Eigen::ArrayXd(-g)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, "mul", [](const auto& x, const auto& y) -> Eigen::ArrayXd { return x * y; },
        [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& av, const Eigen::ArrayXd& bv,
           const Broadcast& bc) {
            Eigen::ArrayXd ga = g * tile(bv, bc);
            Eigen::ArrayXd gb = g * av;
            return std::pair{std::move(ga), std::move(gb)};
        });
}

Tensor scale(const Tensor& a, double c) {
    return unary_op(
        a, "scale", [c](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x * c; },
        [c](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd&)
            -> Eigen::ArrayXd { return g * c; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be rank-2");
    const int m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));

    Eigen::Map<const RowMat> ma(a.values().data(), m, k);
    Eigen::Map<const RowMat> mb(b.values().data(), k, n);
    Eigen::ArrayXd out(static_cast<Eigen::Index>(m) * n);
    Eigen::Map<RowMat>(out.data(), m, n) = ma * mb;
    check_finite(out, "matmul");

    Tensor r = make_op_output({m, n}, std::move(out), track({&a, &b}));
    if (r.requires_grad()) {
        auto an = a.node_ptr();
        auto bn = b.node_ptr();
        auto rn = r.node_ptr();
        record(r, {an.get(), bn.get()}, [an, bn, rn, m, k, n]() {
            Eigen::Map<const RowMat> g(rn->grad.data(), m, n);
            Eigen::Map<const RowMat> av(an->values.data(), m, k);
            Eigen::Map<const RowMat> bv(bn->values.data(), k, n);
            if (an->requires_grad) {
                ensure_grad(an.get());
                Eigen::Map<RowMat>(an->grad.data(), m, k) += g * bv.transpose();
            }
            if (bn->requires_grad) {
                ensure_grad(bn.get());
                Eigen::Map<RowMat>(bn->grad.data(), k, n) += av.transpose() * g;
            }
        });
    }
    return r;
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, "relu", [](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.max(0.0); },
        [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&)
            -> Eigen::ArrayXd { return (x > 0.0).select(g, 0.0); });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, "exp", [](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.exp(); },
        [](const Eigen::ArrayXd& g, const Eigen::ArrayXd&, const Eigen::ArrayXd& out)
            -> Eigen::ArrayXd { return g * out; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a, "log",
        [](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.max(kLogFloor).log(); },
        [](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&)
            -> Eigen::ArrayXd { return (x >= kLogFloor).select(g / x, 0.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo < hi)) throw ContractError("clamp: lo must be < hi");
    return unary_op(
        a, "clamp",
        [lo, hi](const Eigen::ArrayXd& x) -> Eigen::ArrayXd { return x.max(lo).min(hi); },
        [lo, hi](const Eigen::ArrayXd& g, const Eigen::ArrayXd& x, const Eigen::ArrayXd&)
            -> Eigen::ArrayXd { return (x >= lo && x <= hi).select(g, 0.0); });
}

Tensor sign(const Tensor& a) {
    Eigen::ArrayXd out =
        a.values().unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    // Piecewise constant: gradient is zero a.e., so the output is a constant.
    return make_op_output(a.shape(), std::move(out), false);
}

Tensor sum(const Tensor& a) {
    Eigen::ArrayXd out = Eigen::ArrayXd::Constant(1, a.values().sum());
    check_finite(out, "sum");
    Tensor r = make_op_output({1}, std::move(out), track({&a}));
    if (r.requires_grad()) {
        auto an = a.node_ptr();
        auto rn = r.node_ptr();
        record(r, {an.get()}, [an, rn]() {
            accumulate(an, Eigen::ArrayXd::Constant(an->values.size(), rn->grad[0]));
        });
    }
    return r;
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    Eigen::ArrayXd out = Eigen::ArrayXd::Constant(1, a.values().sum() * inv);
    check_finite(out, "mean");
    Tensor r = make_op_output({1}, std::move(out), track({&a}));
    if (r.requires_grad()) {
        auto an = a.node_ptr();
        auto rn = r.node_ptr();
        record(r, {an.get()}, [an, rn, inv]() {
            accumulate(an, Eigen::ArrayXd::Constant(an->values.size(), rn->grad[0] * inv));
        });
    }
    return r;
}

}  // namespace rct
