#include "rct/objectives.hpp"

#include <string>

#include "rct/net.hpp"

namespace rct {

namespace {

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": input must be rank-2");
}

}  // namespace

Tensor softmax(const Tensor& logits) {
    require_rank2(logits, "softmax");
    const int m = logits.shape()[0], c = logits.shape()[1];

    Eigen::ArrayXd out(logits.size());
    Eigen::Map<const RowMat> z(logits.values().data(), m, c);
    Eigen::Map<RowMat> p(out.data(), m, c);
    for (int i = 0; i < m; ++i) {
        Eigen::ArrayXd row = z.row(i).array() - z.row(i).maxCoeff();
        row = row.exp();
        p.row(i) = row / row.sum();
    }
    if (!out.allFinite()) throw NonFiniteError("softmax: non-finite value");

    bool rg = grad_enabled() && logits.requires_grad();
    Tensor r = Tensor::from_array({m, c}, std::move(out), false);
    r.set_requires_grad(rg);
    if (rg) {
        auto ln = logits.node_ptr();
        auto rn = r.node_ptr();
        Tape::current().record({rn, {ln.get()}, [ln, rn, m, c]() {
            if (!ln->requires_grad) return;
            if (ln->grad.size() == 0) ln->grad = Eigen::ArrayXd::Zero(ln->values.size());
            Eigen::Map<const RowMat> p(rn->values.data(), m, c);
            Eigen::Map<const RowMat> g(rn->grad.data(), m, c);
            Eigen::Map<RowMat> gin(ln->grad.data(), m, c);
            // d softmax: p .* (g - <g, p>) per row
            for (int i = 0; i < m; ++i) {
                double dot = g.row(i).dot(p.row(i));
                gin.row(i).array() += p.row(i).array() * (g.row(i).array() - dot);
            }
        }});
    }
    return r;
}

Tensor cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    require_rank2(probs, "cross_entropy");
    const int m = probs.shape()[0], c = probs.shape()[1];
    if (static_cast<int>(labels.size()) != m)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(m) + " rows");
    for (int y : labels)
        if (y < 0 || y >= c)
            throw ValidationError("cross_entropy: label " + std::to_string(y) +
                                  " out of range [0, " + std::to_string(c) + ")");

    Eigen::Map<const RowMat> p(probs.values().data(), m, c);
    double loss = 0.0;
    for (int i = 0; i < m; ++i) loss -= std::log(std::max(p(i, labels[i]), kLogFloor));
    loss /= m;
    if (!std::isfinite(loss)) throw NonFiniteError("cross_entropy: non-finite value");

    bool rg = grad_enabled() && probs.requires_grad();
    Tensor r = Tensor::scalar(loss);
    r.set_requires_grad(rg);
    if (rg) {
        auto pn = probs.node_ptr();
        auto rn = r.node_ptr();
        auto ys = labels;
        Tape::current().record({rn, {pn.get()}, [pn, rn, ys, m, c]() {
            if (!pn->requires_grad) return;
            if (pn->grad.size() == 0) pn->grad = Eigen::ArrayXd::Zero(pn->values.size());
            const double g = rn->grad[0];
            for (int i = 0; i < m; ++i) {
                const double pi = pn->values[static_cast<Eigen::Index>(i) * c + ys[i]];
                if (pi >= kLogFloor)
                    pn->grad[static_cast<Eigen::Index>(i) * c + ys[i]] -= g / (pi * m);
            }
        }});
    }
    return r;
}

Tensor kl_div(const Tensor& p, const Tensor& q) {
    require_rank2(p, "kl_div");
    if (p.shape() != q.shape()) throw DimensionError("kl_div: shapes disagree");
    const int batch = p.shape()[0];
    // mean over rows of sum_i p_i (ln p_i - ln q_i); log() floors its input,
    // and p_i = 0 contributes 0 * ln(floor) = 0.
    Tensor per_element = mul(p, sub(log(p), log(q)));
    return scale(sum(per_element), 1.0 / batch);
}

Tensor js_div(const Tensor& p, const Tensor& q) {
    Tensor m = scale(add(p, q), 0.5);
    return scale(add(kl_div(p, m), kl_div(q, m)), 0.5);
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::ArrayXd row = logits.row(i).array() - logits.row(i).maxCoeff();
        row = row.exp();
        p.row(i) = row / row.sum();
    }
    return p;
}

bool is_distribution_rows(const Eigen::MatrixXd& m, double tol) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if ((m.row(i).array() < 0.0).any() || (m.row(i).array() > 1.0).any()) return false;
        if (std::abs(m.row(i).sum() - 1.0) > tol) return false;
    }
    return true;
}

double total_variance(const Network& f1, const Network& f2, const Eigen::MatrixXd& data) {
    if (data.rows() == 0) throw ContractError("total_variance: empty data");
    NoGradGuard ng;
    Eigen::MatrixXd p1 = f1.predict_probs(data);
    Eigen::MatrixXd p2 = f2.predict_probs(data);
    return 0.5 * (p1 - p2).array().abs().rowwise().sum().mean();
}

}  // namespace rct
