#include "rct/net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "rct/objectives.hpp"
#include "rct/rng.hpp"

namespace rct {

void MlpSpec::validate() const {
    if (widths.size() < 2) throw ValidationError("MlpSpec: need at least input and output widths");
    for (int w : widths)
        if (w <= 0) throw ValidationError("MlpSpec: widths must be positive");
    if (widths.back() < 2) throw ValidationError("MlpSpec: class count must be >= 2");
}

void SgdSchedule::validate() const {
    if (lr0 <= 0) throw ValidationError("SgdSchedule: lr0 must be positive");
    if (momentum < 0 || momentum >= 1) throw ValidationError("SgdSchedule: momentum not in [0,1)");
    if (decay_factor <= 0 || decay_factor >= 1)
        throw ValidationError("SgdSchedule: decay factor must lie in (0,1)");
    for (std::size_t i = 1; i < decay_epochs.size(); ++i)
        if (decay_epochs[i] <= decay_epochs[i - 1])
            throw ValidationError("SgdSchedule: decay epochs must be strictly increasing");
}

double SgdSchedule::rate(int epoch) const {
    double r = lr0;
    for (int d : decay_epochs)
        if (epoch >= d) r *= decay_factor;
    return r;
}

SgdSchedule default_schedule(int epochs, double lr0, double momentum) {
    SgdSchedule s;
    s.lr0 = lr0;
    s.momentum = momentum;
    s.decay_factor = 0.1;
    int half = epochs / 2, three_q = (3 * epochs) / 4;
    if (half >= 1) s.decay_epochs.push_back(half);
    if (three_q > half) s.decay_epochs.push_back(three_q);
    return s;
}

Network Network::init(const MlpSpec& spec) {
    spec.validate();
    Network net;
    net.spec_ = spec;
    Rng rng(derive_seed(spec.seed, "mlp-init"));
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const int fan_in = spec.widths[l], fan_out = spec.widths[l + 1];
        const double limit = std::sqrt(6.0 / fan_in);
        Eigen::ArrayXd w(static_cast<Eigen::Index>(fan_in) * fan_out);
        for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
        net.params_.push_back(Tensor::from_array({fan_in, fan_out}, std::move(w), true));
        net.params_.push_back(Tensor::zeros({fan_out}, true));
    }
    return net;
}

Network Network::clone() const {
    Network out;
    out.spec_ = spec_;
    out.params_.reserve(params_.size());
    for (const Tensor& p : params_)
        out.params_.push_back(
            Tensor::from_array(p.shape(), p.values(), p.requires_grad()));
    return out;
}

Tensor Network::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.shape()[1] != input_dim())
        throw DimensionError("forward: expected (batch x " + std::to_string(input_dim()) +
                             ") input");
    Tensor h = x;
    const std::size_t layers = params_.size() / 2;
    for (std::size_t l = 0; l < layers; ++l) {
        h = add(matmul(h, params_[2 * l]), params_[2 * l + 1]);
        if (l + 1 < layers) h = relu(h);
    }
    return h;
}

void Network::zero_grads() {
    for (Tensor& p : params_) p.zero_grad();
}

Eigen::MatrixXd Network::predict_logits(const Eigen::MatrixXd& x) const {
    NoGradGuard ng;
    return forward(Tensor::from_matrix(x)).matrix();
}

Eigen::MatrixXd Network::predict_probs(const Eigen::MatrixXd& x) const {
    return softmax_rows(predict_logits(x));
}

std::vector<int> Network::predict_labels(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd logits = predict_logits(x);
    std::vector<int> labels(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best;
        logits.row(i).maxCoeff(&best);
        labels[i] = static_cast<int>(best);
    }
    return labels;
}

// -------------------------------------------------------------- persistence

namespace {

constexpr std::uint32_t kMagic = 0x4e54'4352;  // "RCTN"
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

void Network::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("save: cannot open " + path.string());
    put_u32(os, kMagic);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(spec_.widths.size()));
    for (int w : spec_.widths) put_u32(os, static_cast<std::uint32_t>(w));
    put_u64(os, spec_.seed);
    for (const Tensor& p : params_)
        for (Eigen::Index i = 0; i < p.size(); ++i) put_f64(os, p.values()[i]);
    if (!os) throw ValidationError("save: write failed for " + path.string());
}

Network Network::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ValidationError("load: cannot open " + path.string());
    if (get_u32(is) != kMagic) throw ParseError("load: bad magic in " + path.string());
    if (get_u32(is) != kVersion) throw ParseError("load: unsupported version");
    MlpSpec spec;
    const std::uint32_t nw = get_u32(is);
    if (nw < 2 || nw > 64) throw ParseError("load: implausible layer count");
    spec.widths.resize(nw);
    for (auto& w : spec.widths) w = static_cast<int>(get_u32(is));
    spec.seed = get_u64(is);

    Network net = Network::init(spec);
    for (Tensor& p : net.params_) {
        Eigen::ArrayXd& v = p.mutable_values();
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = get_f64(is);
    }
    if (!is) throw ParseError("load: truncated file " + path.string());
    return net;
}

// ---------------------------------------------------------------- optimizer

SgdOptimizer::SgdOptimizer(Network& net) : net_(&net) {
    velocity_.reserve(net.parameters().size());
    for (const Tensor& p : net.parameters())
        velocity_.push_back(Eigen::ArrayXd::Zero(p.size()));
}

void SgdOptimizer::step(const SgdSchedule& schedule, int epoch) {
    const double lr = schedule.rate(epoch);
    auto& params = net_->parameters();
    for (const Tensor& p : params)
        if (!p.has_grad())
            throw ContractError("sgd_step: parameter gradient missing; run backward first");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i] = schedule.momentum * velocity_[i] - lr * params[i].grad();
        params[i].mutable_values() += velocity_[i];
        params[i].zero_grad();
    }
}

// -------------------------------------------------------------- ParamFreeze

ParamFreeze::ParamFreeze(const Network& net) : params_(net.parameters()) {
    saved_.reserve(params_.size());
    for (Tensor& p : params_) {
        saved_.push_back(p.requires_grad());
        p.set_requires_grad(false);
    }
}

ParamFreeze::~ParamFreeze() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(saved_[i]);
}

}  // namespace rct
