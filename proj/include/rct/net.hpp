#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rct/tensor.hpp"

namespace rct {

// Fully-connected ReLU classifier layout: layer widths from input dimension
// to class count. Activation is ReLU on every hidden layer, raw logits out.
struct MlpSpec {
    std::vector<int> widths;
    std::uint64_t seed = 0;

    void validate() const;
    int input_dim() const { return widths.front(); }
    int class_count() const { return widths.back(); }
};

// Step-decay SGD schedule: rate(epoch) = lr0 * factor^(#decay epochs <= epoch).
struct SgdSchedule {
    double lr0 = 0.1;
    double momentum = 0.9;
    std::vector<int> decay_epochs;
    double decay_factor = 0.1;

    bool operator==(const SgdSchedule&) const = default;
    void validate() const;
    double rate(int epoch) const;
};

// Conventional schedule for a run of `epochs`: decay by 0.1 at 50% and 75%.
SgdSchedule default_schedule(int epochs, double lr0 = 0.1, double momentum = 0.9);

class Network {
public:
    Network() = default;

    // He-style fan-in uniform weights, zero biases; deterministic in spec.seed.
    static Network init(const MlpSpec& spec);

    // Copies share parameter storage (Tensor is a handle); clone() detaches.
    Network clone() const;

    // x is (batch x input_dim); returns raw logits (batch x classes).
    Tensor forward(const Tensor& x) const;

    const MlpSpec& spec() const { return spec_; }
    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }
    int input_dim() const { return spec_.input_dim(); }
    int class_count() const { return spec_.class_count(); }

    void zero_grads();

    // Metric-path conveniences; never recorded on the tape.
    Eigen::MatrixXd predict_logits(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd predict_probs(const Eigen::MatrixXd& x) const;
    std::vector<int> predict_labels(const Eigen::MatrixXd& x) const;

    // Flat binary format: magic, version, layer widths, seed, then raw
    // little-endian float64 parameters in layer order.
    void save(const std::filesystem::path& path) const;
    static Network load(const std::filesystem::path& path);

private:
    MlpSpec spec_;
    std::vector<Tensor> params_;  // W0, b0, W1, b1, ... ; W stored (in x out)
};

// Momentum SGD bound to one network's parameter list.
class SgdOptimizer {
public:
    explicit SgdOptimizer(Network& net);

    // velocity = momentum * velocity - rate(epoch) * grad; param += velocity;
    // grads cleared. Throws ContractError if any parameter grad is missing.
    void step(const SgdSchedule& schedule, int epoch);

private:
    Network* net_;
    std::vector<Eigen::ArrayXd> velocity_;
};

// Temporarily strips requires_grad from all parameters, so input-gradient
// passes (attack generation) cannot deposit gradients on them.
class ParamFreeze {
public:
    explicit ParamFreeze(const Network& net);
    ~ParamFreeze();
    ParamFreeze(const ParamFreeze&) = delete;
    ParamFreeze& operator=(const ParamFreeze&) = delete;

private:
    std::vector<Tensor> params_;
    std::vector<bool> saved_;
};

}  // namespace rct
