#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rct/attacks.hpp"
#include "rct/data.hpp"
#include "rct/net.hpp"

namespace rct {

enum class TrainMethod { standard, madry, trades };

std::string to_string(TrainMethod m);
TrainMethod train_method_from_string(const std::string& s);

struct TrainerConfig {
    TrainMethod method = TrainMethod::trades;
    double trades_lambda = 1.0;  // ignored for madry/standard
    AttackSpec attack{0.031, 0.007, 10, 0.0, 1.0, /*random_start=*/true};
    int epochs = 80;
    int batch = 32;
    SgdSchedule schedule = default_schedule(80);

    bool operator==(const TrainerConfig&) const = default;
    void validate() const;
};

// A named evaluation attack (e.g. PGD5, PGD20).
struct EvalAttack {
    std::string name;
    AttackSpec spec;

    bool operator==(const EvalAttack&) const = default;
};

struct CurveRow {
    int epoch = 0;
    double train_loss = 0.0;
    double std_acc = 0.0;
    std::map<std::string, double> robust_acc;
};

// Optional per-epoch evaluation during training.
struct EvalHooks {
    const Dataset* test = nullptr;
    std::vector<EvalAttack> attacks;
    int every = 1;
};

struct TrainResult {
    Network net;
    std::vector<CurveRow> curves;
};

struct EvalReport {
    double standard_accuracy = 0.0;
    std::map<std::string, double> robust_accuracy;
    std::optional<double> pseudo_label_accuracy;
    std::vector<CurveRow> curves;
};

// ---------------------------------------------------------------- training

// Generic minibatch loop shared by every trainer: per epoch, shuffle, build
// the batch loss, backprop, momentum-SGD step. The loss strategy receives the
// attack RNG stream so adversarial objectives stay decoupled from shuffling.
using BatchLossFn =
    std::function<Tensor(const Network&, const Eigen::MatrixXd&, const std::vector<int>&, Rng&)>;
using EpochHookFn = std::function<void(int epoch, double mean_loss)>;

// Continues training `net` in place for `epochs` epochs starting at
// `epoch_offset` (schedule decay counts global epochs).
void train_loop(Network& net, SgdOptimizer& opt, const Dataset& data, int epochs, int batch,
                const SgdSchedule& schedule, std::uint64_t seed, const BatchLossFn& loss_fn,
                const EpochHookFn& hook = {}, int epoch_offset = 0);

// Plain ERM on cross-entropy; the baseline every adversarial method reduces
// to at epsilon = 0 (madry) or lambda = 0 (trades).
TrainResult standard_train(const Dataset& S, const TrainerConfig& cfg, const MlpSpec& spec,
                           std::uint64_t seed, const EvalHooks* hooks = nullptr);

// Min-max training: each batch is replaced by PGD adversarial examples
// against the current network before the descent step.
TrainResult madry_train(const Dataset& S, const TrainerConfig& cfg, const MlpSpec& spec,
                        std::uint64_t seed, const EvalHooks* hooks = nullptr);

// Natural CE plus lambda * KL(p(x) || p(x')) where x' maximizes that KL
// within the perturbation region (PGD on the KL objective).
TrainResult trades_train(const Dataset& S, const TrainerConfig& cfg, const MlpSpec& spec,
                         std::uint64_t seed, const EvalHooks* hooks = nullptr);

// Dispatch on cfg.method; `warm_start` substitutes the initial network.
TrainResult adversarial_train(const Dataset& S, const TrainerConfig& cfg, const MlpSpec& spec,
                              std::uint64_t seed, const EvalHooks* hooks = nullptr,
                              const Network* warm_start = nullptr);

// -------------------------------------------------------------- evaluation

// Argmax accuracy on natural inputs.
double eval_standard(const Network& net, const Dataset& test);

// Accuracy on PGD examples generated against `net` with the true labels.
// Non-random-start unless the spec says otherwise (then seeded by `seed`).
double eval_robust(const Network& net, const Dataset& test, const AttackSpec& attack,
                   std::uint64_t seed = 0);

struct Annotation;

// Fraction of pseudo labels matching the unlabeled set's hidden truth.
double pseudo_label_accuracy(const std::vector<int>& pseudo_labels, const Dataset& du);

}  // namespace rct
