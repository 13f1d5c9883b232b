#pragma once

#include <functional>
#include <vector>

#include "rct/attacks.hpp"
#include "rct/data.hpp"
#include "rct/net.hpp"

namespace rct {

// Which of the two co-trained networks labels the unlabeled set at the end.
enum class AnnotatorPick { lower_loss, f1, f2 };

struct CoTrainConfig {
    double lambda1 = 10.0;  // consensus JS on shared unlabeled data
    double lambda2 = 0.5;   // JS against peer view of labeled adversarial examples
    double lambda3 = 0.5;   // JS against peer view of unlabeled adversarial examples
    AttackSpec attack{0.02, 0.02, 1, 0.0, 1.0, /*random_start=*/false};
    int epochs = 150;  // T_L
    int batch_labeled = 8;
    int batch_unlabeled = 64;
    SgdSchedule schedule = default_schedule(150);
    int warmup_epochs = 0;  // 0 = constant lambdas; else linear ramp-in
    AnnotatorPick pick = AnnotatorPick::lower_loss;

    bool operator==(const CoTrainConfig&) const = default;
    void validate() const;
};

struct SelfTrainConfig {
    double tau = 0.95;  // recruitment confidence threshold
    int rounds = 10;
    int epochs_per_round = 20;
    int batch = 32;
    SgdSchedule schedule = default_schedule(200);

    bool operator==(const SelfTrainConfig&) const = default;
    void validate() const;
};

struct PretrainConfig {
    int epochs = 200;
    int batch = 32;
    SgdSchedule schedule = default_schedule(200);

    bool operator==(const PretrainConfig&) const = default;
    void validate() const;
};

// Per-epoch diagnostics emitted to the harness. Fields that a strategy does
// not produce are NaN; disabled loss terms are 0.
struct EpochStats {
    int epoch = 0;
    double ce1 = 0.0;
    double ce2 = 0.0;
    double js_consensus = 0.0;
    double js_adv_labeled = 0.0;
    double js_adv_unlabeled = 0.0;
    double total_variance = 0.0;
    double pseudo_accuracy = 0.0;
};

struct Annotation {
    std::vector<int> pseudo_labels;     // one per unlabeled sample
    std::vector<double> confidence;     // max softmax probability at labeling time
    int annotator_id = 0;               // 0 = f1, 1 = f2 (0 for single-network methods)
    std::vector<EpochStats> history;
    std::vector<int> recruited_per_round;  // self-training only
};

// Metric callback: maps a candidate pseudo-labeling of D_U to its accuracy.
// Built by the harness from the truth sidecar; annotators never see the
// labels themselves. Unset = accuracy logged as NaN.
using PseudoAccuracyFn = std::function<double(const std::vector<int>&)>;

// Train once on S_L, then label all of D_U in one pass (the RST annotator).
Annotation pretrained_annotator(const Dataset& labeled, const Dataset& unlabeled,
                                const MlpSpec& spec, const PretrainConfig& cfg,
                                std::uint64_t seed, const PseudoAccuracyFn& accuracy_fn = {});

// Iteratively recruit unlabeled points whose confidence exceeds tau into the
// training pool with their argmax labels. Recruited labels are permanent;
// points never recruited get the final network's argmax.
Annotation self_train(const Dataset& labeled, const Dataset& unlabeled, const MlpSpec& spec,
                      const SelfTrainConfig& cfg, std::uint64_t seed,
                      const PseudoAccuracyFn& accuracy_fn = {});

// Two networks with different seeds and labeled-data orders, tied by a
// consensus JS term on shared unlabeled batches (lambda2 = lambda3 = 0).
Annotation vanilla_cotrain(const Dataset& labeled, const Dataset& unlabeled,
                           const MlpSpec& spec, const CoTrainConfig& cfg, std::uint64_t seed1,
                           std::uint64_t seed2, const PseudoAccuracyFn& accuracy_fn = {});

// Co-training plus the divergence-preserving terms: each network also matches
// its peer's view of adversarial examples crafted against itself.
Annotation deep_cotrain(const Dataset& labeled, const Dataset& unlabeled, const MlpSpec& spec,
                        const CoTrainConfig& cfg, std::uint64_t seed1, std::uint64_t seed2,
                        const PseudoAccuracyFn& accuracy_fn = {});

// The accuracy callback for a sidecar-carrying unlabeled set. Metric-layer
// code: this is the only path from an annotation run to the hidden truth.
PseudoAccuracyFn make_pseudo_accuracy_fn(const Dataset& unlabeled);

}  // namespace rct
