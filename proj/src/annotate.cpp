#include "rct/annotate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rct/objectives.hpp"
#include "rct/robustify.hpp"

namespace rct {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_inputs(const Dataset& labeled, const Dataset& unlabeled) {
    labeled.validate();
    unlabeled.validate();
    if (labeled.size() == 0) throw ValidationError("annotate: labeled set is empty");
    if (!labeled.fully_labeled()) throw ValidationError("annotate: labeled set has -1 labels");
    if (unlabeled.size() > 0 && unlabeled.dim() != labeled.dim())
        throw ValidationError("annotate: feature dimensions disagree");
}

struct ArgmaxResult {
    std::vector<int> labels;
    std::vector<double> confidence;
};

ArgmaxResult argmax_with_confidence(const Network& net, const Eigen::MatrixXd& x) {
    ArgmaxResult out;
    if (x.rows() == 0) return out;
    Eigen::MatrixXd probs = net.predict_probs(x);
    out.labels.resize(probs.rows());
    out.confidence.resize(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best;
        out.confidence[i] = probs.row(i).maxCoeff(&best);
        out.labels[i] = static_cast<int>(best);
    }
    return out;
}

double train_ce(const Network& net, const Dataset& data) {
    NoGradGuard ng;
    Tensor probs = softmax(net.forward(Tensor::from_matrix(data.features)));
    return cross_entropy(probs, data.labels).item();
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
}

std::vector<int> take_labels(const std::vector<int>& labels, const std::vector<int>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
    return out;
}

}  // namespace

void CoTrainConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
        throw ValidationError("CoTrainConfig: lambdas must be >= 0");
    if (epochs < 1) throw ValidationError("CoTrainConfig: epochs must be >= 1");
    if (batch_labeled < 1 || batch_unlabeled < 1)
        throw ValidationError("CoTrainConfig: batch sizes must be >= 1");
    if (warmup_epochs < 0) throw ValidationError("CoTrainConfig: warmup_epochs must be >= 0");
    attack.validate();
    schedule.validate();
}

void SelfTrainConfig::validate() const {
    if (tau <= 0 || tau > 1) throw ValidationError("SelfTrainConfig: tau must lie in (0,1]");
    if (rounds < 1) throw ValidationError("SelfTrainConfig: rounds must be >= 1");
    if (epochs_per_round < 1)
        throw ValidationError("SelfTrainConfig: epochs_per_round must be >= 1");
    if (batch < 1) throw ValidationError("SelfTrainConfig: batch must be >= 1");
    schedule.validate();
}

void PretrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("PretrainConfig: epochs must be >= 1");
    if (batch < 1) throw ValidationError("PretrainConfig: batch must be >= 1");
    schedule.validate();
}

PseudoAccuracyFn make_pseudo_accuracy_fn(const Dataset& unlabeled) {
    std::vector<int> truth = unlabeled.hidden_truth();
    return [truth = std::move(truth)](const std::vector<int>& pseudo) {
        if (pseudo.size() != truth.size())
            throw ContractError("pseudo accuracy: size mismatch");
        if (truth.empty()) return kNaN;
        int correct = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) correct += (pseudo[i] == truth[i]);
        return static_cast<double>(correct) / truth.size();
    };
}

// ------------------------------------------------------------- pre-trained

Annotation pretrained_annotator(const Dataset& labeled, const Dataset& unlabeled,
                                const MlpSpec& spec, const PretrainConfig& cfg,
                                std::uint64_t seed, const PseudoAccuracyFn& accuracy_fn) {
    check_inputs(labeled, unlabeled);
    cfg.validate();

    MlpSpec netspec = spec;
    netspec.seed = derive_seed(seed, "pretrain-init");
    Network net = Network::init(netspec);
    SgdOptimizer opt(net);

    Annotation ann;
    auto hook = [&](int epoch, double mean_loss) {
        EpochStats row;
        row.epoch = epoch;
        row.ce1 = mean_loss;
        row.ce2 = kNaN;
        row.total_variance = kNaN;
        row.pseudo_accuracy = kNaN;
        if (accuracy_fn && unlabeled.size() > 0)
            row.pseudo_accuracy = accuracy_fn(net.predict_labels(unlabeled.features));
        ann.history.push_back(row);
    };
    train_loop(net, opt, labeled, cfg.epochs, cfg.batch, cfg.schedule, seed,
               [](const Network& n, const Eigen::MatrixXd& x, const std::vector<int>& y, Rng&) {
                   return cross_entropy(softmax(n.forward(Tensor::from_matrix(x))), y);
               },
               hook);

    ArgmaxResult final = argmax_with_confidence(net, unlabeled.features);
    ann.pseudo_labels = std::move(final.labels);
    ann.confidence = std::move(final.confidence);
    ann.annotator_id = 0;
    return ann;
}

// ------------------------------------------------------------ self-training

Annotation self_train(const Dataset& labeled, const Dataset& unlabeled, const MlpSpec& spec,
                      const SelfTrainConfig& cfg, std::uint64_t seed,
                      const PseudoAccuracyFn& accuracy_fn) {
    check_inputs(labeled, unlabeled);
    cfg.validate();

    MlpSpec netspec = spec;
    netspec.seed = derive_seed(seed, "pretrain-init");
    Network net = Network::init(netspec);
    SgdOptimizer opt(net);

    const int nu = unlabeled.size();
    std::vector<int> recruited_label(nu, -1);
    std::vector<double> recruited_conf(nu, 0.0);
    std::vector<int> remaining(nu);
    for (int i = 0; i < nu; ++i) remaining[i] = i;

    Dataset pool = labeled;
    Annotation ann;

    auto current_labels = [&]() {
        std::vector<int> labels(nu);
        ArgmaxResult now = argmax_with_confidence(net, unlabeled.features);
        for (int i = 0; i < nu; ++i)
            labels[i] = recruited_label[i] >= 0 ? recruited_label[i] : now.labels[i];
        return labels;
    };

    auto loss_fn = [](const Network& n, const Eigen::MatrixXd& x, const std::vector<int>& y,
                      Rng&) {
        return cross_entropy(softmax(n.forward(Tensor::from_matrix(x))), y);
    };

    for (int round = 0; round < cfg.rounds; ++round) {
        auto hook = [&](int epoch, double mean_loss) {
            EpochStats row;
            row.epoch = epoch;
            row.ce1 = mean_loss;
            row.ce2 = kNaN;
            row.total_variance = kNaN;
            row.pseudo_accuracy =
                (accuracy_fn && nu > 0) ? accuracy_fn(current_labels()) : kNaN;
            ann.history.push_back(row);
        };
        train_loop(net, opt, pool, cfg.epochs_per_round, cfg.batch, cfg.schedule, seed, loss_fn,
                   hook, round * cfg.epochs_per_round);

        if (remaining.empty()) break;

        // Recruit confident predictions into the pool; membership is permanent.
        ArgmaxResult now = argmax_with_confidence(net, take_rows(unlabeled.features, remaining));
        std::vector<int> still;
        std::vector<int> newly;
        for (std::size_t k = 0; k < remaining.size(); ++k) {
            if (now.confidence[k] > cfg.tau) {
                recruited_label[remaining[k]] = now.labels[k];
                recruited_conf[remaining[k]] = now.confidence[k];
                newly.push_back(remaining[k]);
            } else {
                still.push_back(remaining[k]);
            }
        }
        remaining.swap(still);
        ann.recruited_per_round.push_back(static_cast<int>(newly.size()));
        if (!newly.empty()) {
            Dataset add;
            add.features = take_rows(unlabeled.features, newly);
            add.labels = take_labels(recruited_label, newly);
            add.class_count = labeled.class_count;
            add.provenance = "recruited";
            pool = concat(pool, add);
        } else {
            break;  // nothing confident left
        }
        if (remaining.empty()) break;
    }

    ann.pseudo_labels.resize(nu);
    ann.confidence.resize(nu);
    ArgmaxResult final = argmax_with_confidence(net, unlabeled.features);
    for (int i = 0; i < nu; ++i) {
        if (recruited_label[i] >= 0) {
            ann.pseudo_labels[i] = recruited_label[i];
            ann.confidence[i] = recruited_conf[i];
        } else {
            ann.pseudo_labels[i] = final.labels[i];
            ann.confidence[i] = final.confidence[i];
        }
    }
    ann.annotator_id = 0;
    return ann;
}

// -------------------------------------------------------------- co-training

namespace {

// Cyclic per-epoch shuffled batch stream over the labeled set.
class BatchStream {
public:
    BatchStream(int n, int batch, std::uint64_t seed)
        : n_(n), batch_(std::min(batch, n)), rng_(seed) {}

    void start_epoch() {
        order_ = index_permutation(n_, rng_);
        pos_ = 0;
    }

    std::vector<int> next() {
        std::vector<int> idx(batch_);
        for (int i = 0; i < batch_; ++i) {
            idx[i] = order_[pos_];
            pos_ = (pos_ + 1) % n_;
        }
        return idx;
    }

private:
    int n_;
    int batch_;
    Rng rng_;
    std::vector<int> order_;
    std::size_t pos_ = 0;
};

struct TermValues {
    double ce = 0.0;
    double js_consensus = 0.0;
    double js_adv_labeled = 0.0;
    double js_adv_unlabeled = 0.0;
};

Annotation cotrain_engine(const Dataset& labeled, const Dataset& unlabeled,
                          const MlpSpec& spec, const CoTrainConfig& cfg, std::uint64_t seed1,
                          std::uint64_t seed2, const PseudoAccuracyFn& accuracy_fn) {
    check_inputs(labeled, unlabeled);
    cfg.validate();
    if (seed1 == seed2) throw ValidationError("cotrain: the two seeds must differ");

    MlpSpec spec1 = spec, spec2 = spec;
    spec1.seed = seed1;
    spec2.seed = seed2;
    Network f1 = Network::init(spec1);
    Network f2 = Network::init(spec2);
    SgdOptimizer opt1(f1), opt2(f2);

    const bool use_adv = (cfg.lambda2 != 0.0 || cfg.lambda3 != 0.0);
    const int nl = labeled.size();
    const int nu = unlabeled.size();
    const int bu = std::min(cfg.batch_unlabeled, std::max(nu, 1));

    BatchStream stream1(nl, cfg.batch_labeled, derive_seed(seed1, "cotrain-labeled-order"));
    BatchStream stream2(nl, cfg.batch_labeled, derive_seed(seed2, "cotrain-labeled-order"));
    Rng rng_u(derive_seed(derive_seed_sym(seed1, seed2), "cotrain-unlabeled-order"));
    Rng rng_a1(derive_seed(seed1, "cotrain-attack"));
    Rng rng_a2(derive_seed(seed2, "cotrain-attack"));

    Annotation ann;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double ramp =
            cfg.warmup_epochs > 0
                ? std::min(1.0, static_cast<double>(epoch + 1) / cfg.warmup_epochs)
                : 1.0;
        const double l1 = cfg.lambda1 * ramp;
        const double l2 = cfg.lambda2 * ramp;
        const double l3 = cfg.lambda3 * ramp;

        stream1.start_epoch();
        stream2.start_epoch();
        std::vector<int> order_u = nu > 0 ? index_permutation(nu, rng_u) : std::vector<int>{};
        const int iters = nu > 0 ? (nu + bu - 1) / bu : 1;

        TermValues acc1, acc2;
        for (int it = 0; it < iters; ++it) {
            std::vector<int> idx1 = stream1.next();
            std::vector<int> idx2 = stream2.next();
            Eigen::MatrixXd x1 = take_rows(labeled.features, idx1);
            Eigen::MatrixXd x2 = take_rows(labeled.features, idx2);
            std::vector<int> y1 = take_labels(labeled.labels, idx1);
            std::vector<int> y2 = take_labels(labeled.labels, idx2);

            Eigen::MatrixXd xu;
            if (nu > 0) {
                const int start = it * bu;
                const int count = std::min(bu, nu - start);
                std::vector<int> idxu(order_u.begin() + start, order_u.begin() + start + count);
                xu = take_rows(unlabeled.features, idxu);
            }

            // Adversarial sets against each network on its own labeled batch
            // and the shared unlabeled batch; pseudo labels recomputed from
            // the current predictions. Generation is constant downstream.
            Eigen::MatrixXd adv_s1, adv_s2, adv_u1, adv_u2;
            if (use_adv) {
                adv_s1 = peer_adversarial_batch(f1, x1, y1, cfg.attack, &rng_a1);
                adv_s2 = peer_adversarial_batch(f2, x2, y2, cfg.attack, &rng_a2);
                if (nu > 0) {
                    adv_u1 = peer_adversarial_batch(f1, xu, cfg.attack, &rng_a1);
                    adv_u2 = peer_adversarial_batch(f2, xu, cfg.attack, &rng_a2);
                }
            }

            // Peer outputs entering each loss are value snapshots.
            Eigen::MatrixXd c2_u, c1_u, c2_s1, c1_s2, c2_u1, c1_u2;
            {
                NoGradGuard ng;
                if (nu > 0) {
                    c2_u = f2.predict_probs(xu);
                    c1_u = f1.predict_probs(xu);
                }
                if (use_adv) {
                    c2_s1 = f2.predict_probs(adv_s1);
                    c1_s2 = f1.predict_probs(adv_s2);
                    if (nu > 0) {
                        c2_u1 = f2.predict_probs(adv_u1);
                        c1_u2 = f1.predict_probs(adv_u2);
                    }
                }
            }

            auto build_loss = [&](const Network& f, const Eigen::MatrixXd& x,
                                  const std::vector<int>& y, const Eigen::MatrixXd& peer_u,
                                  const Eigen::MatrixXd& peer_adv_s,
                                  const Eigen::MatrixXd& peer_adv_u, TermValues& terms) {
                Tensor p_x = softmax(f.forward(Tensor::from_matrix(x)));
                Tensor loss = cross_entropy(p_x, y);
                terms.ce += loss.item();
                Tensor p_u;  // shared by the consensus and adversarial JS terms
                if (nu > 0 && (l1 != 0.0 || (use_adv && l3 != 0.0)))
                    p_u = softmax(f.forward(Tensor::from_matrix(xu)));
                if (nu > 0 && l1 != 0.0) {
                    Tensor js = js_div(p_u, Tensor::from_matrix(peer_u));
                    terms.js_consensus += js.item();
                    loss = add(loss, scale(js, l1));
                }
                if (use_adv) {
                    if (l2 != 0.0) {
                        Tensor js = js_div(p_x, Tensor::from_matrix(peer_adv_s));
                        terms.js_adv_labeled += js.item();
                        loss = add(loss, scale(js, l2));
                    }
                    if (nu > 0 && l3 != 0.0) {
                        Tensor js = js_div(p_u, Tensor::from_matrix(peer_adv_u));
                        terms.js_adv_unlabeled += js.item();
                        loss = add(loss, scale(js, l3));
                    }
                }
                return loss;
            };

            // Both gradients are taken at the pre-update parameter pair, then
            // both steps apply: the paired update is simultaneous.
            TapeScope scope;
            Tensor loss1 = build_loss(f1, x1, y1, c2_u, adv_s1, adv_u1, acc1);
            Tensor loss2 = build_loss(f2, x2, y2, c1_u, adv_s2, adv_u2, acc2);
            backward(loss1);
            backward(loss2);
            opt1.step(cfg.schedule, epoch);
            opt2.step(cfg.schedule, epoch);
        }

        EpochStats row;
        row.epoch = epoch;
        row.ce1 = acc1.ce / iters;
        row.ce2 = acc2.ce / iters;
        row.js_consensus = (acc1.js_consensus + acc2.js_consensus) / (2.0 * iters);
        row.js_adv_labeled = (acc1.js_adv_labeled + acc2.js_adv_labeled) / (2.0 * iters);
        row.js_adv_unlabeled = (acc1.js_adv_unlabeled + acc2.js_adv_unlabeled) / (2.0 * iters);
        row.total_variance = nu > 0 ? total_variance(f1, f2, unlabeled.features) : kNaN;
        row.pseudo_accuracy = kNaN;
        if (accuracy_fn && nu > 0) {
            const Network& current = row.ce1 <= row.ce2 ? f1 : f2;
            row.pseudo_accuracy = accuracy_fn(current.predict_labels(unlabeled.features));
        }
        ann.history.push_back(row);
    }

    int pick;
    switch (cfg.pick) {
        case AnnotatorPick::f1: pick = 0; break;
        case AnnotatorPick::f2: pick = 1; break;
        case AnnotatorPick::lower_loss:
        default: pick = train_ce(f1, labeled) <= train_ce(f2, labeled) ? 0 : 1; break;
    }
    const Network& annotator = pick == 0 ? f1 : f2;
    ArgmaxResult final = argmax_with_confidence(annotator, unlabeled.features);
    ann.pseudo_labels = std::move(final.labels);
    ann.confidence = std::move(final.confidence);
    ann.annotator_id = pick;
    return ann;
}

}  // namespace

Annotation vanilla_cotrain(const Dataset& labeled, const Dataset& unlabeled,
                           const MlpSpec& spec, const CoTrainConfig& cfg, std::uint64_t seed1,
                           std::uint64_t seed2, const PseudoAccuracyFn& accuracy_fn) {
    CoTrainConfig c = cfg;
    c.lambda2 = 0.0;
    c.lambda3 = 0.0;
    return cotrain_engine(labeled, unlabeled, spec, c, seed1, seed2, accuracy_fn);
}

Annotation deep_cotrain(const Dataset& labeled, const Dataset& unlabeled, const MlpSpec& spec,
                        const CoTrainConfig& cfg, std::uint64_t seed1, std::uint64_t seed2,
                        const PseudoAccuracyFn& accuracy_fn) {
    return cotrain_engine(labeled, unlabeled, spec, cfg, seed1, seed2, accuracy_fn);
}

}  // namespace rct
