#include "rct/robustify.hpp"

#include <algorithm>

#include "rct/objectives.hpp"

namespace rct {

std::string to_string(TrainMethod m) {
    switch (m) {
        case TrainMethod::standard: return "standard";
        case TrainMethod::madry: return "madry";
        case TrainMethod::trades: return "trades";
    }
    return "?";
}

TrainMethod train_method_from_string(const std::string& s) {
    if (s == "standard") return TrainMethod::standard;
    if (s == "madry") return TrainMethod::madry;
    if (s == "trades") return TrainMethod::trades;
    throw ValidationError("unknown training method '" + s + "'");
}

void TrainerConfig::validate() const {
    if (epochs < 1) throw ValidationError("TrainerConfig: epochs must be >= 1");
    if (batch < 1) throw ValidationError("TrainerConfig: batch must be >= 1");
    if (trades_lambda < 0) throw ValidationError("TrainerConfig: trades_lambda must be >= 0");
    attack.validate();
    schedule.validate();
}

namespace {

std::vector<int> batch_of(const std::vector<int>& order, int start, int count) {
    std::vector<int> idx(order.begin() + start, order.begin() + start + count);
    return idx;
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

// PGD ascent on KL(p_nat || p(x')) for the TRADES inner maximization.
Eigen::MatrixXd trades_attack(const Network& net, const Eigen::MatrixXd& x,
                              const Eigen::MatrixXd& p_nat, const AttackSpec& spec, Rng& rng) {
    Eigen::MatrixXd adv = x;
    if (spec.random_start) {
        for (Eigen::Index i = 0; i < adv.rows(); ++i)
            for (Eigen::Index j = 0; j < adv.cols(); ++j)
                adv(i, j) += rng.uniform(-spec.epsilon, spec.epsilon);
        adv = adv.cwiseMax((x.array() - spec.epsilon).matrix())
                  .cwiseMin((x.array() + spec.epsilon).matrix());
        adv = adv.cwiseMax(spec.clamp_lo).cwiseMin(spec.clamp_hi);
    }
    Tensor p_nat_t = Tensor::from_matrix(p_nat);
    for (int s = 0; s < spec.steps; ++s) {
        Eigen::MatrixXd g;
        {
            ParamFreeze freeze(net);
            TapeScope scope;
            Tensor xt = Tensor::from_matrix(adv, /*requires_grad=*/true);
            Tensor loss = kl_div(p_nat_t, softmax(net.forward(xt)));
            backward(loss);
            g = Eigen::Map<const RowMat>(xt.grad().data(), adv.rows(), adv.cols());
        }
        adv += spec.step_size *
               g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
        adv = adv.cwiseMax((x.array() - spec.epsilon).matrix())
                  .cwiseMin((x.array() + spec.epsilon).matrix());
        adv = adv.cwiseMax(spec.clamp_lo).cwiseMin(spec.clamp_hi);
    }
    return adv;
}

}  // namespace

void train_loop(Network& net, SgdOptimizer& opt, const Dataset& data, int epochs, int batch,
                const SgdSchedule& schedule, std::uint64_t seed, const BatchLossFn& loss_fn,
                const EpochHookFn& hook, int epoch_offset) {
    if (data.size() == 0) throw ValidationError("train_loop: empty training set");
    if (!data.fully_labeled()) throw ValidationError("train_loop: training set must be labeled");
    const int n = data.size();
    const int bs = std::min(batch, n);

    Rng shuffle_rng(derive_seed(seed, "train-shuffle"));
    Rng attack_rng(derive_seed(seed, "train-attack"));

    for (int e = 0; e < epochs; ++e) {
        const int epoch = epoch_offset + e;
        std::vector<int> order = index_permutation(n, shuffle_rng);
        double loss_sum = 0.0;
        int batches = 0;
        for (int start = 0; start < n; start += bs) {
            const int count = std::min(bs, n - start);
            std::vector<int> idx = batch_of(order, start, count);
            Eigen::MatrixXd x = take_rows(data.features, idx);
            std::vector<int> y = take_labels(data.labels, idx);

            TapeScope scope;
            Tensor loss = loss_fn(net, x, y, attack_rng);
            backward(loss);
            opt.step(schedule, epoch);
            loss_sum += loss.item();
            ++batches;
        }
        if (hook) hook(epoch, loss_sum / batches);
    }
}

namespace {

BatchLossFn make_batch_loss(const TrainerConfig& cfg) {
    switch (cfg.method) {
        case TrainMethod::standard:
            return [](const Network& net, const Eigen::MatrixXd& x, const std::vector<int>& y,
                      Rng&) { return cross_entropy(softmax(net.forward(Tensor::from_matrix(x))), y); };
        case TrainMethod::madry:
            return [attack = cfg.attack](const Network& net, const Eigen::MatrixXd& x,
                                         const std::vector<int>& y, Rng& rng) {
                Eigen::MatrixXd adv = pgd(net, x, y, attack, &rng);
                return cross_entropy(softmax(net.forward(Tensor::from_matrix(adv))), y);
            };
        case TrainMethod::trades:
            return [attack = cfg.attack, lambda = cfg.trades_lambda](
                       const Network& net, const Eigen::MatrixXd& x, const std::vector<int>& y,
                       Rng& rng) {
                Tensor p_nat = softmax(net.forward(Tensor::from_matrix(x)));
                if (lambda == 0.0) return cross_entropy(p_nat, y);
                // value snapshot; the inner maximization treats p(x) as fixed
                Eigen::MatrixXd p_nat_const = Eigen::Map<const RowMat>(
                    p_nat.values().data(), p_nat.shape()[0], p_nat.shape()[1]);
                Eigen::MatrixXd adv = trades_attack(net, x, p_nat_const, attack, rng);
                Tensor p_adv = softmax(net.forward(Tensor::from_matrix(adv)));
                return add(cross_entropy(p_nat, y), scale(kl_div(p_nat, p_adv), lambda));
            };
    }
    throw ContractError("make_batch_loss: unknown method");
}

}  // namespace

TrainResult adversarial_train(const Dataset& S, const TrainerConfig& cfg, const MlpSpec& spec,
                              std::uint64_t seed, const EvalHooks* hooks,
                              const Network* warm_start) {
    cfg.validate();
    MlpSpec netspec = spec;
    netspec.seed = derive_seed(seed, "trainer-init");
    TrainResult result;
    result.net = warm_start ? warm_start->clone() : Network::init(netspec);
    SgdOptimizer opt(result.net);

    Rng eval_seed_rng(derive_seed(seed, "trainer-eval"));
    const std::uint64_t eval_seed = eval_seed_rng.next_u64();

    EpochHookFn hook;
    if (hooks != nullptr && hooks->test != nullptr) {
        const EvalHooks& h = *hooks;
        Network& net = result.net;
        auto* curves = &result.curves;
        const int every = std::max(h.every, 1);
        const int last = cfg.epochs - 1;
        hook = [&net, curves, &h, every, last, eval_seed](int epoch, double mean_loss) {
            if (epoch % every != 0 && epoch != last) return;
            CurveRow row;
            row.epoch = epoch;
            row.train_loss = mean_loss;
            row.std_acc = eval_standard(net, *h.test);
            for (const EvalAttack& a : h.attacks)
                row.robust_acc[a.name] = eval_robust(net, *h.test, a.spec, eval_seed);
            curves->push_back(row);
        };
    } else {
        auto* curves = &result.curves;
        hook = [curves](int epoch, double mean_loss) {
            CurveRow row;
            row.epoch = epoch;
            row.train_loss = mean_loss;
            curves->push_back(row);
        };
    }

    train_loop(result.net, opt, S, cfg.epochs, cfg.batch, cfg.schedule, seed,
               make_batch_loss(cfg), hook);
    return result;
}

TrainResult standard_train(const Dataset& S, const TrainerConfig& cfg, const MlpSpec& spec,
                           std::uint64_t seed, const EvalHooks* hooks) {
    TrainerConfig c = cfg;
    c.method = TrainMethod::standard;
    return adversarial_train(S, c, spec, seed, hooks);
}

TrainResult madry_train(const Dataset& S, const TrainerConfig& cfg, const MlpSpec& spec,
                        std::uint64_t seed, const EvalHooks* hooks) {
    TrainerConfig c = cfg;
    c.method = TrainMethod::madry;
    return adversarial_train(S, c, spec, seed, hooks);
}

TrainResult trades_train(const Dataset& S, const TrainerConfig& cfg, const MlpSpec& spec,
                         std::uint64_t seed, const EvalHooks* hooks) {
    TrainerConfig c = cfg;
    c.method = TrainMethod::trades;
    return adversarial_train(S, c, spec, seed, hooks);
}

double eval_standard(const Network& net, const Dataset& test) {
    if (test.size() == 0) throw ValidationError("eval_standard: empty test set");
    if (!test.fully_labeled()) throw ValidationError("eval_standard: test set must be labeled");
    std::vector<int> pred = net.predict_labels(test.features);
    int correct = 0;
    for (int i = 0; i < test.size(); ++i) correct += (pred[i] == test.labels[i]);
    return static_cast<double>(correct) / test.size();
}

double eval_robust(const Network& net, const Dataset& test, const AttackSpec& attack,
                   std::uint64_t seed) {
    if (test.size() == 0) throw ValidationError("eval_robust: empty test set");
    if (!test.fully_labeled()) throw ValidationError("eval_robust: test set must be labeled");
    Rng rng(derive_seed(seed, "eval-attack"));
    Eigen::MatrixXd adv = pgd(net, test.features, test.labels, attack, &rng);
    std::vector<int> pred = net.predict_labels(adv);
    int correct = 0;
    for (int i = 0; i < test.size(); ++i) correct += (pred[i] == test.labels[i]);
    return static_cast<double>(correct) / test.size();
}

double pseudo_label_accuracy(const std::vector<int>& pseudo_labels, const Dataset& du) {
    const std::vector<int>& truth = du.hidden_truth();
    if (pseudo_labels.size() != truth.size())
        throw ContractError("pseudo_label_accuracy: size mismatch");
    if (truth.empty()) throw ContractError("pseudo_label_accuracy: empty unlabeled set");
    int correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += (pseudo_labels[i] == truth[i]);
    return static_cast<double>(correct) / truth.size();
}

}  // namespace rct
