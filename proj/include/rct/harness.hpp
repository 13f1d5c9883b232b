#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rct/annotate.hpp"
#include "rct/data.hpp"
#include "rct/robustify.hpp"

namespace rct {

using json = nlohmann::json;

// ------------------------------------------------------------ configuration

struct DataConfig {
    std::string kind = "two_moons";  // two_moons | two_gaussians | csv
    int n_pool = 408;
    int n_test = 400;
    double noise = 0.1;
    double separation = 3.0;  // two_gaussians only
    std::string path;         // csv: training pool
    std::string test_path;    // csv: test set (optional)

    bool operator==(const DataConfig&) const = default;
    void validate() const;
};

struct SplitConfig {
    int n_labeled = 8;
    int n_unlabeled = -1;  // -1 = everything left after the labeled split

    bool operator==(const SplitConfig&) const = default;
};

struct AnnotateConfig {
    // pretrained | self_train | vanilla_cotrain | deep_cotrain | oracle | corrupted
    std::string method = "deep_cotrain";
    PretrainConfig pretrain;
    SelfTrainConfig self_train;
    CoTrainConfig cotrain;
    double corrupt_accuracy = 1.0;  // corrupted: injected label accuracy

    bool operator==(const AnnotateConfig&) const = default;
    void validate() const;
};

struct ModelConfig {
    std::vector<int> hidden = {16, 16};

    bool operator==(const ModelConfig&) const = default;
};

struct PipelineConfig {
    DataConfig data;
    SplitConfig split;
    AnnotateConfig annotate;
    ModelConfig model;
    TrainerConfig trainer;
    std::vector<EvalAttack> eval_attacks;  // defaults to PGD5 + PGD20
    int eval_every = 1;
    std::string warm_start;  // optional model file for the robust network
    std::uint64_t seed = 1;
    int replicates = 1;
    int jobs = 1;
    std::string out_dir = "out";

    PipelineConfig();
    bool operator==(const PipelineConfig&) const = default;
    void validate() const;
};

void to_json(json& j, const PipelineConfig& cfg);
void from_json(const json& j, PipelineConfig& cfg);

PipelineConfig load_config(const std::filesystem::path& path);

// Dotted-path override, e.g. "trainer.epochs=50" or
// "annotate.cotrain.lambda1=5". The value is parsed as JSON when possible,
// else taken as a string.
void apply_override(json& doc, const std::string& key_eq_value);

// ------------------------------------------------------------------ records

struct RunRecord {
    std::string run_id;
    json config;
    std::string input_hash;
    std::string annotation_hash;
    int annotator_id = 0;
    double pseudo_acc = 0.0;  // NaN when no truth sidecar exists
    EvalReport eval;
    std::vector<EpochStats> annotation_history;
    double wall_ms = 0.0;
};

json to_json_record(const RunRecord& rec);

// FNV-1a 64 content hash, hex encoded.
std::string content_hash(const std::string& bytes);

// --------------------------------------------------------------- operations

// Algorithm: split -> annotate -> S = S_L u S_U -> adversarial train ->
// evaluate; artifacts (config.json, run.json, epochs.csv, annotation.csv,
// annotation_epochs.csv, train_set.csv, model.bin) land in `out_dir`.
RunRecord run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

// Cartesian product over dotted-path axes, `replicates` runs per cell with
// derived seeds; writes grid.csv with per-cell means and stddevs.
using GridAxes = std::vector<std::pair<std::string, std::vector<json>>>;
std::vector<RunRecord> grid_experiment(const PipelineConfig& base, const GridAxes& axes,
                                       const std::filesystem::path& out_dir);

// ------------------------------------------------------------- reproduction

struct TrendVerdict {
    bool satisfied = false;
    std::string summary;
};

// Annotation-quality ordering across methods and unlabeled-set sizes.
TrendVerdict reproduce_label_quality(std::uint64_t seed, const std::filesystem::path& out_dir,
                                     int jobs = 1);
// Vanilla co-training collapses (TV -> 0) while deep co-training stays away
// from zero in the final quartile.
TrendVerdict reproduce_total_variance(std::uint64_t seed, const std::filesystem::path& out_dir,
                                      int jobs = 1);
// Injected pseudo-label accuracy drives standard and robust test accuracy.
TrendVerdict reproduce_heatmap(std::uint64_t seed, const std::filesystem::path& out_dir,
                               int jobs = 1);
// Full pipelines: oracle >= deep co-training (RCT) >= pre-determined (RST).
TrendVerdict reproduce_adv_training(std::uint64_t seed, const std::filesystem::path& out_dir,
                                    int jobs = 1);

TrendVerdict reproduce(const std::string& figure, std::uint64_t seed,
                       const std::filesystem::path& out_dir, int jobs = 1);

}  // namespace rct
