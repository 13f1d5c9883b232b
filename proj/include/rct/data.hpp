#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rct {

// Rows are samples with features in [0,1]; label -1 marks unlabeled. Unlabeled
// sets produced by split() carry the erased true labels in a private sidecar
// that only metric code reads (via hidden_truth()); annotators are tested
// against datasets without one.
class Dataset {
public:
    Eigen::MatrixXd features;
    std::vector<int> labels;
    int class_count = 2;
    std::string provenance;

    int size() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }
    bool fully_labeled() const;
    void validate() const;

    bool has_hidden_truth() const { return hidden_.has_value(); }
    const std::vector<int>& hidden_truth() const;  // throws ContractError if absent
    void set_hidden_truth(std::vector<int> truth);
    void drop_hidden_truth() { hidden_.reset(); }

    Dataset rows(const std::vector<int>& idx) const;  // subset, sidecar preserved

private:
    std::optional<std::vector<int>> hidden_;
};

// Two isotropic Gaussian clusters, centers `separation` apart along the main
// diagonal, rescaled per-axis into [0,1]^2. Labels 0/1.
Dataset two_gaussians(int n_per_class, double separation, double noise, std::uint64_t seed);

// Interleaved half-circles with Gaussian jitter, mapped into [0,1]^2 by the
// fixed affine x' = (x+1)/3, y' = (y+1)/2.5 and clamped to the box.
Dataset two_moons(int n, double noise, std::uint64_t seed);

// Inverse of the two_moons box mapping; exposed so geometric oracles can check
// generated points against the analytic arcs.
Eigen::Vector2d two_moons_unscale(const Eigen::Vector2d& p);

struct SplitResult {
    Dataset labeled;    // true labels kept
    Dataset unlabeled;  // labels erased to -1; truth retained in the sidecar
};

// Class-stratified split: per-class counts in the labeled part differ by at
// most one. Throws ValidationError when a class cannot fill its quota.
SplitResult split(const Dataset& ds, int n_labeled, std::uint64_t seed);

// Replaces labels on a uniformly random ceil((1-target_accuracy)*n) subset
// with a uniformly random *different* class. Original labels are kept in the
// sidecar so label-quality metrics stay measurable.
Dataset corrupt_labels(const Dataset& ds, double target_accuracy, std::uint64_t seed);

// Rows of `a` followed by rows of `b`; sidecars merge when both are present.
Dataset concat(const Dataset& a, const Dataset& b);

// CSV rows are `label,feat_0,...,feat_{d-1}`; label -1 marks unlabeled; an
// optional header row is detected by a non-numeric first field. Values are
// written with 17 significant digits, so save/load round-trips bit-exactly.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace rct
