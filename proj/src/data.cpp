#include "rct/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rct/error.hpp"
#include "rct/rng.hpp"

namespace rct {

bool Dataset::fully_labeled() const {
    return std::all_of(labels.begin(), labels.end(), [](int y) { return y >= 0; });
}

void Dataset::validate() const {
    if (static_cast<int>(labels.size()) != size())
        throw ValidationError("Dataset: label count does not match row count");
    if (class_count < 2) throw ValidationError("Dataset: class_count must be >= 2");
    for (int y : labels)
        if (y < -1 || y >= class_count)
            throw ValidationError("Dataset: label " + std::to_string(y) + " outside {-1,0,...," +
                                  std::to_string(class_count - 1) + "}");
    if (features.size() > 0 && ((features.array() < 0.0).any() || (features.array() > 1.0).any()))
        throw ValidationError("Dataset: features must lie in [0,1]");
    if (hidden_ && hidden_->size() != labels.size())
        throw ValidationError("Dataset: sidecar size does not match row count");
}

const std::vector<int>& Dataset::hidden_truth() const {
    if (!hidden_)
        throw ContractError("Dataset: no hidden truth sidecar on '" + provenance + "'");
    return *hidden_;
}

void Dataset::set_hidden_truth(std::vector<int> truth) {
    if (static_cast<int>(truth.size()) != size())
        throw ValidationError("Dataset: sidecar size does not match row count");
    hidden_ = std::move(truth);
}

Dataset Dataset::rows(const std::vector<int>& idx) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    out.labels.resize(idx.size());
    out.class_count = class_count;
    out.provenance = provenance;
    std::vector<int> truth;
    if (hidden_) truth.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
        out.labels[i] = labels[idx[i]];
        if (hidden_) truth[i] = (*hidden_)[idx[i]];
    }
    if (hidden_) out.hidden_ = std::move(truth);
    return out;
}

// ------------------------------------------------------------------ sources

Dataset two_gaussians(int n_per_class, double separation, double noise, std::uint64_t seed) {
    if (n_per_class < 1) throw ValidationError("two_gaussians: n_per_class must be >= 1");
    const int n = 2 * n_per_class;
    Rng rng(derive_seed(seed, "two-gaussians"));

    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    Eigen::MatrixXd raw(n, 2);
    std::vector<int> labels(n);
    for (int c = 0; c < 2; ++c) {
        const double cx = (c == 0 ? -0.5 : 0.5) * separation * inv_sqrt2;
        for (int i = 0; i < n_per_class; ++i) {
            const int r = c * n_per_class + i;
            raw(r, 0) = cx + noise * rng.normal();
            raw(r, 1) = cx + noise * rng.normal();
            labels[r] = c;
        }
    }

    // Per-axis min-max rescale into [0,1]; positive-diagonal affine maps keep
    // linear separability intact.
    Dataset ds;
    ds.features.resize(n, 2);
    for (int j = 0; j < 2; ++j) {
        const double lo = raw.col(j).minCoeff(), hi = raw.col(j).maxCoeff();
        const double range = hi - lo;
        if (range < 1e-12)
            ds.features.col(j).setConstant(0.5);
        else
            ds.features.col(j) = (raw.col(j).array() - lo) / range;
    }
    ds.labels = std::move(labels);
    ds.class_count = 2;
    ds.provenance = "two_gaussians";
    return ds;
}

namespace {

// Arc parameterizations before the box mapping: class 0 on the upper unit
// half-circle, class 1 on the shifted lower half-circle.
Eigen::Vector2d moon_point(int cls, double t) {
    if (cls == 0) return {std::cos(t), std::sin(t)};
    return {1.0 - std::cos(t), 1.0 - std::sin(t) - 0.5};
}

}  // namespace

Eigen::Vector2d two_moons_unscale(const Eigen::Vector2d& p) {
    return {p.x() * 3.0 - 1.0, p.y() * 2.5 - 1.0};
}

Dataset two_moons(int n, double noise, std::uint64_t seed) {
    if (n < 2) throw ValidationError("two_moons: n must be >= 2");
    Rng rng(derive_seed(seed, "two-moons"));
    const int n0 = (n + 1) / 2, n1 = n / 2;

    Dataset ds;
    ds.features.resize(n, 2);
    ds.labels.resize(n);
    int r = 0;
    for (int c = 0; c < 2; ++c) {
        const int m = (c == 0 ? n0 : n1);
        for (int i = 0; i < m; ++i, ++r) {
            const double t = m == 1 ? 0.0 : std::numbers::pi * i / (m - 1);
            Eigen::Vector2d p = moon_point(c, t);
            p.x() += noise * rng.normal();
            p.y() += noise * rng.normal();
            ds.features(r, 0) = std::clamp((p.x() + 1.0) / 3.0, 0.0, 1.0);
            ds.features(r, 1) = std::clamp((p.y() + 1.0) / 2.5, 0.0, 1.0);
            ds.labels[r] = c;
        }
    }
    ds.class_count = 2;
    ds.provenance = "two_moons";
    return ds;
}

// -------------------------------------------------------------------- split

SplitResult split(const Dataset& ds, int n_labeled, std::uint64_t seed) {
    ds.validate();
    if (!ds.fully_labeled()) throw ValidationError("split: dataset must be fully labeled");
    if (n_labeled < 0 || n_labeled > ds.size())
        throw ValidationError("split: n_labeled out of range");

    std::vector<std::vector<int>> by_class(ds.class_count);
    for (int i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

    Rng rng(derive_seed(seed, "split"));
    for (auto& idx : by_class) rng.shuffle(idx);

    // Quotas differ by at most one across classes; spill classes that run out.
    const int base = n_labeled / ds.class_count;
    int extra = n_labeled % ds.class_count;
    std::vector<int> labeled_idx, unlabeled_idx;
    for (int c = 0; c < ds.class_count; ++c) {
        int quota = base + (c < extra ? 1 : 0);
        if (quota > static_cast<int>(by_class[c].size()))
            throw ValidationError("split: class " + std::to_string(c) + " has only " +
                                  std::to_string(by_class[c].size()) + " samples for quota " +
                                  std::to_string(quota));
        for (std::size_t i = 0; i < by_class[c].size(); ++i)
            (static_cast<int>(i) < quota ? labeled_idx : unlabeled_idx).push_back(by_class[c][i]);
    }
    rng.shuffle(labeled_idx);
    rng.shuffle(unlabeled_idx);

    SplitResult out;
    out.labeled = ds.rows(labeled_idx);
    out.labeled.provenance = ds.provenance + "/labeled";
    out.unlabeled = ds.rows(unlabeled_idx);
    out.unlabeled.set_hidden_truth(out.unlabeled.labels);
    std::fill(out.unlabeled.labels.begin(), out.unlabeled.labels.end(), -1);
    out.unlabeled.provenance = ds.provenance + "/unlabeled";
    return out;
}

Dataset corrupt_labels(const Dataset& ds, double target_accuracy, std::uint64_t seed) {
    ds.validate();
    if (!ds.fully_labeled())
        throw ValidationError("corrupt_labels: dataset must be fully labeled");
    if (ds.class_count < 2) throw ValidationError("corrupt_labels: need at least two classes");
    if (target_accuracy < 0.0 || target_accuracy > 1.0)
        throw ValidationError("corrupt_labels: target accuracy must lie in [0,1]");

    const int n = ds.size();
    const int k = static_cast<int>(std::ceil((1.0 - target_accuracy) * n - 1e-9));

    Dataset out = ds;
    out.set_hidden_truth(ds.labels);
    out.provenance = ds.provenance + "/corrupted";

    Rng rng(derive_seed(seed, "corrupt"));
    std::vector<int> idx = index_permutation(n, rng);
    for (int i = 0; i < k; ++i) {
        int& y = out.labels[idx[i]];
        // uniform over the other classes
        int wrong = static_cast<int>(rng.below(static_cast<std::uint64_t>(ds.class_count - 1)));
        if (wrong >= y) ++wrong;
        y = wrong;
    }
    return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.dim() != b.dim() || a.class_count != b.class_count)
        throw ValidationError("concat: incompatible datasets");
    Dataset out;
    out.features.resize(a.size() + b.size(), a.dim());
    out.features.topRows(a.size()) = a.features;
    out.features.bottomRows(b.size()) = b.features;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.class_count = a.class_count;
    out.provenance = a.provenance + "+" + b.provenance;
    if (a.has_hidden_truth() && b.has_hidden_truth()) {
        std::vector<int> truth = a.hidden_truth();
        truth.insert(truth.end(), b.hidden_truth().begin(), b.hidden_truth().end());
        out.set_hidden_truth(std::move(truth));
    }
    return out;
}

// ---------------------------------------------------------------------- csv

namespace {

bool parse_double(const std::string& field, double& out) {
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("load_csv: cannot open " + path.string());

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int dim = -1;
    int line_no = 0;
    std::string line;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> fields = split_fields(line);
        double first;
        if (line_no == 1 && !parse_double(fields[0], first)) continue;  // header row
        if (fields.size() < 2) throw ParseError("load_csv: need label and features", line_no);
        if (!parse_double(fields[0], first))
            throw ParseError("load_csv: bad label '" + fields[0] + "'", line_no);
        const int label = static_cast<int>(std::lround(first));
        if (std::abs(first - label) > 1e-9)
            throw ParseError("load_csv: label must be an integer", line_no);
        if (label < -1) throw ParseError("load_csv: label below -1", line_no);

        std::vector<double> feats(fields.size() - 1);
        for (std::size_t j = 1; j < fields.size(); ++j) {
            if (!parse_double(fields[j], feats[j - 1]))
                throw ParseError("load_csv: bad feature '" + fields[j] + "'", line_no);
            if (feats[j - 1] < 0.0 || feats[j - 1] > 1.0)
                throw ValidationError("load_csv: feature outside [0,1] at line " +
                                      std::to_string(line_no));
        }
        if (dim == -1)
            dim = static_cast<int>(feats.size());
        else if (static_cast<int>(feats.size()) != dim)
            throw ParseError("load_csv: inconsistent column count", line_no);
        rows.push_back(std::move(feats));
        labels.push_back(label);
    }

    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), std::max(dim, 0));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < dim; ++j) ds.features(static_cast<Eigen::Index>(i), j) = rows[i][j];
    ds.labels = std::move(labels);
    int max_label = 1;
    for (int y : ds.labels) max_label = std::max(max_label, y);
    ds.class_count = max_label + 1;
    ds.provenance = path.filename().string();
    return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("save_csv: cannot open " + path.string());
    char buf[64];
    for (int i = 0; i < ds.size(); ++i) {
        os << ds.labels[i];
        for (int j = 0; j < ds.dim(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.features(i, j));
            os << ',' << buf;
        }
        os << '\n';
    }
    if (!os) throw ValidationError("save_csv: write failed for " + path.string());
}

}  // namespace rct
