#include <doctest.h>

#include "rct/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "rct/error.hpp"
#include "rct/rng.hpp"

using namespace rct;
namespace fs = std::filesystem;

namespace {

// (feature..., label) rows as a sortable multiset key
std::multiset<std::vector<double>> row_set(const Dataset& ds, bool use_hidden = false) {
    std::multiset<std::vector<double>> out;
    for (int i = 0; i < ds.size(); ++i) {
        std::vector<double> row;
        for (int j = 0; j < ds.dim(); ++j) row.push_back(ds.features(i, j));
        row.push_back(use_hidden ? ds.hidden_truth()[i] : ds.labels[i]);
        out.insert(row);
    }
    return out;
}

// Perceptron oracle: returns true when it converges (data linearly separable).
bool perceptron_separable(const Dataset& ds, int max_epochs = 1000) {
    Eigen::Vector3d w = Eigen::Vector3d::Zero();
    for (int e = 0; e < max_epochs; ++e) {
        bool clean = true;
        for (int i = 0; i < ds.size(); ++i) {
            Eigen::Vector3d x(ds.features(i, 0), ds.features(i, 1), 1.0);
            const double target = ds.labels[i] == 1 ? 1.0 : -1.0;
            if (target * w.dot(x) <= 0) {
                w += target * x;
                clean = false;
            }
        }
        if (clean) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("two gaussians basics") {
    Dataset tiny = two_gaussians(1, 3.0, 0.1, 5);
    CHECK(tiny.size() == 2);

    Dataset a = two_gaussians(50, 6.0, 0.5, 42);
    Dataset b = two_gaussians(50, 6.0, 0.5, 42);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);

    Dataset c = two_gaussians(50, 6.0, 0.5, 43);
    CHECK(a.features != c.features);

    a.validate();
    CHECK(a.features.minCoeff() >= 0.0);
    CHECK(a.features.maxCoeff() <= 1.0);
}

TEST_CASE("two gaussians separable with margin when separation dominates noise") {
    Dataset ds = two_gaussians(100, 8.0, 0.5, 7);
    CHECK(perceptron_separable(ds));
}

TEST_CASE("two moons basics") {
    Dataset tiny = two_moons(4, 0.05, 1);
    CHECK(tiny.size() == 4);
    CHECK(std::count(tiny.labels.begin(), tiny.labels.end(), 0) == 2);
    CHECK(std::count(tiny.labels.begin(), tiny.labels.end(), 1) == 2);

    Dataset odd = two_moons(7, 0.1, 2);
    const int c0 = static_cast<int>(std::count(odd.labels.begin(), odd.labels.end(), 0));
    CHECK(std::abs(2 * c0 - 7) <= 1);

    Dataset a = two_moons(30, 0.1, 9), b = two_moons(30, 0.1, 9);
    CHECK(a.features == b.features);
}

TEST_CASE("two moons with zero noise lies exactly on the arcs") {
    Dataset ds = two_moons(40, 0.0, 3);
    for (int i = 0; i < ds.size(); ++i) {
        Eigen::Vector2d raw = two_moons_unscale(ds.features.row(i).transpose());
        double dist;
        if (ds.labels[i] == 0) {
            dist = std::abs(raw.norm() - 1.0);  // unit circle, upper half
            CHECK(raw.y() >= -1e-9);
        } else {
            Eigen::Vector2d centered(raw.x() - 1.0, raw.y() - 0.5);
            dist = std::abs(centered.norm() - 1.0);
            CHECK(centered.y() <= 1e-9);
        }
        CHECK(dist < 1e-9);
    }
}

TEST_CASE("split stratification and reconstruction") {
    Dataset ds = two_moons(101, 0.1, 11);
    SplitResult parts = split(ds, 9, 17);
    CHECK(parts.labeled.size() == 9);
    CHECK(parts.unlabeled.size() == 92);

    const int c0 =
        static_cast<int>(std::count(parts.labeled.labels.begin(), parts.labeled.labels.end(), 0));
    const int c1 = parts.labeled.size() - c0;
    CHECK(std::abs(c0 - c1) <= 1);

    CHECK(parts.labeled.fully_labeled());
    CHECK(std::all_of(parts.unlabeled.labels.begin(), parts.unlabeled.labels.end(),
                      [](int y) { return y == -1; }));
    CHECK(parts.unlabeled.has_hidden_truth());

    // union of parts reconstructs the dataset exactly
    auto original = row_set(ds);
    auto rebuilt = row_set(parts.labeled);
    for (auto& row : row_set(parts.unlabeled, /*use_hidden=*/true)) rebuilt.insert(row);
    CHECK(original == rebuilt);
}

TEST_CASE("split edge cases") {
    Dataset ds = two_moons(10, 0.1, 4);
    SplitResult all = split(ds, 10, 3);
    CHECK(all.unlabeled.size() == 0);
    CHECK_THROWS_AS(split(ds, 11, 3), ValidationError);

    // class availability: 5 per class, quota 6 impossible
    Dataset skew = two_moons(10, 0.1, 5);
    skew.labels.assign(10, 0);
    skew.labels[9] = 1;
    CHECK_THROWS_AS(split(skew, 4, 3), ValidationError);
}

TEST_CASE("corrupt labels") {
    Dataset ds = two_moons(1000, 0.1, 21);

    Dataset same = corrupt_labels(ds, 1.0, 5);
    CHECK(same.labels == ds.labels);

    Dataset flipped = corrupt_labels(ds, 0.0, 5);
    for (int i = 0; i < ds.size(); ++i) CHECK(flipped.labels[i] == 1 - ds.labels[i]);

    Dataset c = corrupt_labels(ds, 0.87, 6);
    int changed = 0;
    for (int i = 0; i < ds.size(); ++i) changed += (c.labels[i] != ds.labels[i]);
    CHECK(changed == 130);
    CHECK(c.hidden_truth() == ds.labels);

    // a corrupted label is never the original one (changed rows only)
    for (int i = 0; i < ds.size(); ++i)
        if (c.labels[i] != ds.labels[i]) CHECK(c.labels[i] != c.hidden_truth()[i]);
}

TEST_CASE("corrupt labels validation") {
    Dataset ds = two_moons(10, 0.1, 2);
    CHECK_THROWS_AS(corrupt_labels(ds, 1.5, 1), ValidationError);
    ds.labels[0] = -1;
    CHECK_THROWS_AS(corrupt_labels(ds, 0.9, 1), ValidationError);
}

TEST_CASE("csv round trip is bit exact") {
    Dataset ds = two_moons(25, 0.1, 33);
    ds.labels[3] = -1;  // mixed labeled/unlabeled
    const fs::path path = fs::temp_directory_path() / "rct_data_test.csv";
    save_csv(ds, path);
    Dataset back = load_csv(path);
    CHECK(back.size() == ds.size());
    CHECK(back.labels == ds.labels);
    CHECK(back.features == ds.features);  // 17 significant digits round-trip
    fs::remove(path);
}

TEST_CASE("csv parsing") {
    const fs::path path = fs::temp_directory_path() / "rct_parse_test.csv";
    {
        std::ofstream os(path);
        os << "label,f0,f1\n";  // header detected by non-numeric first field
        os << "1,0.5,0.25\n";
        os << "-1,0.1,0.9\n";
    }
    Dataset ds = load_csv(path);
    CHECK(ds.size() == 2);
    CHECK(ds.labels[0] == 1);
    CHECK(ds.labels[1] == -1);
    CHECK(ds.features(0, 0) == 0.5);
    fs::remove(path);

    {
        std::ofstream os(path);
        os << "1,0.5,0.25\n";
        os << "0,oops,0.1\n";
    }
    try {
        load_csv(path);
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }
    fs::remove(path);

    {
        std::ofstream os(path);
        os << "0,1.5,0.25\n";  // out-of-box feature
    }
    CHECK_THROWS_AS(load_csv(path), ValidationError);
    fs::remove(path);
}

TEST_CASE("hidden truth sidecar access control") {
    Dataset ds = two_moons(10, 0.1, 8);
    CHECK_FALSE(ds.has_hidden_truth());
    CHECK_THROWS_AS(ds.hidden_truth(), ContractError);

    SplitResult parts = split(ds, 4, 1);
    CHECK(parts.unlabeled.hidden_truth().size() == 6);

    // sidecar survives row selection
    Dataset sub = parts.unlabeled.rows({0, 2});
    CHECK(sub.hidden_truth().size() == 2);
    CHECK(sub.hidden_truth()[1] == parts.unlabeled.hidden_truth()[2]);
}

TEST_CASE("concat merges rows and sidecars") {
    Dataset ds = two_moons(12, 0.1, 13);
    SplitResult parts = split(ds, 6, 2);
    Dataset su = parts.unlabeled;
    su.labels = su.hidden_truth();
    Dataset s = concat(parts.labeled, su);
    CHECK(s.size() == 12);
    CHECK_FALSE(s.has_hidden_truth());  // labeled part has no sidecar
    CHECK(s.fully_labeled());
}
