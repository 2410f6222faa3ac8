#include <doctest.h>

#include <cmath>
#include <set>

#include "pgdiff/metrics.hpp"
#include "pgdiff/rng.hpp"

using namespace pgdiff;

namespace {

ClassMask from_rows(std::initializer_list<std::initializer_list<int>> rows, int n) {
    const int h = static_cast<int>(rows.size());
    const int w = static_cast<int>(rows.begin()->size());
    ClassMask m(h, w, n);
    int y = 0;
    for (const auto& r : rows) {
        int x = 0;
        for (int v : r) m.set(y, x++, v);
        ++y;
    }
    return m;
}

// Pixel-set formulation, independent of the confusion matrix.
std::pair<double, double> brute_force(const ClassMask& pred, const ClassMask& gt, int n) {
    double iou_sum = 0, f1_sum = 0;
    int present = 0;
    for (int c = 0; c < n; ++c) {
        std::set<int> P, G;
        for (int i = 0; i < static_cast<int>(pred.size()); ++i) {
            if (pred.labels()[static_cast<std::size_t>(i)] == c) P.insert(i);
            if (gt.labels()[static_cast<std::size_t>(i)] == c) G.insert(i);
        }
        std::set<int> I, U = P;
        for (int i : P)
            if (G.count(i)) I.insert(i);
        U.insert(G.begin(), G.end());
        if (U.empty()) continue;
        ++present;
        iou_sum += static_cast<double>(I.size()) / static_cast<double>(U.size());
        f1_sum += 2.0 * static_cast<double>(I.size()) / static_cast<double>(P.size() + G.size());
    }
    return {iou_sum / present, f1_sum / present};
}

}  // namespace

TEST_CASE("binary two by two example") {
    const ClassMask gt = from_rows({{0, 0}, {1, 1}}, 2);
    const ClassMask pred = from_rows({{0, 1}, {1, 1}}, 2);
    const auto cm = confusion(pred, gt, 2);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 1) == 2);
    CHECK(cm.at(1, 0) == 0);
    const auto iou = per_class_iou(cm);
    CHECK(iou[0] == doctest::Approx(0.5));
    CHECK(iou[1] == doctest::Approx(2.0 / 3.0));
    CHECK(std::abs(miou(cm) - 7.0 / 12.0) < 1e-15);
    const auto f = per_class_f1(cm);
    CHECK(f[0] == doctest::Approx(2.0 / 3.0));
    CHECK(f[1] == doctest::Approx(0.8));
    CHECK(std::abs(f1(cm) - 11.0 / 15.0) < 1e-15);
}

TEST_CASE("perfect prediction and absent classes") {
    const ClassMask gt = from_rows({{0, 2}, {2, 0}}, 3);
    const auto cm = confusion(gt, gt, 3);
    CHECK(std::isnan(per_class_iou(cm)[1]));
    CHECK(miou(cm) == 1.0);
    CHECK(f1(cm) == 1.0);
    CHECK_THROWS(miou(ConfusionMatrix(3)));
    CHECK_THROWS(confusion(gt, ClassMask(2, 3, 3), 3));
    CHECK_THROWS(confusion(gt, gt, 2));
}

TEST_CASE("miou and f1 agree with a pixel-set oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(3));
        ClassMask p(8, 8, n), g(8, 8, n);
        for (auto& v : p.labels()) v = static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(n)));
        for (auto& v : g.labels()) v = static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(n)));
        const auto cm = confusion(p, g, n);
        const auto [bi, bf] = brute_force(p, g, n);
        REQUIRE(std::abs(miou(cm) - bi) < 1e-12);
        REQUIRE(std::abs(f1(cm) - bf) < 1e-12);
        CHECK(cm.total() == 64);
    }
}

TEST_CASE("pooled confusion adds counts") {
    const ClassMask a = from_rows({{0, 1}}, 2), b = from_rows({{1, 1}}, 2);
    auto cm = confusion(a, b, 2);
    cm += confusion(b, b, 2);
    CHECK(cm.total() == 4);
    CHECK(cm.at(1, 1) == 3);
    ConfusionMatrix other(3);
    CHECK_THROWS(cm += other);
}

TEST_CASE("welch goldens") {
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
    const auto r = welch_t(a, b);
    CHECK(r.t == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(8.0).epsilon(1e-12));
    CHECK(std::abs(r.p - 0.34659350708733416) < 1e-10);

    const std::vector<double> c{1.0, 2.5, 3.1, 4.8, 5.2, 6.0}, d{2.2, 2.9, 3.3, 3.8};
    const auto s = welch_t(c, d);
    CHECK(std::abs(s.t - 0.8517607357337911) < 1e-10);
    CHECK(std::abs(s.df - 6.69505018725759) < 1e-9);
    CHECK(std::abs(s.p - 0.4237629790174684) < 1e-10);
}

TEST_CASE("welch properties") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(2 + rng.below(10)), b(2 + rng.below(10));
        for (double& v : a) v = rng.normal();
        for (double& v : b) v = 2.0 * rng.normal() + 0.5;
        const auto ab = welch_t(a, b), ba = welch_t(b, a);
        CHECK(ab.t == doctest::Approx(-ba.t).epsilon(1e-12));
        CHECK(ab.p == doctest::Approx(ba.p).epsilon(1e-12));
        CHECK(ab.p > 0.0);
        CHECK(ab.p <= 1.0);
        CHECK(ab.df >= std::min(a.size(), b.size()) - 1.0 - 1e-9);
        CHECK(ab.df <= a.size() + b.size() - 2.0 + 1e-9);
    }
    const std::vector<double> one{1.0}, two{1.0, 2.0}, flat{3.0, 3.0};
    CHECK_THROWS_AS(welch_t(one, two), std::domain_error);
    CHECK_THROWS_AS(welch_t(flat, flat), std::domain_error);
    const auto same = welch_t(two, two);
    CHECK(same.t == 0.0);
    CHECK(same.p == doctest::Approx(1.0));
}

TEST_CASE("kfold") {
    const auto f = kfold(9, 3, 5);
    REQUIRE(f.size() == 3);
    std::set<std::size_t> all;
    for (const auto& fold : f) {
        CHECK(fold.size() == 3);
        CHECK(std::is_sorted(fold.begin(), fold.end()));
        all.insert(fold.begin(), fold.end());
    }
    CHECK(all.size() == 9);
    CHECK(*all.rbegin() == 8);
    CHECK(kfold(9, 3, 5) == f);

    const auto g = kfold(10, 3, 1);
    CHECK(g[0].size() == 4);
    CHECK(g[1].size() == 3);
    CHECK(g[2].size() == 3);
    CHECK_THROWS(kfold(2, 3, 0));
    CHECK_THROWS(kfold(10, 1, 0));
}

TEST_CASE("kfold partitions for any size") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + static_cast<int>(rng.below(5));
        const std::size_t n = static_cast<std::size_t>(k) + rng.below(60);
        const auto f = kfold(n, k, rng.next_u64());
        std::vector<int> seen(n, 0);
        std::size_t lo = n, hi = 0;
        for (const auto& fold : f) {
            lo = std::min(lo, fold.size());
            hi = std::max(hi, fold.size());
            for (auto i : fold) ++seen[i];
        }
        CHECK(hi - lo <= 1);
        CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    }
}

TEST_CASE("mean and sample sd") {
    const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
    CHECK(mean(v) == 5.0);
    CHECK(stddev(v) == doctest::Approx(std::sqrt(32.0 / 7.0)).epsilon(1e-14));
    CHECK(stddev(std::vector<double>{1.0}) == 0.0);
}
