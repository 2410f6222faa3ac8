#include <doctest.h>

#include <cmath>

#include "pgdiff/rng.hpp"
#include "pgdiff/tensor.hpp"

using namespace pgdiff;

TEST_CASE("tensor construction and indexing") {
    Tensor t = Tensor::chw(2, 3, 4, 1.5);
    CHECK(t.size() == 24);
    CHECK(t.channels() == 2);
    CHECK(t.height() == 3);
    CHECK(t.width() == 4);
    t.at(1, 2, 3) = 7.0;
    CHECK(t[23] == 7.0);
    CHECK(t.channel(1).size() == 12);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("tensor arithmetic helpers") {
    const Tensor a({1, 1, 2}, std::vector<double>{3.0, 4.0});
    const Tensor b({1, 1, 2}, std::vector<double>{1.0, -1.0});
    CHECK(l2_norm(a) == 5.0);
    CHECK(axpby(2.0, a, 1.0, b) == Tensor({1, 1, 2}, std::vector<double>{7.0, 7.0}));
    CHECK(max_abs_diff(a, b) == 5.0);
    CHECK(relative_l2(a, a) == 0.0);
    CHECK(all_finite(a));
    Tensor c = a;
    c[0] = std::nan("");
    CHECK_FALSE(all_finite(c));
}

TEST_CASE("class mask validation") {
    ClassMask m(2, 2, 3);
    m.set(0, 1, 2);
    CHECK(m.at(0, 1) == 2);
    CHECK_THROWS(m.set(0, 0, 3));
    CHECK_THROWS(ClassMask(2, 2, 3, std::vector<std::uint8_t>{0, 1, 2, 5}).validate());
}

TEST_CASE("rng determinism and derived seeds") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
}

TEST_CASE("rng distributions") {
    Rng r(5);
    const int n = 200000;
    double s = 0.0, s2 = 0.0, u = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
        const double x = r.uniform();
        CHECK_FALSE((x < 0.0 || x >= 1.0));
        u += x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
    CHECK(std::abs(u / n - 0.5) < 0.01);
    for (int i = 0; i < 1000; ++i) {
        const auto k = r.below(7);
        CHECK(k < 7);
        const int v = r.uniform_int(-2, 2);
        CHECK((v >= -2 && v <= 2));
    }
}
