#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dbdt/auc_head.hpp"
#include "dbdt/metrics.hpp"
#include "oracles.hpp"

using namespace dbdt;

namespace {

AucHead head(double p, double a, double b, double alpha) {
    AucHead h;
    h.p = p;
    h.a = a;
    h.b = b;
    h.alpha = alpha;
    return h;
}

DbdtModel small_model(Rng& rng) {
    DbdtModel m = init_model(2, TreeShape{3, 3, 1, 0}, 1);
    auto flat = m.flat_params();
    for (double& v : flat) {
        v = rng.uniform(-0.8, 0.8);
    }
    m.set_flat_params(flat);
    return m;
}

double norm(std::span<const double> v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

}  // namespace

TEST_CASE("score squashing") {
    DbdtModel m = init_model(1, TreeShape{2, 2, 1, 0}, 0);
    const std::vector<double> x{0.3, 0.4};
    CHECK(score_for_auc(m, x) == 0.5);
    m.trees[0].leaves()[0] = 1.7;
    m.trees[0].leaves()[1] = 1.7;
    m.score_squash = false;
    CHECK(score_for_auc(m, x) == doctest::Approx(1.7).epsilon(1e-15));
    m.score_squash = true;
    CHECK(score_for_auc(m, x) == doctest::Approx(logistic(1.7)).epsilon(1e-15));

    Rng rng(1);
    std::vector<double> raw(200);
    std::vector<double> squashed(200);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = rng.uniform(-8.0, 8.0);
        squashed[i] = squash_score(m, raw[i]);
    }
    std::vector<std::size_t> r1(200);
    std::vector<std::size_t> r2(200);
    std::iota(r1.begin(), r1.end(), 0);
    std::iota(r2.begin(), r2.end(), 0);
    std::sort(r1.begin(), r1.end(), [&](auto i, auto j) { return raw[i] < raw[j]; });
    std::sort(r2.begin(), r2.end(), [&](auto i, auto j) { return squashed[i] < squashed[j]; });
    CHECK(r1 == r2);
    const auto labels = oracle::random_labels(200, rng);
    CHECK(auc(raw, labels) == auc(squashed, labels));
}

TEST_CASE("pairwise surrogate examples") {
    CHECK(auc_surrogate(std::vector<double>{1.0}, std::vector<double>{0.0}) == 0.0);
    CHECK(auc_surrogate(std::vector<double>{0.4}, std::vector<double>{0.4}) == 1.0);
    CHECK(auc_surrogate(std::vector<double>{1.0, 0.5}, std::vector<double>{0.0}) == 0.125);
    CHECK_THROWS_AS(auc_surrogate(std::vector<double>{}, std::vector<double>{0.0}), InputError);
}

TEST_CASE("psi examples") {
    CHECK(psi(head(0.5, 0.5, 0.0, 0.0), 0.5, 1).value == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(psi(head(0.5, 0.3, 0.2, 1.0), 0.0, 1).d_alpha == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(psi(head(0.5, 0.3, 0.2, 1.0), 0.0, -1).d_alpha == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(psi(head(0.5, 0.0, 0.35, -1.0), 0.35, -1).value == doctest::Approx(-0.25).epsilon(1e-15));
    CHECK(g3(2.0, 0.5) == 1.0);
    CHECK(g2(head(0.5, 0, 0, 0), 1.0, 1) == -1.0);
}

TEST_CASE("psi decomposes into g1 + alpha g2 - g3") {
    Rng rng(2);
    for (int k = 0; k < 10000; ++k) {
        AucHead h = head(rng.uniform(0.01, 0.99), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-3, 3));
        h.margin = rng.uniform(0.5, 1.5);
        const double s = rng.uniform(-1, 2);
        const int y = rng.uniform() < 0.5 ? 1 : -1;
        const double direct = psi(h, s, y).value;
        CHECK(std::abs(direct - (g1(h, s, y) + h.alpha * g2(h, s, y) - g3(h.alpha, h.p))) <= 1e-12);
    }
}

TEST_CASE("psi partials match finite differences") {
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        const AucHead h = head(rng.uniform(0.05, 0.95), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-2, 2));
        const double s = rng.uniform(0, 1);
        const int y = k % 2 == 0 ? 1 : -1;
        const auto v = psi(h, s, y);
        const double e = 1e-6;
        auto at = [&](double ds, double da, double db, double dal) {
            AucHead q = h;
            q.a += da;
            q.b += db;
            q.alpha += dal;
            return psi(q, s + ds, y).value;
        };
        CHECK(v.d_score == doctest::Approx((at(e, 0, 0, 0) - at(-e, 0, 0, 0)) / (2 * e)).epsilon(1e-7));
        CHECK(v.d_a == doctest::Approx((at(0, e, 0, 0) - at(0, -e, 0, 0)) / (2 * e)).epsilon(1e-7));
        CHECK(v.d_b == doctest::Approx((at(0, 0, e, 0) - at(0, 0, -e, 0)) / (2 * e)).epsilon(1e-7));
        CHECK(v.d_alpha == doctest::Approx((at(0, 0, 0, e) - at(0, 0, 0, -e)) / (2 * e)).epsilon(1e-7));
    }
}

TEST_CASE("mean psi is concave quadratic in alpha") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const double p = rng.uniform(0.02, 0.6);
        std::vector<double> s(64);
        std::vector<int> y(64);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = rng.uniform();
            y[i] = rng.uniform() < p ? 1 : -1;
        }
        AucHead h = head(p, rng.uniform(), rng.uniform(), 0.0);
        auto f = [&](double alpha) {
            h.alpha = alpha;
            return mean_psi(h, s, y);
        };
        const double c2 = (f(1.0) - 2.0 * f(0.0) + f(-1.0)) / 2.0;
        CHECK(std::abs(c2 - (-p * (1.0 - p))) <= 1e-10);

        h.alpha = best_alpha(h, s, y);
        double dual_grad = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            dual_grad += psi(h, s[i], y[i]).d_alpha;
        }
        CHECK(std::abs(dual_grad / static_cast<double>(s.size())) <= 1e-10);
    }
}

TEST_CASE("extended parameters") {
    const ExtendedParams e(std::vector<double>{1.0, 2.0, 3.0}, 4.0, 5.0);
    CHECK(e.size() == 5);
    CHECK(e.theta().size() == 3);
    CHECK(e.a() == 4.0);
    CHECK(e.b() == 5.0);
    CHECK_THROWS_AS(ExtendedParams(std::vector<double>{1.0}), InputError);
}

TEST_CASE("averaged loss gradient uses the mean fit term") {
    Rng rng(5);
    const DbdtModel m = small_model(rng);
    const Batch b{oracle::random_matrix(16, 3, rng), oracle::random_labels(16, rng)};
    const Regularization reg{0.1, 0.005};
    const auto grad = averaged_loss_gradient(m, b, reg)(m.flat_params());
    CHECK(grad == ensemble_backward(m, b, reg, {1.0 / 16.0, true}));
}

TEST_CASE("compositional map") {
    Rng rng(6);
    const DbdtModel m = small_model(rng);
    const Batch b{oracle::random_matrix(16, 3, rng), oracle::random_labels(16, rng)};
    const Regularization reg{0.1, 0.005};
    AucHead h;
    h.a = 0.7;
    h.b = 0.2;
    const ExtendedParams bar = extended_params(m, h);

    const auto same = q_map(bar, m, b, reg, 0.0);
    CHECK(std::equal(same.values().begin(), same.values().end(), bar.values().begin()));

    const auto q = q_map(bar, m, b, reg, 1e-3);
    CHECK(q.a() == 0.7);
    CHECK(q.b() == 0.2);
    std::vector<double> diff(bar.size());
    for (std::size_t k = 0; k < diff.size(); ++k) {
        diff[k] = q.values()[k] - bar.values()[k];
    }
    const auto g = ensemble_backward(m, b, reg, {1.0 / 16.0, true});
    CHECK(std::abs(norm(diff) - 1e-3 * norm(g)) <= 1e-10);
    CHECK_THROWS_AS(q_map(bar, m, b, reg, -1.0), InputError);
}

TEST_CASE("Jacobian application") {
    const ExtendedParams bar(std::vector<double>{0.5, -1.0, 2.0, 0.3}, 0.1, 0.2);
    const std::vector<double> v{1.0, -2.0, 0.5, 3.0, 7.0, -7.0};
    const ThetaGradient identity_hessian = [](std::span<const double> theta) {
        return std::vector<double>(theta.begin(), theta.end());
    };
    CHECK(q_jacobian_apply(bar, identity_hessian, 0.0, v, JacobianMode::Exact) == v);
    CHECK(q_jacobian_apply(bar, identity_hessian, 0.5, v, JacobianMode::FirstOrder) == v);

    const auto out = q_jacobian_apply(bar, identity_hessian, 0.1, v, JacobianMode::Exact);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::abs(out[k] - 0.9 * v[k]) <= 1e-6);
    }
    CHECK(out[4] == v[4]);
    CHECK(out[5] == v[5]);
    CHECK_THROWS_AS(q_jacobian_apply(bar, identity_hessian, 0.1, std::vector<double>(3), JacobianMode::Exact),
                    InputError);
}

TEST_CASE("exact Jacobian agrees with a directional difference of q") {
    Rng rng(7);
    const DbdtModel m = small_model(rng);
    const Batch b{oracle::random_matrix(12, 3, rng), oracle::random_labels(12, rng)};
    const Regularization reg{0.1, 0.005};
    const auto grad = averaged_loss_gradient(m, b, reg);
    const ExtendedParams bar = extended_params(m, AucHead{});
    std::vector<double> v(bar.size());
    for (double& x : v) {
        x = rng.normal();
    }
    const double beta = 0.05;
    const auto jv = q_jacobian_apply(bar, grad, beta, v, JacobianMode::Exact);
    const double e = 1e-5;
    std::vector<double> plus(bar.values().begin(), bar.values().end());
    std::vector<double> minus = plus;
    for (std::size_t k = 0; k < v.size(); ++k) {
        plus[k] += e * v[k];
        minus[k] -= e * v[k];
    }
    const auto qp = q_map(ExtendedParams(plus), grad, beta);
    const auto qm = q_map(ExtendedParams(minus), grad, beta);
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double fd = (qp.values()[k] - qm.values()[k]) / (2 * e);
        CHECK(oracle::relative_error(jv[k], fd, 1e-3) <= 1e-5);
    }
}
