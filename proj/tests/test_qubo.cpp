#include "support.hpp"

#include "gridbill/qubo.hpp"
#include "gridbill/solver.hpp"

#include <catch_amalgamated.hpp>

using namespace gridbill;

namespace {

DayProfile two_level_ci()
{
    DayProfile ci{};
    ci.fill(300.0);
    ci[19] = 500.0; // dirty evening hour
    ci[12] = 150.0; // clean mid-day hour
    return ci;
}

DrCustomer flat_customer(std::uint32_t id, Archetype a, double q50, double q90)
{
    DrCustomer c;
    c.customer = CustomerId{id};
    c.archetype = a;
    c.forecast.q10.fill(q50 * 0.5);
    c.forecast.q50.fill(q50);
    c.forecast.q90.fill(q90);
    return c;
}

double exhaustive_min(const QuboInstance& inst)
{
    const int n = static_cast<int>(inst.size());
    double best = 0.0;
    for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
        best = std::min(best, testing::naive_energy(inst.q, testing::bits_of(m, n)));
    }
    return best;
}

} // namespace

TEST_CASE("qubo energy on the 2-variable example")
{
    Eigen::MatrixXd q(2, 2);
    q << -1, 2, 2, -1;
    const auto inst = QuboInstance::from_matrix(q);
    CHECK(qubo_energy(inst, Bits{0, 0}) == 0.0);
    CHECK(qubo_energy(inst, Bits{1, 1}) == 2.0);
    CHECK(qubo_energy(inst, Bits{1, 0}) == -1.0);
    CHECK(qubo_energy(inst, Bits{0, 1}) == -1.0);
    CHECK_THROWS_AS(qubo_energy(inst, Bits{1}), DomainError);
}

TEST_CASE("instance validation")
{
    Eigen::MatrixXd q(2, 2);
    q << 0, 1, 2, 0;
    CHECK_THROWS_AS(QuboInstance::from_matrix(q), DomainError);
    CHECK_THROWS_AS(QuboInstance::from_matrix(Eigen::MatrixXd::Zero(2, 3)), DomainError);
}

TEST_CASE("energy is invariant under symmetric relabeling")
{
    const auto inst = testing::random_qubo(8, 5);
    Eigen::VectorXi perm(8);
    perm << 3, 0, 7, 1, 6, 2, 5, 4;
    Eigen::MatrixXd pq(8, 8);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            pq(i, j) = inst.q(perm(i), perm(j));
        }
    }
    const auto permuted = QuboInstance::from_matrix(pq);
    for (std::uint64_t m = 0; m < 256; ++m) {
        const Bits x = testing::bits_of(m, 8);
        Bits px(8);
        for (int i = 0; i < 8; ++i) {
            px[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(perm(i))];
        }
        REQUIRE(qubo_energy(permuted, px) == Catch::Approx(qubo_energy(inst, x)).margin(1e-12));
    }
}

TEST_CASE("Ising mapping: point checks")
{
    Eigen::MatrixXd one(1, 1);
    one << -1;
    const auto m1 = qubo_to_ising(QuboInstance::from_matrix(one));
    CHECK(ising_energy(m1, Spins{1}) == Catch::Approx(-1.0).margin(1e-15));
    CHECK(ising_energy(m1, Spins{-1}) == Catch::Approx(0.0).margin(1e-15));

    const auto z = qubo_to_ising(QuboInstance::from_matrix(Eigen::MatrixXd::Zero(3, 3)));
    CHECK(z.fields.isZero());
    CHECK(z.couplings.isZero());
    CHECK(z.offset == 0.0);

    Eigen::MatrixXd q(2, 2);
    q << -1, 2, 2, -1;
    const auto inst = QuboInstance::from_matrix(q);
    const auto m2 = qubo_to_ising(inst);
    CHECK(m2.couplings.diagonal().isZero());
    for (std::uint64_t m = 0; m < 4; ++m) {
        const Bits x = testing::bits_of(m, 2);
        CHECK(ising_energy(m2, bits_to_spins(x)) == Catch::Approx(qubo_energy(inst, x)).margin(1e-12));
    }
}

TEST_CASE("Ising mapping is exact on every assignment (50 random instances, n <= 12)")
{
    for (int t = 0; t < 50; ++t) {
        const int n = 1 + t % 12;
        const auto inst = testing::random_qubo(n, 1000 + static_cast<std::uint64_t>(t));
        const auto m = qubo_to_ising(inst);
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
            const Bits x = testing::bits_of(mask, n);
            const Spins s = bits_to_spins(x);
            REQUIRE(std::abs(ising_energy(m, s) - testing::naive_energy(inst.q, x)) <= 1e-9);
            std::vector<double> sd(s.begin(), s.end());
            REQUIRE(spins_to_bits(sd) == x);
        }
    }
}

TEST_CASE("Ising gradient matches central finite differences")
{
    Rng rng(31);
    for (int t = 0; t < 10; ++t) {
        const auto inst = testing::random_qubo(10, 400 + static_cast<std::uint64_t>(t));
        const auto m = qubo_to_ising(inst);
        Eigen::VectorXd x(10);
        for (int i = 0; i < 10; ++i) {
            x(i) = rng.uniform(-1.0, 1.0);
        }
        const Eigen::VectorXd g = ising_gradient(m, x);
        const double h = 1e-5;
        for (int i = 0; i < 10; ++i) {
            Eigen::VectorXd a = x;
            Eigen::VectorXd b = x;
            a(i) += h;
            b(i) -= h;
            const double fd = (ising_energy(m, std::span<const double>(a.data(), 10)) - ising_energy(m, std::span<const double>(b.data(), 10))) / (2 * h);
            REQUIRE(std::abs(fd - g(i)) <= 1e-6 * std::max(1.0, std::abs(g(i))));
        }
    }
}

TEST_CASE("DR instance: single customer sign argument")
{
    const DayProfile ci = two_level_ci();
    const std::vector<DrCustomer> one{flat_customer(0, Archetype::Low, 1.0, 1.5)};
    DrConfig cfg;
    const auto inst = build_dr_qubo(one, ci, cfg);
    REQUIRE(inst.qubo.size() == 1);
    const auto& c = inst.qubo.candidates[0];
    CHECK(c.from_hour == 19);
    CHECK(c.to_hour == 12);
    CHECK(c.co2_saved_kg == Catch::Approx(1.0 * 350.0 / 1000.0));
    CHECK(inst.qubo.q(0, 0) == Catch::Approx(-(50.0 * 0.35 - 0.5)));
    CHECK(brute_force(inst.qubo).assignment == Bits{1});

    cfg.discomfort = {100.0, 100.0, 100.0};
    const auto costly = build_dr_qubo(one, ci, cfg);
    CHECK(brute_force(costly.qubo).assignment == Bits{0});
}

TEST_CASE("DR instance: two customers competing for one hour")
{
    const DayProfile ci = two_level_ci();
    const std::vector<DrCustomer> two{flat_customer(0, Archetype::Low, 1.0, 1.5), flat_customer(1, Archetype::Mid, 0.8, 1.2)};
    DrConfig cfg;
    cfg.headroom_kwh = 1.0;
    cfg.penalty_weight = 100.0;
    const auto inst = build_dr_qubo(two, ci, cfg);
    REQUIRE(inst.qubo.size() == 2);
    CHECK(inst.qubo.q(0, 1) == inst.qubo.q(1, 0));
    CHECK(inst.qubo.q(0, 1) == Catch::Approx(0.5 * 100.0 * 1.5 * 1.2));
    const auto r = brute_force(inst.qubo);
    CHECK(r.assignment[0] + r.assignment[1] == 1);
    CHECK(r.assignment == Bits{1, 0});

    for (const auto& c : inst.qubo.candidates) {
        CHECK(c.co2_saved_kg > 0.0);
        CHECK(ci[c.from_hour] > ci[c.to_hour]);
    }
}

TEST_CASE("DR instance errors")
{
    DayProfile flat{};
    flat.fill(300.0);
    const std::vector<DrCustomer> one{flat_customer(0, Archetype::Low, 1.0, 1.5)};
    CHECK_THROWS_AS(build_dr_qubo(one, flat), DomainError);

    DrConfig cfg;
    cfg.headroom_kwh = 0.0;
    CHECK_THROWS_AS(build_dr_qubo(one, two_level_ci(), cfg), ConfigError);
}

TEST_CASE("larger shadow price never raises the optimum")
{
    DayProfile ci{};
    for (int h = 0; h < kHoursPerDay; ++h) {
        ci[static_cast<std::size_t>(h)] = 300.0 + 10.0 * ((h * 7) % 13);
    }
    std::vector<DrCustomer> cs;
    Rng rng(8);
    for (std::uint32_t i = 0; i < 10; ++i) {
        DrCustomer c = flat_customer(i, static_cast<Archetype>(i % 3), 0.0, 0.0);
        for (int h = 0; h < kHoursPerDay; ++h) {
            c.forecast.q50[static_cast<std::size_t>(h)] = rng.uniform(0.1, 1.0);
            c.forecast.q90[static_cast<std::size_t>(h)] = c.forecast.q50[static_cast<std::size_t>(h)] * 1.4;
        }
        cs.push_back(c);
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double pi : {5.0, 10.0, 20.0, 40.0, 80.0}) {
        DrConfig cfg;
        cfg.shadow_price = pi;
        cfg.headroom_kwh = 2.0;
        cfg.penalty_weight = 3.0;
        const double e = exhaustive_min(build_dr_qubo(cs, ci, cfg).qubo);
        CHECK(e <= prev + 1e-12);
        prev = e;
    }
}
