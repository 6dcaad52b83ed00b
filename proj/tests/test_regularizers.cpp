#include <catch_amalgamated.hpp>

#include "normstab/regularizers.hpp"
#include "oracles.hpp"

using namespace normstab;

namespace {

const PenaltyVariant kAllVariants[] = {
    PenaltyVariant::NormStabilizer,   PenaltyVariant::StateDiffSq,
    PenaltyVariant::RelativeNormDiffSq, PenaltyVariant::L1NormDiffSq,
    PenaltyVariant::FixedTargetSq,    PenaltyVariant::EndpointDiffSq,
    PenaltyVariant::NormDiffAbs,      PenaltyVariant::NormSq,
};

Trajectory random_trajectory(Rng& rng, std::size_t T, std::size_t n,
                             double lo = 0.5, double hi = 2.0) {
    // entries bounded away from zero keep norms (and their diffs) away
    // from the non-differentiable points
    std::vector<Tensor> states;
    for (std::size_t t = 0; t <= T; ++t) {
        Tensor s({n});
        for (std::size_t j = 0; j < n; ++j) {
            const double mag = rng.uniform(lo, hi);
            s[j] = rng.next_double() < 0.5 ? -mag : mag;
        }
        states.push_back(std::move(s));
    }
    return Trajectory::from_states(states);
}

// local classes cannot carry member templates, so this lives up here
struct OneMatrix {
    Tensor w{std::vector<std::size_t>{400, 250}};
    Tensor b{std::vector<std::size_t>{10}};
    template <class F>
    void for_each_param(F&& f) {
        f("w", w);
        f("b", b);
    }
};

} // namespace

TEST_CASE("constant-norm trajectory has zero norm-stabilizer cost", "[reg]") {
    Trajectory tr = Trajectory::from_states(
        {Tensor::vector({3, 4}), Tensor::vector({3, 4}), Tensor::vector({0, 5}),
         Tensor::vector({5, 0})});
    RegularizerSpec spec;
    spec.variant = PenaltyVariant::NormStabilizer;
    spec.beta = 7.5;
    CHECK(penalty_value(spec, tr) == 0.0);
    std::vector<double> g = penalty_backward(spec, tr);
    for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("norm-stabilizer worked example", "[reg]") {
    Trajectory tr = Trajectory::from_states(
        {Tensor::vector({0, 0}), Tensor::vector({3, 4}), Tensor::vector({6, 8})});
    RegularizerSpec spec;
    spec.variant = PenaltyVariant::NormStabilizer;
    spec.beta = 1.0;
    // ((5-0)^2 + (10-5)^2) / 2
    CHECK(penalty_value(spec, tr) == Catch::Approx(25.0).margin(1e-12));

    spec.variant = PenaltyVariant::FixedTargetSq;
    spec.fixed_target = 5.0;
    CHECK(penalty_value(spec, tr) == Catch::Approx(12.5).margin(1e-12));
}

TEST_CASE("beta zero kills every variant", "[reg]") {
    Rng rng(21);
    Trajectory tr = random_trajectory(rng, 5, 4);
    for (PenaltyVariant v : kAllVariants) {
        RegularizerSpec spec;
        spec.variant = v;
        spec.beta = 0.0;
        CHECK(penalty_value(spec, tr) == 0.0);
    }
}

TEST_CASE("T=0 trajectory is rejected", "[reg]") {
    Trajectory tr = Trajectory::from_states({Tensor::vector({1, 2})});
    RegularizerSpec spec;
    spec.variant = PenaltyVariant::NormStabilizer;
    spec.beta = 1.0;
    CHECK_THROWS_AS(penalty_value(spec, tr), ParameterError);
    CHECK_THROWS_AS(penalty_backward(spec, tr), ParameterError);
}

TEST_CASE("all variants pass the finite-difference check", "[reg][gradcheck]") {
    Rng rng(22);
    const std::size_t T = 6, n = 8;
    for (PenaltyVariant v : kAllVariants) {
        RegularizerSpec spec;
        spec.variant = v;
        spec.beta = rng.uniform(0.5, 3.0);
        Trajectory tr = random_trajectory(rng, T, n);

        auto value = [&]() { return penalty_value(spec, tr); };
        auto fd = oracle::central_diff(
            value, [&](std::size_t i) { return tr.hiddens[i]; },
            [&](std::size_t i, double x) { tr.hiddens[i] = x; },
            tr.hiddens.size());
        std::vector<double> analytic = penalty_backward(spec, tr);
        INFO("variant " << variant_name(v));
        REQUIRE(oracle::max_rel_err(analytic, fd) < 1e-4);
    }
}

TEST_CASE("norm_sq gradient is exactly (2 beta / T) h_t", "[reg]") {
    Rng rng(23);
    const std::size_t T = 4, n = 5;
    Trajectory tr = random_trajectory(rng, T, n);
    RegularizerSpec spec;
    spec.variant = PenaltyVariant::NormSq;
    spec.beta = 3.0;
    std::vector<double> g = penalty_backward(spec, tr);
    for (std::size_t j = 0; j < n; ++j) CHECK(g[j] == 0.0); // h_0 untouched
    for (std::size_t t = 1; t <= T; ++t)
        for (std::size_t j = 0; j < n; ++j)
            CHECK(g[t * n + j] ==
                  Catch::Approx(2.0 * 3.0 / T * tr.h(t)[j]).epsilon(1e-14));
}

TEST_CASE("scaling states scales the penalties as expected", "[reg][property]") {
    Rng rng(24);
    Trajectory tr = random_trajectory(rng, 6, 4);
    Trajectory scaled = tr;
    const double c = 3.7;
    for (double& v : scaled.hiddens) v *= c;

    RegularizerSpec ns;
    ns.variant = PenaltyVariant::NormStabilizer;
    ns.beta = 1.0;
    CHECK(penalty_value(ns, scaled) ==
          Catch::Approx(c * c * penalty_value(ns, tr)).epsilon(1e-10));

    // relative variant cannot be reduced by dividing states by a constant
    RegularizerSpec rel;
    rel.variant = PenaltyVariant::RelativeNormDiffSq;
    rel.beta = 1.0;
    CHECK(penalty_value(rel, scaled) ==
          Catch::Approx(penalty_value(rel, tr)).epsilon(1e-10));
}

TEST_CASE("norm stabilizer vanishes iff all norms are equal", "[reg][property]") {
    Rng rng(25);
    RegularizerSpec spec;
    spec.variant = PenaltyVariant::NormStabilizer;
    spec.beta = 1.0;
    for (int trial = 0; trial < 30; ++trial) {
        Trajectory tr = random_trajectory(rng, 5, 3);
        const double val = penalty_value(spec, tr);
        std::vector<double> norms;
        for (std::size_t t = 0; t <= 5; ++t)
            norms.push_back(l2_norm(tr.h(t), 3));
        bool all_equal = true;
        for (double nv : norms)
            if (std::fabs(nv - norms[0]) > 1e-9) all_equal = false;
        REQUIRE((val < 1e-15) == all_equal);
    }
}

TEST_CASE("endpoint penalty ignores interior states", "[reg][property]") {
    Rng rng(26);
    Trajectory tr = random_trajectory(rng, 6, 4);
    RegularizerSpec spec;
    spec.variant = PenaltyVariant::EndpointDiffSq;
    spec.beta = 2.0;
    const double base = penalty_value(spec, tr);
    Trajectory perm = tr;
    // swap two interior states
    for (std::size_t j = 0; j < 4; ++j)
        std::swap(perm.hiddens[1 * 4 + j], perm.hiddens[4 * 4 + j]);
    CHECK(penalty_value(spec, perm) == base);
}

TEST_CASE("memory-cell target reads the cell trajectory", "[reg]") {
    Trajectory tr;
    tr.steps = 2;
    tr.n = 2;
    tr.lstm = true;
    tr.hiddens = {0, 0, 1, 1, 2, 2};
    tr.cells = {0, 0, 3, 4, 6, 8};
    RegularizerSpec spec;
    spec.variant = PenaltyVariant::NormStabilizer;
    spec.beta = 1.0;
    spec.target = PenaltyTarget::MemoryCell;
    CHECK(penalty_value(spec, tr) == Catch::Approx(25.0).margin(1e-12));

    Trajectory plain = Trajectory::from_states(
        {Tensor::vector({1, 1}), Tensor::vector({2, 2})});
    CHECK_THROWS_AS(penalty_value(spec, plain), ParameterError);
}

TEST_CASE("skip_first_term drops the h_0 pairing", "[reg]") {
    Trajectory tr = Trajectory::from_states(
        {Tensor::vector({0, 0}), Tensor::vector({3, 4}), Tensor::vector({6, 8})});
    RegularizerSpec spec;
    spec.variant = PenaltyVariant::NormStabilizer;
    spec.beta = 1.0;
    spec.skip_first_term = true;
    CHECK(penalty_value(spec, tr) == Catch::Approx(12.5).margin(1e-12));
}

TEST_CASE("weight noise statistics and restore", "[reg]") {
    OneMatrix m;
    Rng fill(30);
    for (std::size_t i = 0; i < m.w.size(); ++i) m.w[i] = fill.uniform(-1, 1);
    Tensor clean = m.w;

    SECTION("sigma zero leaves params unchanged") {
        Rng rng(31);
        WeightNoiseHandle<OneMatrix> h(m, 0.0, rng);
        for (std::size_t i = 0; i < m.w.size(); ++i)
            REQUIRE(m.w[i] == clean[i]);
    }

    SECTION("sigma .05 empirical std within 2 percent") {
        Rng rng(32);
        WeightNoiseHandle<OneMatrix> h(m, 0.05, rng);
        double sq = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < m.w.size(); ++i) {
            const double d = m.w[i] - clean[i];
            sum += d;
            sq += d * d;
        }
        const double nelem = static_cast<double>(m.w.size());
        const double mean = sum / nelem;
        const double sd = std::sqrt(sq / nelem - mean * mean);
        CHECK(sd == Catch::Approx(0.05).epsilon(0.02));
        // biases untouched
        for (std::size_t i = 0; i < m.b.size(); ++i) REQUIRE(m.b[i] == 0.0);
        h.restore();
        for (std::size_t i = 0; i < m.w.size(); ++i)
            REQUIRE(m.w[i] == clean[i]);
    }
}

TEST_CASE("dropout mask", "[reg]") {
    Rng rng(33);
    Tensor ones = dropout_mask(rng, {100}, 0.0);
    for (std::size_t i = 0; i < ones.size(); ++i) REQUIRE(ones[i] == 1.0);

    Tensor m = dropout_mask(rng, {100000}, 0.5);
    double sum = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        REQUIRE((m[i] == 0.0 || m[i] == 2.0));
        sum += m[i];
    }
    const double mean = sum / static_cast<double>(m.size());
    // mean of Bernoulli(0.5)*2: sd of the sample mean is 1/sqrt(N)
    CHECK(std::fabs(mean - 1.0) < 3.0 / std::sqrt(100000.0));

    CHECK_THROWS_AS(dropout_mask(rng, {4}, 1.0), ParameterError);
}
