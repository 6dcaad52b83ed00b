#include <catch_amalgamated.hpp>

#include "normstab/tasks.hpp"
#include "oracles.hpp"

using namespace normstab;

TEST_CASE("adding examples are well formed", "[tasks]") {
    Rng rng(51);
    for (const AddingExample& ex : gen_adding(rng, 400, 200)) {
        REQUIRE(ex.values.size() == 400);
        int marks = 0;
        double sum = 0.0;
        for (std::size_t t = 0; t < 400; ++t) {
            REQUIRE(ex.values[t] >= 0.0);
            REQUIRE(ex.values[t] < 1.0);
            if (ex.markers[t]) {
                ++marks;
                sum += ex.values[t];
            }
        }
        REQUIRE(marks == 2);
        REQUIRE(ex.target == sum);
        REQUIRE(ex.target >= 0.0);
        REQUIRE(ex.target <= 2.0);
        Tensor x = ex.inputs();
        REQUIRE(x.dim(1) == 2);
    }
    CHECK_THROWS_AS(gen_adding(rng, 1, 1), ParameterError);
}

TEST_CASE("adding generator is deterministic per seed", "[tasks][property]") {
    Rng a(52), b(52);
    auto ea = gen_adding(a, 50, 20);
    auto eb = gen_adding(b, 50, 20);
    for (std::size_t i = 0; i < ea.size(); ++i) {
        REQUIRE(ea[i].target == eb[i].target);
        REQUIRE(ea[i].values == eb[i].values);
        REQUIRE(ea[i].markers == eb[i].markers);
    }
}

TEST_CASE("marker positions are uniform (chi-square)", "[tasks][slow]") {
    Rng rng(53);
    const std::size_t T = 50, count = 100000;
    std::vector<double> hist(T, 0.0);
    for (const AddingExample& ex : gen_adding(rng, T, count))
        for (std::size_t t = 0; t < T; ++t)
            if (ex.markers[t]) hist[t] += 1.0;
    const double expected = 2.0 * count / static_cast<double>(T);
    double chi2 = 0.0;
    for (double h : hist) chi2 += (h - expected) * (h - expected) / expected;
    // Wilson-Hilferty critical value at p = 0.001, df = T-1
    const double df = static_cast<double>(T - 1);
    const double z = 3.090232;
    const double term = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
    const double crit = df * term * term * term;
    CHECK(chi2 < crit);
}

TEST_CASE("adding baselines by Monte Carlo", "[tasks][slow]") {
    AddingBaselines b = adding_baselines();
    CHECK(b.short_sighted == Catch::Approx(1.0 / 12.0));
    CHECK(b.constant_predictor == Catch::Approx(1.0 / 6.0));

    Rng rng(54);
    const std::size_t count = 1000000;
    double mse_short = 0.0, mse_const = 0.0;
    for (const AddingExample& ex : gen_adding(rng, 10, count)) {
        double first = 0.0;
        for (std::size_t t = 0; t < 10; ++t)
            if (ex.markers[t]) {
                first = ex.values[t];
                break;
            }
        // first marked value plus the other's expectation
        const double d1 = (first + 0.5) - ex.target;
        const double d2 = 1.0 - ex.target; // best constant
        mse_short += d1 * d1;
        mse_const += d2 * d2;
    }
    mse_short /= static_cast<double>(count);
    mse_const /= static_cast<double>(count);
    CHECK(mse_short == Catch::Approx(1.0 / 12.0).margin(1e-3));
    CHECK(mse_const == Catch::Approx(1.0 / 6.0).margin(1e-3));
}

TEST_CASE("mse loss and gradient", "[tasks]") {
    CHECK(mse_loss(1.5, 1.5) == 0.0);
    double grad = 0.0;
    CHECK(mse_loss(1.0, 0.0, &grad) == 1.0);
    CHECK(grad == 2.0);

    const double p = 0.73, t = -0.21, eps = 1e-6;
    mse_loss(p, t, &grad);
    const double fd = (mse_loss(p + eps, t) - mse_loss(p - eps, t)) / (2 * eps);
    CHECK(grad == Catch::Approx(fd).margin(1e-8));
}

TEST_CASE("char windows follow the documented rule", "[tasks]") {
    CharCorpus c = CharCorpus::from_bytes("abcdef", 1.0, 0.0);
    auto windows = char_windows(c, CharCorpus::Split::Train, 2);
    REQUIRE(windows.size() == 2); // "ab"->"bc", "cd"->"de"; "ef" dropped
    auto sym = [&](int id) { return c.symbols[static_cast<std::size_t>(id)]; };
    CHECK(sym(windows[0].inputs[0]) == 'a');
    CHECK(sym(windows[0].inputs[1]) == 'b');
    CHECK(sym(windows[0].targets[0]) == 'b');
    CHECK(sym(windows[0].targets[1]) == 'c');
    CHECK(sym(windows[1].inputs[0]) == 'c');
    CHECK(sym(windows[1].targets[1]) == 'e');

    // disjoint input ranges, total emitted <= corpus length
    std::size_t emitted = 0;
    for (const auto& w : windows) emitted += w.inputs.size();
    CHECK(emitted <= c.ids.size());

    CHECK_THROWS_AS(char_windows(c, CharCorpus::Split::Train, 10),
                    ParameterError);
}

TEST_CASE("vocabulary maps unseen symbols to unknown", "[tasks]") {
    // train split covers only "abab"; 'z' appears in the test tail
    CharCorpus c = CharCorpus::from_bytes("ababababzz", 0.8, 0.0);
    CHECK(c.vocab_size() == 3); // unk, 'a', 'b'
    CHECK(c.ids[8] == 0);
    CHECK(c.ids[9] == 0);
}

TEST_CASE("softmax cross entropy", "[tasks]") {
    const std::size_t v = 7;
    Tensor logits({v});
    Tensor grad;
    CHECK(softmax_xent(logits, 3, &grad) ==
          Catch::Approx(std::log(static_cast<double>(v))).epsilon(1e-12));
    CHECK(bits_per_character(std::log(7.0) * 100, 100) ==
          Catch::Approx(std::log2(7.0)).epsilon(1e-12));

    Tensor confident({2});
    confident[0] = 50.0;
    confident[1] = -50.0;
    CHECK(softmax_xent(confident, 0) < 1e-12);
}

TEST_CASE("softmax gradient matches finite differences and sums to zero",
          "[tasks][gradcheck]") {
    Rng rng(55);
    const std::size_t v = 11;
    Tensor logits = uniform_init(rng, {v}, -2.0, 2.0);
    const int target = 4;
    Tensor grad;
    softmax_xent(logits, target, &grad);

    double gsum = 0.0;
    for (std::size_t i = 0; i < v; ++i) gsum += grad[i];
    CHECK(std::fabs(gsum) < 1e-12);

    auto f = [&]() { return softmax_xent(logits, target); };
    auto fd = oracle::central_diff(
        f, [&](std::size_t i) { return logits[i]; },
        [&](std::size_t i, double x) { logits[i] = x; }, v, 1e-6);
    for (std::size_t i = 0; i < v; ++i)
        CHECK(grad[i] == Catch::Approx(fd[i]).margin(1e-6));
}
