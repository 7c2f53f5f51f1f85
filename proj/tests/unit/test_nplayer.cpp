#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "mfgdelay/nplayer.hpp"
#include "support.hpp"

TEST_SUITE_BEGIN("nplayer");

using namespace mfgdelay;

namespace {

Problem measure_free_tiny(int T) {
    auto doc = nlohmann::json::parse(read_text_file(testing::data_path("tiny.json")));
    for (auto& row : doc["kernel"]) row.erase("coef");
    for (auto& row : doc["reward"]) row.erase("coef");
    doc["horizon"]["T"] = T;
    return parse_problem(doc.dump());
}

EpisodeConfig config(const Policy& crowd, const Policy& dev, std::vector<double> nu0, int N, int episodes) {
    EpisodeConfig c;
    c.N = N;
    c.episodes = episodes;
    c.seed = 0x5eed;
    c.crowd_policy = &crowd;
    c.deviator_policy = &dev;
    c.nu0 = std::move(nu0);
    c.threads = 1;
    return c;
}

}  // namespace

TEST_CASE("philox known answers") {
    using C = Philox4x32::Counter;
    CHECK(Philox4x32::block({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(Philox4x32::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(Philox4x32::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("uniform draws") {
    CHECK(unit_double(0, 0) > 0.0);
    CHECK(unit_double(0xffffffff, 0xffffffff) < 1.0);
    CHECK(unit_double(0x80000000, 0) == doctest::Approx(0.5).epsilon(1e-15));

    const AgentStream a(7, 0, 0), b(7, 0, 1), c(8, 0, 0);
    CHECK(a.uniform(3, AgentStream::Control) == AgentStream(7, 0, 0).uniform(3, AgentStream::Control));
    CHECK(a.uniform(3, AgentStream::Control) != a.uniform(3, AgentStream::Transition));
    CHECK(a.uniform(3, AgentStream::Control) != b.uniform(3, AgentStream::Control));
    CHECK(a.uniform(3, AgentStream::Control) != c.uniform(3, AgentStream::Control));
    CHECK_THROWS_AS(AgentStream(7, std::uint64_t{1} << 32, 0), std::invalid_argument);

    // first two moments of 20000 draws
    double s = 0.0, s2 = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        const double u = a.uniform(static_cast<std::uint32_t>(k), AgentStream::Transition);
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        s += u;
        s2 += u * u;
    }
    CHECK(std::abs(s / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
    CHECK(std::abs(s2 / n - 1.0 / 3) < 0.01);
}

TEST_CASE("empirical measure") {
    const auto sis = testing::load("sis.json");
    const auto tiny = testing::load("tiny.json");
    CHECK(empirical_measure(tiny.model, std::vector<int>{1}, std::vector<int>{0}) == MeasureVector{0.0, 1.0});
    CHECK(empirical_measure(tiny.model, std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 1, 0, 1}) ==
          MeasureVector{0.25, 0.75});
    CHECK(empirical_measure(sis.model, std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 1, 0, 1}) ==
          MeasureVector{0.25, 0.0, 0.25, 0.5});
    CHECK_THROWS_AS(empirical_measure(sis.model, std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("deviation estimates") {
    const auto tiny = testing::load("tiny.json");
    const auto sp = build_spaces(tiny.model);
    const auto nu0 = initial_measure(tiny.model, sp, tiny.initial);
    const auto pi = Policy::uniform(tiny.model.T(), sp.y_size(), sp.n_u());

    SUBCASE("no deviation, no gap") {
        const auto g = simulate_nplayer(config(pi, pi, nu0, 7, 50), tiny.model, sp);
        CHECK(g.gap == 0.0);
        CHECK(g.stderr_gap == 0.0);
    }
    SUBCASE("results do not depend on the thread count") {
        const auto dev = build_deviator(pi, tiny.model, sp, nu0);
        auto c = config(pi, dev, nu0, 9, 64);
        const auto one = simulate_nplayer(c, tiny.model, sp);
        c.threads = 3;
        const auto three = simulate_nplayer(c, tiny.model, sp);
        CHECK(one.mean_crowd == three.mean_crowd);
        CHECK(one.mean_deviator == three.mean_deviator);
        CHECK(one.gap == three.gap);
        CHECK(one.stderr_gap == three.stderr_gap);
        c.seed += 1;
        CHECK(simulate_nplayer(c, tiny.model, sp).mean_crowd != one.mean_crowd);
    }
    SUBCASE("episodes are independent of the batch") {
        const auto dev = build_deviator(pi, tiny.model, sp, nu0);
        const auto c = config(pi, dev, nu0, 5, 10);
        const auto r = simulate_episode(tiny.model, sp, c, 6);
        auto c2 = c;
        c2.episodes = 1000;
        const auto r2 = simulate_episode(tiny.model, sp, c2, 6);
        CHECK(r.crowd == r2.crowd);
        CHECK(r.deviator == r2.deviator);
    }
    SUBCASE("bad inputs") {
        auto c = config(pi, pi, nu0, 0, 1);
        CHECK_THROWS_AS(simulate_nplayer(c, tiny.model, sp), std::invalid_argument);
        c.N = 2;
        c.nu0.pop_back();
        CHECK_THROWS_AS(simulate_nplayer(c, tiny.model, sp), std::invalid_argument);
        const auto wrong = Policy::uniform(tiny.model.T() + 1, sp.y_size(), sp.n_u());
        CHECK_THROWS_AS(simulate_nplayer(config(pi, wrong, nu0, 2, 1), tiny.model, sp), std::invalid_argument);
    }
}

TEST_CASE("without interaction the game is the mean-field game") {
    const auto p = measure_free_tiny(8);
    const auto sp = build_spaces(p.model);
    const auto nu0 = initial_measure(p.model, sp, p.initial);
    const auto pi = Policy::uniform(p.model.T(), sp.y_size(), sp.n_u());
    const auto dev = build_deviator(pi, p.model, sp, nu0);
    const auto e = exploitability(p.model, sp, pi, nu0);
    const auto g = simulate_nplayer(config(pi, dev, nu0, 20, 2000), p.model, sp);
    CHECK(std::abs(g.mean_crowd - e.policy_value) <= 3 * g.stderr_crowd);
    CHECK(std::abs(g.gap - e.absolute) <= 3 * g.stderr_gap);
    CHECK(g.gap > 0.0);
}

TEST_CASE("single control: nothing to deviate to") {
    std::mt19937_64 rng(31);
    const auto m = testing::random_model(rng, 3, 1, {1}, Interaction::StateOnly);
    const auto sp = build_spaces(m);
    const auto nu0 = testing::random_window_measure(rng, m, sp);
    const auto pi = Policy::uniform(m.T(), sp.y_size(), 1);
    const auto dev = build_deviator(pi, m, sp, nu0);
    CHECK(dev.values() == pi.values());
    const auto g = simulate_nplayer(config(pi, dev, nu0, 4, 30), m, sp);
    CHECK(g.gap == 0.0);
}

TEST_CASE("deviator construction") {
    const auto tiny = testing::load("tiny.json");
    const auto sp = build_spaces(tiny.model);
    const auto nu0 = initial_measure(tiny.model, sp, tiny.initial);
    const auto pi = Policy::uniform(tiny.model.T(), sp.y_size(), sp.n_u());
    const auto dev = build_deviator(pi, tiny.model, sp, nu0);
    for (int t = 0; t <= tiny.model.T(); ++t)
        for (std::size_t y = 0; y < sp.y_size(); ++y) {
            const auto row = dev.row(t, y);
            REQUIRE(std::count(row.begin(), row.end(), 1.0) == 1);
        }
    // the greedy response attains the best value
    const auto e = exploitability(tiny.model, sp, pi, nu0);
    const auto flow = propagate(tiny.model, sp, pi, nu0);
    const auto mdp = build_mdp(tiny.model, sp, flow_lags(tiny.model, sp, flow, &pi));
    CHECK(policy_value(mdp, dev, observable_marginal(sp, nu0), 0.0, pi) == doctest::Approx(e.best_value).epsilon(1e-12));
    CHECK_THROWS(build_deviator(Policy::uniform(1, sp.y_size(), sp.n_u()), tiny.model, sp, nu0));
}

TEST_SUITE_END();
