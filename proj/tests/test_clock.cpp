#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "atomflux/sim_clock.hpp"

using namespace atomflux;

TEST_CASE("events pop in time order and advance the clock", "[clock]") {
    SimClock clock;
    clock.schedule(300, "c");
    clock.schedule(100, "a");
    clock.schedule(200, "b");

    REQUIRE(clock.pending() == 3);
    auto ev = clock.pop();
    REQUIRE(ev.has_value());
    CHECK(ev->tag == "a");
    CHECK(ev->t == 100);
    CHECK(clock.now() == 100);

    ev = clock.pop();
    CHECK(ev->tag == "b");
    CHECK(clock.now() == 200);

    ev = clock.pop();
    CHECK(ev->tag == "c");
    CHECK(clock.now() == 300);
    CHECK(clock.empty());
}

TEST_CASE("equal-time events pop in insertion order", "[clock]") {
    SimClock clock;
    for (int i = 0; i < 50; ++i) clock.schedule(1000, "tie", i);
    std::vector<std::int64_t> order;
    while (auto ev = clock.pop()) order.push_back(ev->arg);
    REQUIRE(order.size() == 50);
    for (int i = 0; i < 50; ++i) REQUIRE(order[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("ties interleaved with earlier events keep FIFO within each time", "[clock]") {
    SimClock clock;
    clock.schedule(500, "x", 1);
    clock.schedule(400, "y", 0);
    clock.schedule(500, "x", 2);
    std::vector<std::string> tags;
    std::vector<std::int64_t> args;
    while (auto ev = clock.pop()) {
        tags.push_back(ev->tag);
        args.push_back(ev->arg);
    }
    CHECK(tags == std::vector<std::string>{"y", "x", "x"});
    CHECK(args == std::vector<std::int64_t>{0, 1, 2});
}

TEST_CASE("scheduling into the past is rejected", "[clock]") {
    SimClock clock;
    clock.schedule(100, "a");
    clock.pop();
    REQUIRE(clock.now() == 100);
    CHECK_THROWS_AS(clock.schedule(99, "late"), std::invalid_argument);
    CHECK_NOTHROW(clock.schedule(100, "same-time"));
}

TEST_CASE("popping an empty clock returns nothing and keeps now()", "[clock]") {
    SimClock clock;
    CHECK(clock.empty());
    CHECK(clock.pending() == 0);
    CHECK_FALSE(clock.pop().has_value());
    CHECK(clock.now() == 0);
}

TEST_CASE("millisecond literal scales to microseconds", "[clock]") {
    CHECK(1_ms == 1000);
    CHECK(150_ms == 150000);
    CHECK(0_ms == 0);
    static_assert(80_ms == 80000);
}
