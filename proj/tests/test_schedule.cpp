#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "seqlab/rng.hpp"
#include "seqlab/schedule.hpp"

using namespace seqlab;

TEST_CASE("exponential k=0.9 at b=0 gives exactly 1") {
  ScheduleState s{ScheduleKind::exponential, 0.9, 0, 1.0, 1.0};
  REQUIRE(schedule_prob(s) == 1.0);
}

TEST_CASE("linear p0=1 k=0.01 at b=50 gives 0.5") {
  ScheduleState s{ScheduleKind::linear, 0.01, 50, 1.0, 1.0};
  REQUIRE(std::fabs(schedule_prob(s) - 0.5) <= 1e-12);
}

TEST_CASE("inverse sigmoid k=10 at b=0 gives 10/11") {
  ScheduleState s{ScheduleKind::inv_sigmoid, 10.0, 0, 1.0, 1.0};
  REQUIRE(std::fabs(schedule_prob(s) - 10.0 / 11.0) <= 1e-12);
}

TEST_CASE("linear clamps at zero") {
  ScheduleState s{ScheduleKind::linear, 0.1, 200, 1.0, 1.0};
  REQUIRE(schedule_prob(s) == 0.0);
}

TEST_CASE("none keeps p0 forever") {
  ScheduleState s{ScheduleKind::none, 0.0, 12345, 0.7, 1.0};
  REQUIRE(schedule_prob(s) == 0.7);
}

TEST_CASE("invalid decay parameters are rejected per kind") {
  ScheduleState s;
  s.kind = ScheduleKind::linear;
  s.k = 0.0;
  REQUIRE_THROWS_AS(schedule_prob(s), ScheduleError);
  s.kind = ScheduleKind::exponential;
  s.k = 1.0;
  REQUIRE_THROWS_AS(schedule_prob(s), ScheduleError);
  s.kind = ScheduleKind::exponential;
  s.k = -0.5;
  REQUIRE_THROWS_AS(schedule_prob(s), ScheduleError);
  s.kind = ScheduleKind::inv_sigmoid;
  s.k = 0.5;
  REQUIRE_THROWS_AS(schedule_prob(s), ScheduleError);
}

TEST_CASE("property: p is in [0,1] and nonincreasing in b for all kinds") {
  Rng rng(77);
  for (int rep = 0; rep < 1000; ++rep) {
    ScheduleState s;
    const int kind = rep % 3;
    if (kind == 0) {
      s.kind = ScheduleKind::linear;
      s.k = rng.next_double(1e-6, 0.5);
    } else if (kind == 1) {
      s.kind = ScheduleKind::exponential;
      s.k = rng.next_double(1e-6, 1.0 - 1e-9);
    } else {
      s.kind = ScheduleKind::inv_sigmoid;
      s.k = rng.next_double(1.0, 500.0);
    }
    double prev = 1.0;
    long long b = 0;
    for (int step = 0; step < 25; ++step) {
      s.b = b;
      const double p = schedule_prob(s);
      REQUIRE(p >= 0.0);
      REQUIRE(p <= 1.0);
      REQUIRE(p <= prev + 1e-15);
      prev = p;
      b += rng.next_int(1, 800);
      if (b > 10000) break;
    }
  }
}
