#include <doctest.h>

#include "hywu/config.hpp"

using namespace hywu;

TEST_CASE("config parses sections, comments, and whitespace") {
  auto cfg = Config::parse_string(
      "# leading comment\n"
      "[train]\n"
      "steps = 100   ; trailing comment\n"
      "  lr=0.5\n"
      "adam = off\n"
      "\n"
      "[task]\n"
      "kind = scale\n");
  CHECK(cfg.get_size("train", "steps", 0) == 100);
  CHECK(cfg.get_double("train", "lr", 0.0) == doctest::Approx(0.5));
  CHECK(cfg.get_bool("train", "adam", true) == false);
  CHECK(cfg.get_string("task", "kind", "") == "scale");
  CHECK(cfg.has("train", "steps"));
  CHECK_FALSE(cfg.has("train", "missing"));
}

TEST_CASE("absent keys fall back to defaults") {
  auto cfg = Config::parse_string("[a]\nx = 1\n");
  CHECK(cfg.get_size("a", "y", 7) == 7);
  CHECK(cfg.get_double("b", "z", 2.5) == 2.5);
  CHECK(cfg.get_bool("a", "flag", true) == true);
  CHECK(cfg.get_string("a", "s", "d") == "d");
}

TEST_CASE("malformed input reports line numbers") {
  CHECK_THROWS_WITH_AS(Config::parse_string("[open\n"), doctest::Contains(":1:"), ConfigError);
  CHECK_THROWS_WITH_AS(Config::parse_string("[s]\nno_equals\n"), doctest::Contains(":2:"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(Config::parse_string("[s]\n= value\n"), doctest::Contains("empty key"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(Config::parse_string("[s]\nk = 1\nk = 2\n"),
                       doctest::Contains("duplicate key"), ConfigError);
}

TEST_CASE("type conversion failures are config errors") {
  auto cfg = Config::parse_string("[s]\nnum = 3x\nint = -4\nflag = maybe\n");
  CHECK_THROWS_AS(cfg.get_double("s", "num", 0.0), ConfigError);
  CHECK_THROWS_AS(cfg.get_u64("s", "int", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("s", "flag", false), ConfigError);
}

TEST_CASE("unread keys are tracked") {
  auto cfg = Config::parse_string("[a]\nx = 1\ny = 2\n");
  CHECK(cfg.unread_keys().size() == 2);
  cfg.get_size("a", "x", 0);
  auto unread = cfg.unread_keys();
  REQUIRE(unread.size() == 1);
  CHECK(unread[0] == "a.y");
}

TEST_CASE("missing config file is an error") {
  CHECK_THROWS_AS(Config::parse_file("/nonexistent/config.ini"), ConfigError);
}
