#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "core/errors.hpp"
#include "core/gradsuite.hpp"

using namespace mga;

TEST_CASE("every primitive and composite path passes at 20 points") {
  // 20 points here keeps the unit test quick; the acceptance run uses 100.
  GradSuiteResult r = run_grad_suite(20, 7);
  for (const auto& item : r.items) {
    CAPTURE(item.name);
    CHECK(item.points == 20);
    CHECK(item.worst < item.tol);
    CHECK(item.pass);
  }
  CHECK(r.all_pass());
  // one item per primitive plus the three composites
  CHECK(r.items.size() == 16);
}

TEST_CASE("linear ops are held to the tighter tolerance") {
  GradSuiteResult r = run_grad_suite(2, 3);
  for (const auto& item : r.items) {
    if (item.name == "matmul" || item.name == "add" || item.name == "transpose" ||
        item.name == "embed_lookup")
      CHECK(item.tol == 1e-6);
    if (item.name == "sparsemax" || item.name == "layernorm" ||
        item.name == "encode_aggregate_loss")
      CHECK(item.tol == 1e-4);
  }
}

TEST_CASE("results are deterministic for a fixed seed") {
  GradSuiteResult a = run_grad_suite(3, 11);
  GradSuiteResult b = run_grad_suite(3, 11);
  REQUIRE(a.items.size() == b.items.size());
  for (size_t i = 0; i < a.items.size(); ++i) {
    CHECK(a.items[i].worst == b.items[i].worst);
    CHECK(a.items[i].skipped == b.items[i].skipped);
  }
}

TEST_CASE("reports carry every item") {
  GradSuiteResult r = run_grad_suite(2, 5);
  auto j = nlohmann::json::parse(grad_suite_to_json(r));
  CHECK(j["all_pass"].get<bool>() == r.all_pass());
  CHECK(j["items"].size() == r.items.size());
  CHECK(j["items"][0]["name"].get<std::string>() == r.items[0].name);

  std::string text = grad_suite_to_text(r);
  for (const auto& item : r.items)
    CHECK(text.find(item.name) != std::string::npos);
}

TEST_CASE("zero points is rejected") {
  CHECK_THROWS_AS(run_grad_suite(0, 1), ConfigError);
}
