#include "splatroom/diagnostics.hpp"

#include "support.hpp"

#include <json.hpp>

#include <limits>
#include <regex>
#include <set>

using namespace splatroom;

namespace {

std::size_t failures(const std::vector<OracleReport>& reports) {
  std::size_t n = 0;
  for (const auto& r : reports)
    if (!r.passed) {
      MESSAGE(r.name << " [" << r.instance << "] abs " << r.max_abs << " rel " << r.max_rel);
      ++n;
    }
  return n;
}

}  // namespace

TEST_CASE("oracle suites pass across seeds") {
  for (std::uint64_t seed : {0, 7, 19}) {
    CAPTURE(seed);
    const auto grad = run_gradient_suite(seed);
    CHECK(grad.size() >= 200);
    CHECK(failures(grad) == 0);
    CHECK(failures(run_equivalence_suite(seed)) == 0);
  }
}

TEST_CASE("suites are deterministic for a seed") {
  const auto a = run_gradient_suite(5), b = run_gradient_suite(5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].instance == b[i].instance);
    CHECK(a[i].max_abs == b[i].max_abs);
  }
  CHECK(reports_json(run_equivalence_suite(5)) == reports_json(run_equivalence_suite(5)));
}

TEST_CASE("infinite tolerance accepts everything") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(failures(run_gradient_suite(1, inf)) == 0);
  CHECK(failures(run_equivalence_suite(1, inf)) == 0);
}

TEST_CASE("coverage table names existing checks") {
  auto reports = run_gradient_suite(0);
  const auto eq = run_equivalence_suite(0);
  reports.insert(reports.end(), eq.begin(), eq.end());
  std::set<std::string> names;
  for (const auto& r : reports) names.insert(r.name);

  const std::regex check_name(R"(\b[a-z_]+\.[a-z_.*]+)");
  for (const CoverageEntry& e : coverage_table()) {
    CAPTURE(e.example);
    bool any = e.check.find("acceptance") != std::string::npos || e.check.find("verify") != std::string::npos;
    for (auto it = std::sregex_iterator(e.check.begin(), e.check.end(), check_name); it != std::sregex_iterator();
         ++it) {
      std::string token = it->str();
      const bool wildcard = !token.empty() && token.back() == '*';
      if (wildcard) token.pop_back();
      const bool found = wildcard ? std::any_of(names.begin(), names.end(),
                                                [&](const std::string& n) { return n.rfind(token, 0) == 0; })
                                  : names.count(token) > 0;
      CHECK_MESSAGE(found, token);
      any = true;
    }
    CHECK(any);
  }
}

TEST_CASE("summaries count checks per name") {
  std::vector<OracleReport> reports(3);
  reports[0].name = reports[2].name = "a";
  reports[1].name = "b";
  reports[0].passed = true;
  reports[1].passed = true;
  reports[2].max_abs = 4.0;
  const auto s = summarize(reports);
  REQUIRE(s.size() == 2);
  CHECK(s[0].name == "a");
  CHECK(s[0].checks == 2);
  CHECK(s[0].failures == 1);
  CHECK(s[0].worst_abs == 4.0);
  CHECK(s[1].failures == 0);
  CHECK(nlohmann::json::parse(reports_json(reports)).size() == 3);
}
