#include "rollcall/simulator.hpp"

#include <gtest/gtest.h>

#include "rollcall/error.hpp"
#include "support.hpp"

namespace rollcall {
namespace {

using namespace std::chrono_literals;

sim::Options small(std::uint64_t seed) {
  sim::Options o;
  o.students = 60;
  o.readers = 2;
  o.seed = seed;
  o.policy = testing::lima_policy();
  return o;
}

std::string digest_line(const std::string& report) {
  auto at = report.find("ledger digest");
  return report.substr(at, report.find('\n', at) - at);
}

TEST(SimulatorTest, SmallMorningConformsToOracle) {
  auto result = sim::run(small(3));
  EXPECT_TRUE(result.conformant) << result.report;
  EXPECT_EQ(result.central_counts, result.oracle_counts);
  EXPECT_EQ(result.central_counts.total(), result.active_roster);
  EXPECT_EQ(result.round_trips.size(), result.scans);
}

TEST(SimulatorTest, SameSeedSameReport) {
  auto a = sim::run(small(11));
  auto b = sim::run(small(11));
  EXPECT_EQ(a.report, b.report);
  auto c = sim::run(small(12));
  EXPECT_NE(digest_line(a.report), digest_line(c.report));
}

TEST(SimulatorTest, NoStudentsNoRecords) {
  auto o = small(1);
  o.students = 0;
  auto result = sim::run(o);
  EXPECT_TRUE(result.conformant) << result.report;
  EXPECT_EQ(result.central_events, 0u);
}

TEST(SimulatorTest, PartitionEndsInTheSameLedger) {
  auto plain = sim::run(small(5));
  auto o = small(5);
  o.partition = sim::parse_window("06:40..08:50");
  auto cut = sim::run(o);
  EXPECT_TRUE(cut.conformant) << cut.report;
  EXPECT_EQ(digest_line(plain.report), digest_line(cut.report));
  EXPECT_EQ(plain.central_counts, cut.central_counts);
}

TEST(SimulatorTest, SaturdayRejectsEveryTap) {
  auto o = small(8);
  o.day = parse_date("2025-03-15");
  auto result = sim::run(o);
  EXPECT_TRUE(result.conformant) << result.report;
  EXPECT_EQ(result.central_counts.total(), 0u);
  EXPECT_NE(result.report.find("NAK DAY"), std::string::npos);
}

TEST(SimulatorTest, WindowParsing) {
  auto [from, to] = sim::parse_window("07:30..09:30");
  EXPECT_EQ(from, 7h + 30min);
  EXPECT_EQ(to, 9h + 30min);
  EXPECT_EQ(testing::error_code_of([] { sim::parse_window("09:00..08:00"); }), ErrorCode::kInvalidRange);
  EXPECT_EQ(testing::error_code_of([] { sim::parse_window("09:00"); }), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace rollcall
