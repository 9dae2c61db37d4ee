#include <gtest/gtest.h>

#include <regex>
#include <set>
#include <sstream>
#include <iomanip>

#include "rollcall/domain.hpp"
#include "rollcall/error.hpp"
#include "support.hpp"

namespace rollcall {
namespace {

using testing::kAdmin;
using testing::kAuxiliary;
using testing::kTeacher;

const std::regex kCodePattern("^[0-9]{4}-[1-5][A-Z]-[0-9]{3}$");

// Brute force: enumerate 001..999 and take the first code absent from the
// roster.
std::string min_free_oracle(int year, int grade, char section, const std::vector<std::string>& roster) {
  std::set<std::string> taken(roster.begin(), roster.end());
  for (int n = 1; n <= 999; ++n) {
    std::ostringstream code;
    code << std::setw(4) << std::setfill('0') << year << '-' << grade << section << '-'
         << std::setw(3) << std::setfill('0') << n;
    if (!taken.contains(code.str())) return code.str();
  }
  return "";
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

TEST(StudentCode, FirstCodeOfEmptyRoster) {
  EXPECT_EQ(generate_student_code(2025, 1, 'A', {}), "2025-1A-001");
}

TEST(StudentCode, NextFreeSequential) {
  std::vector<std::string> roster{"2025-1A-001", "2025-1A-002"};
  EXPECT_EQ(generate_student_code(2025, 1, 'A', roster), "2025-1A-003");
}

TEST(StudentCode, OtherPrefixesDoNotCount) {
  std::vector<std::string> roster;
  for (int n = 1; n <= 10; ++n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "2025-1A-%03d", n);
    roster.emplace_back(buf);
  }
  auto expected = min_free_oracle(2025, 3, 'B', roster);
  ASSERT_EQ(expected, "2025-3B-001");
  EXPECT_EQ(generate_student_code(2025, 3, 'B', roster), expected);
}

TEST(StudentCode, FillsHoles) {
  std::vector<std::string> roster{"2025-2C-001", "2025-2C-003"};
  EXPECT_EQ(generate_student_code(2025, 2, 'C', roster), "2025-2C-002");
}

TEST(StudentCode, RejectsBadGradeOrSection) {
  EXPECT_EQ(code_of([] { generate_student_code(2025, 0, 'A', {}); }), ErrorCode::kInvalidGradeOrSection);
  EXPECT_EQ(code_of([] { generate_student_code(2025, 6, 'A', {}); }), ErrorCode::kInvalidGradeOrSection);
  EXPECT_EQ(code_of([] { generate_student_code(2025, 1, 'a', {}); }), ErrorCode::kInvalidGradeOrSection);
  EXPECT_EQ(code_of([] { generate_student_code(2025, 1, '1', {}); }), ErrorCode::kInvalidGradeOrSection);
}

TEST(StudentCode, CapacityExhausted) {
  std::vector<std::string> roster;
  for (int n = 1; n <= 999; ++n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "2025-4D-%03d", n);
    roster.emplace_back(buf);
  }
  EXPECT_EQ(code_of([&] { generate_student_code(2025, 4, 'D', roster); }),
            ErrorCode::kCapacityExhausted);
  EXPECT_EQ(generate_student_code(2025, 4, 'E', roster), "2025-4E-001");
}

TEST(StudentCode, ClosureOverRandomRosters) {
  std::mt19937 rng(12345);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> roster;
    int size = std::uniform_int_distribution<int>(0, 60)(rng);
    for (int i = 0; i < size; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%d%c-%03d", 2024 + static_cast<int>(rng() % 2),
                    1 + static_cast<int>(rng() % 5), static_cast<char>('A' + rng() % 3),
                    1 + static_cast<int>(rng() % 20));
      roster.emplace_back(buf);
    }
    int year = 2024 + static_cast<int>(rng() % 2);
    int grade = 1 + static_cast<int>(rng() % 5);
    char section = static_cast<char>('A' + rng() % 3);
    auto code = generate_student_code(year, grade, section, roster);
    EXPECT_TRUE(std::regex_match(code, kCodePattern)) << code;
    EXPECT_EQ(std::find(roster.begin(), roster.end(), code), roster.end());
    EXPECT_EQ(code, min_free_oracle(year, grade, section, roster));
  }
}

TEST(StudentCode, ValidatorAgreesWithRegex) {
  for (std::string code : {"2025-1A-001", "2025-5Z-999", "2025-6A-001", "2025-1a-001", "225-1A-001",
                           "2025-1A-01", "2025_1A-001", "2025-0A-001", "2025-1A-0011"}) {
    EXPECT_EQ(is_valid_student_code(code), std::regex_match(code, kCodePattern)) << code;
  }
}

TEST(CardUidTest, CanonicalForm) {
  auto uid = CardUid::parse("04a1b2c3");
  ASSERT_TRUE(uid);
  EXPECT_EQ(uid->to_string(), "04A1B2C3");
  EXPECT_EQ(CardUid::parse("04:A1:B2:C3"), uid);
  EXPECT_EQ(CardUid::parse("04-a1-b2-c3"), uid);
  EXPECT_EQ(uid->bytes()[0], 0x04);
  EXPECT_FALSE(CardUid::parse("04A1B2C"));
  EXPECT_FALSE(CardUid::parse("04A1B2C3D4"));
  EXPECT_FALSE(CardUid::parse("04A1B2CG"));
  EXPECT_FALSE(CardUid::parse("0:4A1B2C3"));
  EXPECT_FALSE(CardUid::parse(""));
}

TEST(EventIdTest, FormatsAsUuid) {
  auto id = EventId::random();
  auto text = id.to_string();
  EXPECT_TRUE(std::regex_match(text, std::regex("^[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}$")))
      << text;
  EXPECT_EQ(EventId::parse(text), id);
  EXPECT_NE(EventId::random(), id);
  EXPECT_FALSE(EventId::parse("not-a-uuid"));
}

class CardTableTest : public ::testing::Test {
 protected:
  void SetUp() override {
    StudentRecord a;
    a.enrollment_year = 2025;
    roster_.enroll(a);  // 2025-1A-001
    roster_.enroll(a);  // 2025-1A-002
    StudentRecord gone = a;
    gone.active = false;
    roster_.enroll(gone);  // 2025-1A-003, inactive
  }

  Roster roster_;
  CardTable cards_;
  CardUid uid_ = *CardUid::parse("04A1B2C3");
};

TEST_F(CardTableTest, FreshEnrollment) {
  auto change = cards_.enroll(uid_, "2025-1A-001", roster_, kAuxiliary, Timestamp{});
  EXPECT_TRUE(change.changed);
  EXPECT_EQ(change.card.state, CardState::kActive);
  EXPECT_EQ(change.card.linked_student, "2025-1A-001");
  EXPECT_EQ(change.audit.action, AuditAction::kEnroll);
  EXPECT_EQ(change.audit.subject, "04A1B2C3");
  EXPECT_EQ(cards_.size(), 1u);
}

TEST_F(CardTableTest, ReEnrollSameStudentIsIdempotent) {
  cards_.enroll(uid_, "2025-1A-001", roster_, kAuxiliary, Timestamp{});
  auto again = cards_.enroll(uid_, "2025-1A-001", roster_, kAuxiliary, Timestamp{});
  EXPECT_FALSE(again.changed);
  EXPECT_EQ(cards_.size(), 1u);
}

TEST_F(CardTableTest, DuplicateUidForOtherStudent) {
  cards_.enroll(uid_, "2025-1A-001", roster_, kAuxiliary, Timestamp{});
  EXPECT_EQ(code_of([&] { cards_.enroll(uid_, "2025-1A-002", roster_, kAuxiliary, Timestamp{}); }),
            ErrorCode::kDuplicateUid);
  // Uniqueness scan of the table agrees: the uid still belongs to -001.
  EXPECT_EQ(cards_.find(uid_)->linked_student, "2025-1A-001");
}

TEST_F(CardTableTest, UnknownOrInactiveStudent) {
  EXPECT_EQ(code_of([&] { cards_.enroll(uid_, "2025-1A-099", roster_, kAdmin, Timestamp{}); }),
            ErrorCode::kUnknownStudent);
  EXPECT_EQ(code_of([&] { cards_.enroll(uid_, "2025-1A-003", roster_, kAdmin, Timestamp{}); }),
            ErrorCode::kUnknownStudent);
}

TEST_F(CardTableTest, ReplacementBlocksPreviousCard) {
  auto second = *CardUid::parse("0A0B0C0D");
  cards_.enroll(uid_, "2025-1A-001", roster_, kAuxiliary, Timestamp{});
  auto change = cards_.enroll(second, "2025-1A-001", roster_, kAuxiliary, Timestamp{});
  ASSERT_TRUE(change.displaced);
  EXPECT_EQ(change.displaced->uid, uid_);
  EXPECT_EQ(cards_.find(uid_)->state, CardState::kBlocked);
  EXPECT_EQ(cards_.active_card_of("2025-1A-001")->uid, second);
  EXPECT_EQ(cards_.size(), 2u);  // old card kept for history
}

TEST_F(CardTableTest, BlockIsIdempotentAndRoleGuarded) {
  cards_.enroll(uid_, "2025-1A-001", roster_, kAuxiliary, Timestamp{});
  EXPECT_EQ(code_of([&] { cards_.set_state(uid_, CardState::kBlocked, kTeacher, Timestamp{}); }),
            ErrorCode::kForbidden);
  auto first = cards_.set_state(uid_, CardState::kBlocked, kAdmin, Timestamp{});
  EXPECT_TRUE(first.changed);
  EXPECT_EQ(first.audit.action, AuditAction::kBlock);
  auto second = cards_.set_state(uid_, CardState::kBlocked, kAdmin, Timestamp{});
  EXPECT_FALSE(second.changed);
  EXPECT_EQ(cards_.find(uid_)->state, CardState::kBlocked);
  EXPECT_EQ(code_of([&] {
              cards_.set_state(*CardUid::parse("FFFFFFFF"), CardState::kBlocked, kAdmin, Timestamp{});
            }),
            ErrorCode::kUnknownCard);
}

TEST_F(CardTableTest, UniquenessUnderRandomOperations) {
  std::mt19937 rng(99);
  std::vector<std::string> students{"2025-1A-001", "2025-1A-002"};
  for (int step = 0; step < 2000; ++step) {
    auto uid = testing::uid_for(static_cast<int>(rng() % 6));
    try {
      if (rng() % 2 == 0) {
        cards_.enroll(uid, students[rng() % 2], roster_, kAdmin, Timestamp{});
      } else {
        cards_.set_state(uid, rng() % 2 ? CardState::kActive : CardState::kBlocked, kAdmin, Timestamp{});
      }
    } catch (const Error&) {
    }
    std::map<std::string, int> active_per_student;
    for (const auto& [_, card] : cards_.all()) {
      if (card.state == CardState::kActive && card.linked_student) ++active_per_student[*card.linked_student];
    }
    for (const auto& [student, count] : active_per_student) {
      ASSERT_LE(count, 1) << student << " at step " << step;
    }
  }
}

TEST(EventInvariants, StatusMethodCompatibility) {
  AttendanceEvent e;
  e.student_code = "2025-1A-001";
  e.method = CaptureMethod::kRfid;
  e.status = AttendanceStatus::kAbsent;
  EXPECT_THROW(validate_event(e), Error);
  e.status = AttendanceStatus::kLate;
  EXPECT_NO_THROW(validate_event(e));
  e.method = CaptureMethod::kSystemClosure;
  EXPECT_THROW(validate_event(e), Error);
  e.status = AttendanceStatus::kAbsent;
  EXPECT_NO_THROW(validate_event(e));
  e.status = AttendanceStatus::kJustified;
  EXPECT_THROW(validate_event(e), Error);
  e.method = CaptureMethod::kManual;
  EXPECT_THROW(validate_event(e), Error);  // manual needs recorded_by
  e.recorded_by = "aux";
  EXPECT_NO_THROW(validate_event(e));
}

}  // namespace
}  // namespace rollcall
