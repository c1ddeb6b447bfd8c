#include "apsim/harness.hpp"
#include "apsim/report.hpp"

#include "fuzz.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace apsim;

namespace {

std::string golden_of(const ScenarioReport& r)
{
    std::string out;
    for (const auto& v : r.verdicts) {
        out += fmt::format("{},{},{}\n", ticks(v.at) / 60'000, v.rule_id, to_string(v.decision));
    }
    return out;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<const Verdict*> bolus_verdicts(const ScenarioReport& r)
{
    std::vector<const Verdict*> out;
    for (const auto& v : r.verdicts) {
        if (v.command && (v.decision == Decision::Allow || v.decision == Decision::Block) &&
            v.command->mode == InfusionMode::Bolus) {
            out.push_back(&v);
        }
    }
    return out;
}

}  // namespace

class GoldenVerdicts : public testing::TestWithParam<std::string> {};

TEST_P(GoldenVerdicts, MatchesRecordedSequence)
{
    const auto r = run_scenario(builtin_scenario(GetParam()), 1);
    const std::string expected = read_file(std::string(APSIM_SCENARIO_DIR) + "/../tests/golden/" + GetParam() + ".txt");
    ASSERT_FALSE(expected.empty());
    EXPECT_EQ(golden_of(r), expected);
}

TEST_P(GoldenVerdicts, DeterministicAcrossRuns)
{
    const auto& s = builtin_scenario(GetParam());
    EXPECT_EQ(fuzz::fingerprint(run_scenario(s, 4)), fuzz::fingerprint(run_scenario(s, 4)));
}

TEST_P(GoldenVerdicts, CrossCheckAgrees)
{
    const auto r = run_scenario(builtin_scenario(GetParam()), 1);
    EXPECT_FALSE(r.cross_checks.empty());
    EXPECT_EQ(r.cross_check_mismatches(), 0);
}

TEST_P(GoldenVerdicts, CountersEqualLogTallies)
{
    const auto r = run_scenario(builtin_scenario(GetParam()), 2);
    const Counters c = tally(r.verdicts);
    EXPECT_EQ(r.counters.allowed, c.allowed);
    EXPECT_EQ(r.counters.blocked, c.blocked);
    EXPECT_EQ(r.counters.warned, c.warned);
    EXPECT_EQ(r.counters.resets, c.resets);
    EXPECT_EQ(r.alarms.size(), static_cast<std::size_t>(c.blocked + c.warned + c.resets));
}

INSTANTIATE_TEST_SUITE_P(Builtin, GoldenVerdicts, testing::Values("S1", "S2", "S3", "S4", "S5"));

TEST(Harness, RecurringBolusesBlocked)
{
    const auto r = run_scenario(builtin_scenario("S1"), 1);
    const auto b = bolus_verdicts(r);
    ASSERT_EQ(b.size(), 4u);
    EXPECT_EQ(b[0]->decision, Decision::Allow);
    for (int i = 1; i < 4; ++i) {
        EXPECT_EQ(b[i]->decision, Decision::Block);
        EXPECT_EQ(b[i]->rule_id, "min-bolus-interval");
    }
    // blocked commands deliver nothing and the firmware is told about them
    for (int i = 1; i < 4; ++i) {
        EXPECT_EQ(r.delivered_for(b[i]->command->seq), 0.0);
    }
    int noted = 0;
    for (const auto& e : r.firmware_log) {
        noted += e.text.find("blocked by safety coprocessor") != std::string::npos;
    }
    EXPECT_EQ(noted, 3);
}

TEST(Harness, ExploitBlockedWithoutInsulin)
{
    const auto r = run_scenario(builtin_scenario("S4"), 7);
    EXPECT_EQ(r.counters.blocked, 1);
    const Verdict* block = nullptr;
    for (const auto& v : r.verdicts) {
        if (v.decision == Decision::Block) {
            block = &v;
        }
    }
    ASSERT_NE(block, nullptr);
    EXPECT_EQ(block->category, RuleCategory::IoAccess);
    EXPECT_EQ(block->tracked_state, ProgramState::RfAccess);
    double exploit_units = 0.0;
    for (const auto& c : r.firmware_commands) {
        if (c.redirected) {
            exploit_units += r.delivered_for(c.seq);
        }
    }
    EXPECT_EQ(exploit_units, 0.0);
}

TEST(Harness, PumpCommandsFromRfAccessNeverDeliver)
{
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto r = run_scenario(fuzz::random_script(seed), seed);
        for (const auto& v : r.verdicts) {
            if (v.command && v.tracked_state == ProgramState::RfAccess && v.command->device == Device::Pump &&
                (v.decision == Decision::Allow || v.decision == Decision::Block)) {
                EXPECT_EQ(v.decision, Decision::Block);
            }
        }
        for (const auto& c : r.firmware_commands) {
            if (c.redirected) {
                ASSERT_EQ(r.delivered_for(c.seq), 0.0) << "seed " << seed;
            }
        }
    }
}

TEST(Harness, WatchdogTimingAndRecovery)
{
    const auto r = run_scenario(builtin_scenario("S5"), 1);
    const Verdict* warn = nullptr;
    for (const auto& v : r.verdicts) {
        if (v.rule_id == "heartbeat-timeout" && v.decision == Decision::Warn) {
            warn = &v;
            break;
        }
    }
    ASSERT_NE(warn, nullptr);
    SimTime last{};
    for (auto t : r.heartbeats_received) {
        if (t < warn->at) {
            last = t;
        }
    }
    EXPECT_EQ(warn->at, last + 3 * minutes_ms(1));
    const SimTime disabled = r.warmup_end + from_minutes(5.5);
    EXPECT_LE(std::abs(ticks(warn->at) - ticks(disabled + 3 * minutes_ms(1))), 60'000);
    // after RESET_MAIN the next heartbeat arrives within one period
    SimTime next{};
    for (auto t : r.heartbeats_received) {
        if (t > warn->at) {
            next = t;
            break;
        }
    }
    ASSERT_GT(next, warn->at);
    EXPECT_LE(next - warn->at, minutes_ms(1) + SimDuration{50});
    EXPECT_EQ(r.counters.resets, 1);
}

TEST(Harness, QuietBaselineFor24Hours)
{
    ScenarioScript s;
    s.name = "quiet";
    s.duration_min = 24 * 60;
    const auto r = run_scenario(s, 3);
    EXPECT_EQ(r.counters.blocked, 0);
    EXPECT_EQ(r.counters.warned, 0);
    EXPECT_EQ(r.counters.resets, 0);
    EXPECT_GT(r.counters.allowed, 100);
    EXPECT_NEAR(r.min_bg, 110.0, 3.0);
    EXPECT_NEAR(r.max_bg, 110.0, 3.0);
}

TEST(Harness, AllowPathLatency)
{
    const auto r = run_scenario(builtin_scenario("S1"), 1);
    ASSERT_FALSE(r.actuations.empty());
    for (const auto& a : r.actuations) {
        const auto* cmd = [&]() -> const FirmwareCommand* {
            for (const auto& c : r.firmware_commands) {
                if (c.seq == a.command.seq) {
                    return &c;
                }
            }
            return nullptr;
        }();
        ASSERT_NE(cmd, nullptr);
        EXPECT_EQ(a.at - cmd->sent_at, SimDuration{253});
    }
}

TEST(Harness, MealAfterBolusSilencesExpectRise)
{
    ScenarioScript s = builtin_scenario("S2");
    s.actions.push_back({20.0, Meal{45.0}});
    const auto r = run_scenario(s, 1);
    EXPECT_EQ(r.counters.warned, 0);
    ASSERT_EQ(bolus_verdicts(r).size(), 1u);
    EXPECT_EQ(bolus_verdicts(r)[0]->decision, Decision::Allow);
}

TEST(Harness, FuzzedRunsAreSound)
{
    for (std::uint64_t seed = 1000; seed < 1100; ++seed) {
        const auto script = fuzz::random_script(seed);
        const auto a = run_scenario(script, seed);
        const auto b = run_scenario(script, seed);
        ASSERT_EQ(fuzz::fingerprint(a), fuzz::fingerprint(b)) << "seed " << seed;
        ASSERT_EQ(fuzz::interception_violation(a, RuleSet{}.config.processing), "") << "seed " << seed;
        ASSERT_EQ(a.negative_compartments, 0) << "seed " << seed;
        ASSERT_EQ(a.cross_check_mismatches(), 0) << "seed " << seed;
    }
}

TEST(Harness, SeedChangesOnlyNoise)
{
    const auto& s = builtin_scenario("S3");
    const auto a = run_scenario(s, 1);
    const auto b = run_scenario(s, 2);
    EXPECT_NE(bg_trace_csv(a), bg_trace_csv(b));
    EXPECT_EQ(a.bg_trace.size(), b.bg_trace.size());
}

TEST(Harness, InvalidOverridesRejectedBeforeRunning)
{
    ScenarioScript s = builtin_scenario("S1");
    s.patient_overrides.emplace_back("body_weight_kg", -3.0);
    EXPECT_THROW(run_scenario(s, 1), ConfigFileError);
    s = builtin_scenario("S1");
    s.actions.push_back({500.0, Meal{10.0}});
    EXPECT_THROW(run_scenario(s, 1), ScriptError);
}

TEST(Report, FilesWritten)
{
    const auto r = run_scenario(builtin_scenario("S4"), 7);
    const auto dir = std::filesystem::temp_directory_path() / "apsim_report_test";
    std::filesystem::remove_all(dir);
    write_report_files(r, dir);
    const std::string log = read_file((dir / "verdicts.log").string());
    EXPECT_EQ(log, verdict_log(r));
    EXPECT_NE(log.find(",io-pump,BLOCK,pump accessed from RF_ACCESS"), std::string::npos);
    const std::string csv = read_file((dir / "bg_trace.csv").string());
    EXPECT_EQ(csv.rfind("time_min,bg_mg_dl,insulin_u\n", 0), 0u);
    const auto j = nlohmann::json::parse(read_file((dir / "report.json").string()));
    EXPECT_EQ(j["counters"]["blocked"], 1);
    EXPECT_EQ(j["scenario"], "S4");
    std::filesystem::remove_all(dir);
}
