#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
    int status = -1;
    std::string out;
};

Result cli(const std::string& args)
{
    const fs::path capture = fs::temp_directory_path() / ("apsim_cli_" + std::to_string(::getpid()) + ".txt");
    const std::string cmd = std::string(APSIM_CLI_PATH) + " " + args + " >" + capture.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    Result r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(capture);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    fs::remove(capture);
    return r;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() / ("apsim_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    fs::path dir_;
};

}  // namespace

TEST_F(Cli, RunWritesReportFiles)
{
    const auto r = cli("run --scenario S4 --seed 7 --out " + (dir_ / "out").string());
    EXPECT_EQ(r.status, 0) << r.out;
    for (const char* f : {"verdicts.log", "bg_trace.csv", "report.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
    }
}

TEST_F(Cli, RepeatedRunsAreByteIdentical)
{
    ASSERT_EQ(cli("run --scenario S3 --seed 5 --out " + (dir_ / "a").string()).status, 0);
    ASSERT_EQ(cli("run --scenario S3 --seed 5 --out " + (dir_ / "b").string()).status, 0);
    for (const char* f : {"verdicts.log", "bg_trace.csv", "report.json"}) {
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    }
}

TEST_F(Cli, StrictFlagsBlocks)
{
    EXPECT_EQ(cli("run --scenario S1 --strict --out " + (dir_ / "o").string()).status, 1);
    EXPECT_EQ(cli("run --scenario S1 --out " + (dir_ / "o").string()).status, 0);
}

TEST_F(Cli, UnknownScenarioListsAvailable)
{
    const auto r = cli("run --scenario S42 --out " + (dir_ / "o").string());
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("S1, S2, S3, S4, S5"), std::string::npos) << r.out;
}

TEST_F(Cli, ConfigErrorsExitTwo)
{
    EXPECT_EQ(cli("run --scenario S1 --patient /nonexistent.json").status, 2);
    EXPECT_EQ(cli("run --scenario S1 --script " + std::string(APSIM_SCENARIO_DIR) + "/S1.scn").status, 2);
    EXPECT_EQ(cli("").status, 2);
    EXPECT_EQ(cli("static-check --firmware mutant-unknown").status, 2);
    EXPECT_EQ(cli("static-check --rules /nonexistent.rules").status, 2);

    const fs::path bad = dir_ / "bad.json";
    std::ofstream(bad) << R"({"body_weight_kg": -5})";
    EXPECT_EQ(cli("run --scenario S1 --patient " + bad.string() + " --out " + (dir_ / "o").string()).status, 2);
    const fs::path rules = dir_ / "bad.rules";
    std::ofstream(rules) << "rule id=x category=oops\n";
    EXPECT_EQ(cli("run --scenario S1 --rules " + rules.string() + " --out " + (dir_ / "o").string()).status, 2);
}

TEST_F(Cli, StaticCheckTable)
{
    const auto r = cli("static-check --rules default");
    EXPECT_EQ(r.status, 0);
    for (const char* id : {"fw-bg-below-zero", "fw-bg-very-high", "fw-bg-very-low"}) {
        const auto pos = r.out.find(id);
        ASSERT_NE(pos, std::string::npos) << id;
        const std::string line = r.out.substr(pos, r.out.find('\n', pos) - pos);
        EXPECT_NE(line.find("points evaluated"), std::string::npos) << line;
    }
    const auto all = cli("static-check --firmware all");
    EXPECT_EQ(all.status, 0);
    EXPECT_NE(all.out.find("counterexample bg=-1.0 mg/dL"), std::string::npos) << all.out;
}

TEST_F(Cli, DumpConfigRoundTrips)
{
    ASSERT_EQ(cli("dump-config --out " + dir_.string()).status, 0);
    const auto r = cli("run --scenario S2 --patient " + (dir_ / "patient.json").string() + " --therapy " +
                       (dir_ / "therapy.json").string() + " --rules " + (dir_ / "rules.txt").string() + " --out " +
                       (dir_ / "custom").string());
    EXPECT_EQ(r.status, 0) << r.out;
    ASSERT_EQ(cli("run --scenario S2 --out " + (dir_ / "plain").string()).status, 0);
    EXPECT_EQ(slurp(dir_ / "custom" / "verdicts.log"), slurp(dir_ / "plain" / "verdicts.log"));
}

TEST_F(Cli, ListAndRunAll)
{
    const auto list = cli("list-scenarios");
    EXPECT_EQ(list.status, 0);
    EXPECT_NE(list.out.find("S5"), std::string::npos);
    const auto all = cli("run --all --out " + dir_.string());
    EXPECT_EQ(all.status, 0) << all.out;
    for (const char* s : {"S1", "S2", "S3", "S4", "S5"}) {
        EXPECT_TRUE(fs::exists(dir_ / s / "verdicts.log")) << s;
    }
}
