#include "apsim/config.hpp"
#include "apsim/harness.hpp"
#include "apsim/report.hpp"
#include "apsim/rules.hpp"
#include "apsim/scenario.hpp"
#include "apsim/static_check.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

namespace fs = std::filesystem;
using namespace apsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFlagged = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunArgs {
    std::string scenario;
    std::string script;
    bool all = false;
    std::uint64_t seed = 1;
    std::string out = "out";
    std::string patient;
    std::string therapy;
    std::string rules;
    bool strict = false;
    bool verbose = false;
};

struct StaticArgs {
    std::string rules = "default";
    std::string therapy;
    std::string firmware = "reference";
    std::int64_t budget = 0;
};

RuleSet rules_from(const std::string& source)
{
    return source.empty() || source == "default" ? default_rules() : load_rules(source);
}

RunOptions options_from(const RunArgs& a)
{
    RunOptions opt;
    if (!a.patient.empty()) {
        opt.patient = load_patient(a.patient);
    }
    if (!a.therapy.empty()) {
        opt.therapy = load_therapy(a.therapy);
    }
    opt.rules = rules_from(a.rules);
    return opt;
}

std::string summary(const ScenarioReport& r)
{
    const auto& c = r.counters;
    return fmt::format("{}: allowed={} blocked={} warned={} resets={} insulin={:.1f} U bg={:.1f}..{:.1f} mg/dL", r.name,
                       c.allowed, c.blocked, c.warned, c.resets, r.insulin_delivered_u, r.min_bg, r.max_bg);
}

int run_command(const RunArgs& a)
{
    const RunOptions opt = options_from(a);
    std::vector<ScenarioScript> scripts;
    if (a.all) {
        scripts = builtin_scenarios();
    } else if (!a.script.empty()) {
        scripts.push_back(load_script(a.script));
    } else {
        scripts.push_back(builtin_scenario(a.scenario));
    }
    for (const auto& s : scripts) {
        apply_overrides(s, opt);
    }

    std::vector<ScenarioReport> reports(scripts.size());
    if (scripts.size() > 1) {
        std::vector<std::thread> workers;
        std::vector<std::exception_ptr> errors(scripts.size());
        for (std::size_t i = 0; i < scripts.size(); ++i) {
            workers.emplace_back([&, i] {
                try {
                    reports[i] = run_scenario(scripts[i], a.seed, opt);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
        }
        for (auto& w : workers) {
            w.join();
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    } else {
        reports[0] = run_scenario(scripts[0], a.seed, opt);
    }

    bool flagged = false;
    for (const auto& r : reports) {
        const fs::path dir = a.all ? fs::path(a.out) / r.name : fs::path(a.out);
        write_report_files(r, dir);
        std::cout << summary(r) << " -> " << dir.string() << '\n';
        if (a.verbose) {
            std::cout << verdict_log(r);
        }
        const auto& c = r.counters;
        flagged = flagged || c.blocked + c.warned + c.resets > 0;
    }
    return a.strict && flagged ? kExitFlagged : kExitOk;
}

int static_command(const StaticArgs& a)
{
    const RuleSet runtime = rules_from(a.rules);
    TherapyConfig therapy;
    if (!a.therapy.empty()) {
        therapy = load_therapy(a.therapy);
    }
    std::vector<std::string> variants;
    if (a.firmware == "all") {
        variants = firmware_variants();
    } else {
        variants.push_back(a.firmware);
    }
    const auto catalog = static_catalog(therapy.alarms, therapy.params, runtime);
    for (const auto& name : variants) {
        const auto decide = firmware_variant(name, therapy.alarms, therapy.params);
        std::cout << "firmware: " << name << '\n';
        std::cout << format_static_report(check_static(catalog, decide, StaticDomain{}, a.budget));
        if (variants.size() > 1) {
            std::cout << '\n';
        }
    }
    return kExitOk;
}

int list_command()
{
    for (const auto& s : builtin_scenarios()) {
        std::cout << fmt::format("{:<4} {:>5g} min  {}\n", s.name, s.duration_min, s.description);
    }
    return kExitOk;
}

int dump_command(const std::string& out)
{
    const std::string patient = to_json(PatientParams{}).dump(2) + "\n";
    const std::string therapy = to_json(TherapyConfig{}).dump(2) + "\n";
    const std::string rules = format_rules(default_rules());
    if (out.empty()) {
        std::cout << "# patient.json\n" << patient << "\n# therapy.json\n" << therapy << "\n# rules.txt\n" << rules;
        return kExitOk;
    }
    fs::create_directories(out);
    for (const auto& [name, text] : {std::pair{"patient.json", patient}, {"therapy.json", therapy}, {"rules.txt", rules}}) {
        std::ofstream f(fs::path(out) / name, std::ios::binary);
        if (!f) {
            throw ConfigFileError(fmt::format("cannot write {}", (fs::path(out) / name).string()));
        }
        f << text;
    }
    std::cout << "wrote patient.json, therapy.json, rules.txt to " << out << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Artificial pancreas safety-coprocessor simulator"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run a scenario and write verdicts.log, bg_trace.csv, report.json");
    auto* source = run_cmd->add_option_group("source");
    source->add_option("--scenario", run.scenario, "Builtin scenario name (see list-scenarios)");
    source->add_option("--script", run.script, "Scenario script file")->check(CLI::ExistingFile);
    source->add_flag("--all", run.all, "Run every builtin scenario into <out>/<name>/");
    source->require_option(1);
    run_cmd->add_option("--seed", run.seed, "CGM noise seed")->capture_default_str();
    run_cmd->add_option("--out", run.out, "Output directory")->capture_default_str();
    run_cmd->add_option("--patient", run.patient, "Patient parameter JSON")->check(CLI::ExistingFile);
    run_cmd->add_option("--therapy", run.therapy, "Therapy parameter JSON")->check(CLI::ExistingFile);
    run_cmd->add_option("--rules", run.rules, "Rule-set file")->check(CLI::ExistingFile);
    run_cmd->add_flag("--strict", run.strict, "Exit 1 if any BLOCK, WARN or RESET_MAIN occurred");
    run_cmd->add_flag("-v,--verbose", run.verbose, "Print the verdict log");

    StaticArgs stat;
    auto* static_cmd = app.add_subcommand("static-check", "Exhaustively validate the firmware alarm rules");
    static_cmd->add_option("--rules", stat.rules, "'default' or a rule-set file")->capture_default_str();
    static_cmd->add_option("--therapy", stat.therapy, "Therapy parameter JSON")->check(CLI::ExistingFile);
    static_cmd->add_option("--firmware", stat.firmware, "reference, a mutant name, or all")->capture_default_str();
    static_cmd->add_option("--budget", stat.budget, "Evaluations per rule before TIMEOUT (0 = none)")
        ->check(CLI::NonNegativeNumber);

    auto* list_cmd = app.add_subcommand("list-scenarios", "List the builtin scenarios");

    std::string dump_out;
    auto* dump_cmd = app.add_subcommand("dump-config", "Print or write the default configuration files");
    dump_cmd->add_option("--out", dump_out, "Directory to write patient.json, therapy.json and rules.txt");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run_cmd->parsed()) {
            return run_command(run);
        }
        if (static_cmd->parsed()) {
            if (stat.rules != "default" && !fs::exists(stat.rules)) {
                std::cerr << "rules file not found: " << stat.rules << '\n';
                return kExitConfig;
            }
            return static_command(stat);
        }
        if (list_cmd->parsed()) {
            return list_command();
        }
        if (dump_cmd->parsed()) {
            return dump_command(dump_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        const bool bad_input = dynamic_cast<const ScriptError*>(&e) || dynamic_cast<const ConfigFileError*>(&e) ||
                               dynamic_cast<const RuleError*>(&e) || dynamic_cast<const ConfigError*>(&e);
        return bad_input ? kExitConfig : kExitRuntime;
    }
    return kExitConfig;
}
