// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "apsim/harness.hpp"
#include "apsim/patient.hpp"
#include "apsim/static_check.hpp"

#include "fuzz.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>

using namespace apsim;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

const Verdict* first_verdict(const ScenarioReport& r, const std::string& rule, Decision d)
{
    for (const auto& v : r.verdicts) {
        if (v.rule_id == rule && v.decision == d) {
            return &v;
        }
    }
    return nullptr;
}

std::vector<const Verdict*> verdicts_for(const ScenarioReport& r, const std::string& rule)
{
    std::vector<const Verdict*> out;
    for (const auto& v : r.verdicts) {
        if (v.rule_id == rule) {
            out.push_back(&v);
        }
    }
    return out;
}

std::optional<SimTime> bolus_allowed_at(const ScenarioReport& r)
{
    for (const auto& v : r.verdicts) {
        if (v.decision == Decision::Allow && v.command && v.command->mode == InfusionMode::Bolus) {
            return v.at;
        }
    }
    return std::nullopt;
}

Outcome recurring_bolus()
{
    const auto start = std::chrono::steady_clock::now();
    const auto r = run_scenario(builtin_scenario("S1"), 1);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::vector<const Verdict*> bolus;
    for (const auto& v : r.verdicts) {
        if (v.command && v.command->mode == InfusionMode::Bolus &&
            (v.decision == Decision::Allow || v.decision == Decision::Block)) {
            bolus.push_back(&v);
        }
    }
    if (bolus.size() != 4) {
        return fail(fmt::format("{} bolus verdicts, expected 4", bolus.size()));
    }
    std::string seq;
    for (const auto* v : bolus) {
        seq += fmt::format("{}{}", seq.empty() ? "" : ",", to_string(v->decision));
    }
    if (bolus[0]->decision != Decision::Allow) {
        return fail("first request not allowed: " + seq);
    }
    for (int i = 1; i < 4; ++i) {
        if (bolus[i]->decision != Decision::Block || bolus[i]->rule_id != "min-bolus-interval") {
            return fail(fmt::format("request {} got {} by {}", i + 1, to_string(bolus[i]->decision), bolus[i]->rule_id));
        }
    }
    const double span = to_minutes(bolus[3]->at - bolus[0]->at);
    if (span > 10.0) {
        return fail(fmt::format("requests spread over {:.1f} min", span));
    }
    if (secs >= 5.0) {
        return fail(fmt::format("runtime {:.2f} s", secs));
    }
    return {true, fmt::format("{} over {:.1f} min, min-bolus-interval, {:.3f} s", seq, span, secs)};
}

Outcome bolus_without_meal()
{
    const auto& script = builtin_scenario("S2");
    const auto r = run_scenario(script, 1);
    const auto bolus_at = bolus_allowed_at(r);
    if (!bolus_at) {
        return fail("bolus was not allowed");
    }
    double at_infusion = 0.0;
    std::vector<BgObservation> after;
    for (const auto& s : r.coprocessor_bg) {
        if (s.at <= *bolus_at) {
            at_infusion = s.bg;
        } else {
            after.push_back(s);
        }
    }
    if (std::abs(at_infusion - 95.0) > 3.0) {
        return fail(fmt::format("bg at infusion {:.1f}", at_infusion));
    }
    // oracle: first sample more than 10 below, then one WARN per sample until a rise
    std::set<std::int64_t> expected;
    bool warning = false;
    double last = at_infusion;
    for (const auto& s : after) {
        if (warning) {
            if (s.bg > last) {
                break;
            }
            expected.insert(ticks(s.at));
        } else if (s.bg < at_infusion - 10.0) {
            warning = true;
            expected.insert(ticks(s.at));
        }
        last = s.bg;
    }
    std::set<std::int64_t> got;
    for (const auto* v : verdicts_for(r, "expect-bg-rise-after-bolus")) {
        got.insert(ticks(v->at));
    }
    if (expected.empty()) {
        return fail("bg never fell 10 mg/dL below the infusion value");
    }
    if (got != expected) {
        return fail(fmt::format("{} WARNs, oracle expects {}", got.size(), expected.size()));
    }
    if (r.counters.warned != static_cast<int>(got.size())) {
        return fail(fmt::format("{} unrelated WARNs", r.counters.warned - static_cast<int>(got.size())));
    }

    int meal_runs = 0;
    for (double meal_at : {2.0, 10.0, 20.0, 32.0}) {  // bolus requested at 2 min; meals up to 30 min later
        for (std::uint64_t seed : {1, 2, 3}) {
            ScenarioScript fed = script;
            fed.actions.push_back({meal_at, Meal{45.0}});
            const auto m = run_scenario(fed, seed);
            if (m.counters.warned != 0) {
                return fail(fmt::format("{} WARNs with a meal at {:g} min (seed {})", m.counters.warned, meal_at, seed));
            }
            ++meal_runs;
        }
    }
    return {true, fmt::format("bg {:.1f} at bolus, first WARN at {:.0f} min after, {} WARNs until rise; 0 WARNs in {} fed runs",
                              at_infusion, to_minutes(SimDuration{*expected.begin()} - bolus_at->time_since_epoch()),
                              got.size(), meal_runs)};
}

Outcome meal_without_bolus()
{
    const auto r = run_scenario(builtin_scenario("S3"), 1);
    const auto bolus_at = bolus_allowed_at(r);
    if (!bolus_at) {
        return fail("correction bolus was not allowed");
    }
    const auto warns = verdicts_for(r, "warn-bg-rise-no-bolus");
    if (warns.empty()) {
        return fail("no WARN for the unbolused meal");
    }
    // oracle: first sample whose rise over the 90-min minimum exceeds 10
    std::optional<SimTime> expected_first;
    const auto& bg = r.coprocessor_bg;
    for (std::size_t i = 1; i < bg.size() && !expected_first; ++i) {
        double lowest = bg[i].bg;
        for (std::size_t j = 0; j < i; ++j) {
            if (bg[i].at - bg[j].at <= minutes_ms(90)) {
                lowest = std::min(lowest, bg[j].bg);
            }
        }
        if (bg[i].bg > bg[i - 1].bg && bg[i].bg - lowest > 10.0) {
            expected_first = bg[i].at;
        }
    }
    if (!expected_first || warns.front()->at != *expected_first) {
        return fail("first WARN not at the first sample with a rise above 10 mg/dL");
    }
    for (const auto* w : warns) {
        if (w->at > *bolus_at) {
            return fail(fmt::format("WARN at {:.0f} min after the bolus at {:.0f} min", to_minutes(w->at),
                                    to_minutes(*bolus_at)));
        }
    }
    const double meal_at = to_minutes(r.warmup_end) + 5.0;
    return {true, fmt::format("{} WARNs from {:.0f} min after the meal, none after the bolus at +{:.0f} min",
                              warns.size(), to_minutes(warns.front()->at) - meal_at,
                              to_minutes(*bolus_at) - meal_at)};
}

Outcome exploit()
{
    const auto r = run_scenario(builtin_scenario("S4"), 7);
    std::vector<const Verdict*> blocks;
    for (const auto& v : r.verdicts) {
        if (v.decision == Decision::Block) {
            blocks.push_back(&v);
        }
    }
    if (blocks.size() != 1) {
        return fail(fmt::format("{} BLOCK verdicts", blocks.size()));
    }
    const Verdict& b = *blocks[0];
    if (b.category != RuleCategory::IoAccess || b.tracked_state != ProgramState::RfAccess) {
        return fail(fmt::format("BLOCK by {} ({}) in {}", b.rule_id, to_string(b.category), to_string(b.tracked_state)));
    }
    double from_exploit = 0.0;
    int exploit_cmds = 0;
    for (const auto& c : r.firmware_commands) {
        if (c.redirected) {
            ++exploit_cmds;
            from_exploit += r.delivered_for(c.seq);
        }
    }
    if (exploit_cmds != 1 || b.command->seq != r.firmware_commands.back().seq) {
        // the block must be the exploit's command
        bool matched = false;
        for (const auto& c : r.firmware_commands) {
            matched = matched || (c.redirected && c.seq == b.command->seq);
        }
        if (!matched) {
            return fail("BLOCK is not on the exploit command");
        }
    }
    if (from_exploit != 0.0) {
        return fail(fmt::format("{:.1f} U delivered from the exploit", from_exploit));
    }
    return {true, fmt::format("1 BLOCK by {} (I/O access) in RF_ACCESS, {} pump units requested, 0 U delivered",
                              b.rule_id, b.command->amount)};
}

Outcome watchdog()
{
    const RuleSet rules = default_rules();
    const auto r = run_scenario(builtin_scenario("S5"), 1);
    const Verdict* warn = first_verdict(r, "heartbeat-timeout", Decision::Warn);
    if (!warn) {
        return fail("no watchdog WARN");
    }
    std::optional<SimTime> last;
    for (auto t : r.heartbeats_received) {
        if (t < warn->at) {
            last = t;
        }
    }
    if (!last) {
        return fail("no heartbeat before the WARN");
    }
    const SimTime expected = *last + 3 * rules.config.heartbeat_period;
    const auto error = std::abs((warn->at - expected).count());
    if (error > rules.config.tick_period.count()) {
        return fail(fmt::format("WARN at {} ms, expected {} ms", ticks(warn->at), ticks(expected)));
    }
    return {true, fmt::format("last heartbeat {} ms, WARN {} ms (error {} ms)", ticks(*last), ticks(warn->at), error)};
}

Outcome latency()
{
    const RunOptions opt;
    const SerialChannel channel(opt.baud, opt.bits_per_byte);
    const auto model = channel.latency(opt.frames.actuator_cmd) + opt.rules.config.processing;
    const auto r = run_scenario(builtin_scenario("S1"), 1);
    if (r.actuations.empty()) {
        return fail("no actuations");
    }
    std::int64_t lo = INT64_MAX, hi = INT64_MIN;
    for (const auto& a : r.actuations) {
        for (const auto& c : r.firmware_commands) {
            if (c.seq == a.command.seq) {
                const auto d = (a.at - c.sent_at).count();
                lo = std::min(lo, d);
                hi = std::max(hi, d);
            }
        }
    }
    if (std::abs(model.count() - 253) > 2 || std::abs(lo - 253) > 2 || std::abs(hi - 253) > 2) {
        return fail(fmt::format("model {} ms, observed {}..{} ms", model.count(), lo, hi));
    }
    return {true, fmt::format("model {} ms, observed {}..{} ms over {} commands", model.count(), lo, hi,
                              r.actuations.size())};
}

Outcome static_rules()
{
    const AlarmThresholds alarms;
    const TherapyParams therapy;
    const std::vector<std::string> ids{"fw-bg-below-zero", "fw-bg-very-high", "fw-bg-very-low"};
    const std::vector<std::pair<std::string, std::string>> mutants{{"mutant-error-threshold", "fw-bg-below-zero"},
                                                                   {"mutant-high-threshold", "fw-bg-very-high"},
                                                                   {"mutant-low-threshold", "fw-bg-very-low"}};
    const StaticDomain domain;
    const auto rules = firmware_rules(alarms, therapy);

    // random-sampling oracle evaluates the rule text directly
    auto sampled_failures = [&](const DecisionFn& decide) {
        std::mt19937_64 rng(2718);
        std::uniform_int_distribution<std::int64_t> pick(domain.lo_deci, domain.hi_deci);
        std::set<std::string> failed;
        for (int i = 0; i < 1'000'000; ++i) {
            const double bg = StaticDomain::bg_at(pick(rng));
            const AlarmOutputs o = decide(bg);
            if (bg < 0.0 && !o.error_raised) failed.insert(ids[0]);
            if (bg > alarms.critical_hi && !o.warn_high) failed.insert(ids[1]);
            if (bg < alarms.critical_lo && !o.warn_low) failed.insert(ids[2]);
        }
        return failed;
    };
    auto agrees = [&](const StaticReport& rep, const std::set<std::string>& failed) {
        for (const auto& id : ids) {
            if ((rep.find(id)->status == StaticStatus::Valid) == (failed.count(id) > 0)) {
                return false;
            }
        }
        return true;
    };

    const auto reference = reference_firmware(alarms, therapy);
    const auto ref = check_static(rules, reference, domain);
    for (const auto& id : ids) {
        if (ref.find(id)->status != StaticStatus::Valid) {
            return fail(id + " not VALID on the reference firmware");
        }
    }
    if (!agrees(ref, sampled_failures(reference))) {
        return fail("sampling oracle disagrees on the reference firmware");
    }
    std::string found;
    for (const auto& [name, id] : mutants) {
        const auto decide = firmware_variant(name, alarms, therapy);
        const auto rep = check_static(rules, decide, domain);
        const auto* res = rep.find(id);
        if (res->status != StaticStatus::Unknown || !res->counterexample) {
            return fail(fmt::format("{} not caught on {}", id, name));
        }
        if (!agrees(rep, sampled_failures(decide))) {
            return fail("sampling oracle disagrees on " + name);
        }
        found += fmt::format("{}{}@{:.1f}", found.empty() ? "" : ", ", id, *res->counterexample);
    }
    return {true, "3 VALID on reference; counterexamples " + found + "; 10^6-point oracle agrees"};
}

Outcome interception()
{
    const auto processing = RuleSet{}.config.processing;
    int actuations = 0;
    double insulin = 0.0;
    for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
        const auto script = fuzz::random_script(seed);
        const auto a = run_scenario(script, seed);
        const auto b = run_scenario(script, seed);
        if (const auto why = fuzz::interception_violation(a, processing); !why.empty()) {
            return fail(fmt::format("seed {}: {}", seed, why));
        }
        if (a.negative_compartments != 0) {
            return fail(fmt::format("seed {}: negative compartment", seed));
        }
        if (fuzz::fingerprint(a) != fuzz::fingerprint(b)) {
            return fail(fmt::format("seed {}: runs differ", seed));
        }
        actuations += static_cast<int>(a.actuations.size());
        insulin += a.insulin_delivered_u;
    }
    return {true, fmt::format("1000 runs, {} actuations, {:.1f} U all covered by ALLOW, deterministic", actuations,
                              insulin)};
}

Outcome patient_model()
{
    const PatientParams p;
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int minutes = 360;
    auto simulate = [&](const std::vector<double>& ins, const std::vector<double>& carbs, double dt) {
        PatientState s = equilibrium_state(p);
        std::vector<double> bg;
        const int sub = static_cast<int>(std::lround(1.0 / dt));
        for (int k = 0; k < minutes; ++k) {
            for (int j = 0; j < sub; ++j) {
                s = step(s, p, dt, ins[k] / sub, j == 0 ? carbs[k] : 0.0);
            }
            bg.push_back(s.bg);
        }
        return bg;
    };
    double worst_conv = 0.0;
    for (int run = 0; run < 100; ++run) {
        std::vector<double> ins(minutes, 0.0), carbs(minutes, 0.0);
        for (int k = 0; k < minutes; ++k) {
            if (k % 10 == 0) {
                ins[k] = 0.3 * u(rng);
            }
            if (u(rng) < 0.01) {
                ins[k] += 8.0 * u(rng);
            }
            if (u(rng) < 0.006) {
                carbs[k] = 100.0 * u(rng);
            }
        }
        const auto base = simulate(ins, carbs, 1.0);
        const int t = static_cast<int>(rng() % 200);

        auto more_insulin = ins;
        more_insulin[t] += 0.5 + 5.0 * u(rng);
        const auto with_insulin = simulate(more_insulin, carbs, 1.0);
        auto more_carbs = carbs;
        more_carbs[t] += 5.0 + 80.0 * u(rng);
        const auto with_carbs = simulate(ins, more_carbs, 1.0);
        for (int k = t; k < std::min(minutes, t + 121); ++k) {
            if (with_insulin[k] > base[k] + 1e-9) {
                return fail(fmt::format("run {}: extra insulin raised bg at minute {}", run, k));
            }
            if (with_carbs[k] < base[k] - 1e-9) {
                return fail(fmt::format("run {}: extra carbs lowered bg at minute {}", run, k));
            }
        }
        const auto fine = simulate(ins, carbs, 0.5);
        for (int k = 0; k < minutes; ++k) {
            worst_conv = std::max(worst_conv, std::abs(fine[k] - base[k]));
        }
    }
    if (worst_conv >= 0.5) {
        return fail(fmt::format("halved step moves bg by {:.4f} mg/dL", worst_conv));
    }
    return {true, fmt::format("monotone on 100 trajectories; halved-step difference {:.2e} mg/dL over 6 h", worst_conv)};
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"recurring bolus requests", recurring_bolus},
        {"bolus without meal", bolus_without_meal},
        {"meal without bolus", meal_without_bolus},
        {"buffer overflow exploit", exploit},
        {"main controller hang", watchdog},
        {"allow-path latency", latency},
        {"static rule check", static_rules},
        {"interception completeness", interception},
        {"patient model properties", patient_model},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        failed += !o.pass;
        std::cout << fmt::format("{} criterion {}: {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                                 o.detail)
                  << std::flush;
    }
    std::cout << fmt::format("{}/{} criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
