#include "apsim/static_check.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace apsim {

const char* to_string(StaticStatus s)
{
    switch (s) {
    case StaticStatus::Valid: return "VALID";
    case StaticStatus::Unknown: return "UNKNOWN";
    case StaticStatus::Timeout: return "TIMEOUT";
    }
    return "?";
}

const StaticResult* StaticReport::find(const std::string& id) const
{
    for (const auto& r : results) {
        if (r.id == id) {
            return &r;
        }
    }
    return nullptr;
}

std::vector<StaticRule> firmware_rules(const AlarmThresholds& thresholds, const TherapyParams& therapy)
{
    const double lo = thresholds.critical_lo;
    const double hi = thresholds.critical_hi;
    const double max_bolus = therapy.max_bolus;
    return {
        {"fw-bg-below-zero", "raise the error message if the measured BG level is below zero",
         [](double bg, const AlarmOutputs& o) { return !(bg < 0.0) || o.error_raised; }, {}},
        {"fw-bg-very-high", fmt::format("warn 'BG LEVEL VERY HIGH' above {:g} mg/dL", hi),
         [hi](double bg, const AlarmOutputs& o) { return !(bg > hi) || o.warn_high; }, {}},
        {"fw-bg-very-low", fmt::format("warn 'BG LEVEL VERY LOW' below {:g} mg/dL", lo),
         [lo](double bg, const AlarmOutputs& o) { return !(bg < lo) || o.warn_low; }, {}},
        {"fw-dose-bounds", fmt::format("computed dose stays within 0..{:g} U", max_bolus),
         [max_bolus](double, const AlarmOutputs& o) {
             return std::isfinite(o.computed_dose) && o.computed_dose >= 0.0 && o.computed_dose <= max_bolus;
         },
         {}},
    };
}

std::vector<StaticRule> static_catalog(const AlarmThresholds& thresholds, const TherapyParams& therapy,
                                       const RuleSet& runtime_rules)
{
    auto rules = firmware_rules(thresholds, therapy);
    for (const auto& r : runtime_rules.rules) {
        std::string context;
        switch (rule_category(r)) {
        case RuleCategory::IoAccess: context = "needs the runtime program state and access history"; break;
        case RuleCategory::StateTransition: context = "needs the runtime sequence of program states"; break;
        case RuleCategory::Physiological: context = "needs the runtime dose history and BG samples"; break;
        case RuleCategory::TimeTriggered: context = "needs elapsed runtime between observations"; break;
        case RuleCategory::Protocol: context = "needs live IMC traffic"; break;
        }
        rules.push_back({rule_id(r), fmt::format("{} rule", to_string(rule_category(r))), {}, context});
    }
    return rules;
}

StaticReport check_static(const std::vector<StaticRule>& rules, const DecisionFn& decide,
                          const StaticDomain& domain, std::int64_t budget)
{
    if (domain.size() == 0) {
        throw ConfigError("static check domain is empty");
    }
    // Decision outputs do not depend on the rule, so evaluate them once.
    std::vector<AlarmOutputs> outputs;
    outputs.reserve(static_cast<std::size_t>(domain.size()));
    for (auto d = domain.lo_deci; d <= domain.hi_deci; ++d) {
        outputs.push_back(decide(StaticDomain::bg_at(d)));
    }

    StaticReport report;
    for (const auto& rule : rules) {
        StaticResult r;
        r.id = rule.id;
        if (!rule.holds) {
            r.status = StaticStatus::Unknown;
            r.reason = rule.runtime_context.empty() ? "needs runtime context" : rule.runtime_context;
            report.results.push_back(r);
            continue;
        }
        for (auto d = domain.lo_deci; d <= domain.hi_deci; ++d) {
            if (budget > 0 && r.evaluated >= budget) {
                r.status = StaticStatus::Timeout;
                break;
            }
            ++r.evaluated;
            const double bg = StaticDomain::bg_at(d);
            if (!rule.holds(bg, outputs[static_cast<std::size_t>(d - domain.lo_deci)])) {
                r.status = StaticStatus::Unknown;
                r.counterexample = bg;
                break;
            }
        }
        report.results.push_back(r);
    }
    return report;
}

DecisionFn reference_firmware(const AlarmThresholds& thresholds, const TherapyParams& therapy)
{
    return [thresholds, therapy](double bg) { return evaluate_alarms(bg, thresholds, therapy); };
}

std::vector<std::string> firmware_variants()
{
    return {"reference", "mutant-error-threshold", "mutant-high-threshold", "mutant-low-threshold",
            "mutant-10bit-wrap"};
}

DecisionFn firmware_variant(const std::string& name, const AlarmThresholds& thresholds,
                            const TherapyParams& therapy)
{
    if (name == "reference") {
        return reference_firmware(thresholds, therapy);
    }
    if (name == "mutant-error-threshold") {
        return [thresholds, therapy](double bg) {
            AlarmOutputs o = evaluate_alarms(bg, thresholds, therapy);
            o.error_raised = bg < -1.0;
            return o;
        };
    }
    if (name == "mutant-high-threshold") {
        return [thresholds, therapy](double bg) {
            AlarmOutputs o = evaluate_alarms(bg, thresholds, therapy);
            o.warn_high = bg > thresholds.critical_hi + 20.0;
            return o;
        };
    }
    if (name == "mutant-low-threshold") {
        return [thresholds, therapy](double bg) {
            AlarmOutputs o = evaluate_alarms(bg, thresholds, therapy);
            o.warn_low = bg < thresholds.critical_lo - 10.0;
            return o;
        };
    }
    if (name == "mutant-10bit-wrap") {
        // reading stored in a 10-bit register: 1024 mg/dL and above wraps to low values
        return [thresholds, therapy](double bg) {
            const double stored = bg >= 0.0 ? std::fmod(bg, 1024.0) : bg;
            return evaluate_alarms(stored, thresholds, therapy);
        };
    }
    std::string known;
    for (const auto& v : firmware_variants()) {
        known += (known.empty() ? "" : ", ") + v;
    }
    throw ConfigError(fmt::format("unknown firmware variant '{}' (known: {})", name, known));
}

std::string format_static_report(const StaticReport& report)
{
    std::size_t width = 4;
    for (const auto& r : report.results) {
        width = std::max(width, r.id.size());
    }
    std::string out = fmt::format("{:<{}}  {:<7}  {:<7}  {:<7}  {}\n", "rule", width, "Valid", "Unknown", "Timeout",
                                  "detail");
    int valid = 0;
    int unknown = 0;
    int timeout = 0;
    for (const auto& r : report.results) {
        std::string detail;
        if (r.counterexample) {
            detail = fmt::format("counterexample bg={:.1f} mg/dL", *r.counterexample);
        } else if (r.status == StaticStatus::Unknown) {
            detail = "undecidable: " + r.reason;
        } else {
            detail = fmt::format("{} points evaluated", r.evaluated);
        }
        const auto mark = [&](StaticStatus s) { return r.status == s ? "x" : ""; };
        out += fmt::format("{:<{}}  {:<7}  {:<7}  {:<7}  {}\n", r.id, width, mark(StaticStatus::Valid),
                           mark(StaticStatus::Unknown), mark(StaticStatus::Timeout), detail);
        valid += r.status == StaticStatus::Valid;
        unknown += r.status == StaticStatus::Unknown;
        timeout += r.status == StaticStatus::Timeout;
    }
    out += fmt::format("{:<{}}  {:<7}  {:<7}  {:<7}\n", "total", width, valid, unknown, timeout);
    return out;
}

}  // namespace apsim
