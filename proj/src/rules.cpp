#include "apsim/rules.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace apsim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = s.find(sep, start);
        const auto piece = s.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        if (!piece.empty()) {
            out.push_back(piece);
        }
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 1;
    }
    return out;
}

std::vector<std::string_view> tokens(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
        }
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
        }
        if (i > start) {
            out.push_back(line.substr(start, i - start));
        }
    }
    return out;
}

class Fields {
public:
    Fields(std::vector<std::string_view> toks, int line) : line_(line)
    {
        for (auto t : toks) {
            const auto eq = t.find('=');
            if (eq == std::string_view::npos || eq == 0) {
                fail(fmt::format("expected key=value, got '{}'", t));
            }
            const std::string key(t.substr(0, eq));
            if (!values_.emplace(key, std::string(t.substr(eq + 1))).second) {
                fail(fmt::format("duplicate key '{}'", key));
            }
        }
    }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw RuleError(fmt::format("rules line {}: {}", line_, what));
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string text(const std::string& key)
    {
        auto it = values_.find(key);
        if (it == values_.end()) {
            fail(fmt::format("missing '{}'", key));
        }
        used_.insert(key);
        return it->second;
    }

    double number(const std::string& key)
    {
        const std::string s = text(key);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
            fail(fmt::format("'{}' is not a number: '{}'", key, s));
        }
        return v;
    }

    int integer(const std::string& key)
    {
        const double v = number(key);
        if (v != std::floor(v) || std::abs(v) > 1e9) {
            fail(fmt::format("'{}' must be an integer", key));
        }
        return static_cast<int>(v);
    }

    ProgramState state(std::string_view name) const
    {
        auto s = parse_program_state(name);
        if (!s) {
            fail(fmt::format("unknown program state '{}'", name));
        }
        return *s;
    }

    void finish() const
    {
        for (const auto& [k, v] : values_) {
            if (!used_.count(k)) {
                fail(fmt::format("unknown key '{}'", k));
            }
        }
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
    int line_;
};

SimDuration minutes_field(Fields& f, const std::string& key) { return from_minutes(f.number(key)); }

IoAccessRule parse_io(Fields& f, std::string id)
{
    IoAccessRule r;
    r.id = std::move(id);
    const std::string dev = f.text("device");
    auto d = parse_device(dev);
    if (!d) {
        f.fail(fmt::format("unknown device '{}'", dev));
    }
    r.device = *d;
    const std::string allowed = f.text("allowed");
    for (auto s : split(allowed, ',')) {
        r.allowed_states.push_back(f.state(s));
    }
    if (f.has("per_entry")) {
        r.max_per_entry = f.integer("per_entry");
    }
    if (f.has("max_count")) {
        r.max_count = f.integer("max_count");
    }
    if (f.has("window_min")) {
        r.window = minutes_field(f, "window_min");
    }
    if (f.has("on_violation")) {
        const std::string s = f.text("on_violation");
        auto dec = parse_decision(s);
        if (!dec || (*dec != Decision::Block && *dec != Decision::Warn)) {
            f.fail("on_violation must be BLOCK or WARN");
        }
        r.on_violation = *dec;
    }
    return r;
}

StateTransitionRule parse_transitions(Fields& f, std::string id)
{
    StateTransitionRule r;
    r.id = std::move(id);
    const std::string edges = f.text("edges");
    for (auto e : split(edges, ',')) {
        const auto gt = e.find('>');
        if (gt == std::string_view::npos) {
            f.fail(fmt::format("edge '{}' is not FROM>TO", e));
        }
        const auto from = e.substr(0, gt);
        Edge edge{std::nullopt, f.state(e.substr(gt + 1))};
        if (from != "*") {
            edge.from = f.state(from);
        }
        r.edges.push_back(edge);
    }
    if (f.has("dwell_ms")) {
        const std::string dwell = f.text("dwell_ms");
        for (auto d : split(dwell, ',')) {
            const auto colon = d.find(':');
            if (colon == std::string_view::npos) {
                f.fail(fmt::format("dwell '{}' is not STATE:ms", d));
            }
            const auto ms_text = d.substr(colon + 1);
            long long ms = 0;
            const auto [ptr, ec] = std::from_chars(ms_text.data(), ms_text.data() + ms_text.size(), ms);
            if (ec != std::errc{} || ptr != ms_text.data() + ms_text.size()) {
                f.fail(fmt::format("dwell '{}' has a bad duration", d));
            }
            r.max_dwell[f.state(d.substr(0, colon))] = SimDuration{ms};
        }
    }
    if (f.has("max_entries")) {
        r.max_entries = f.integer("max_entries");
    }
    if (f.has("window_min")) {
        r.window = minutes_field(f, "window_min");
    }
    return r;
}

PhysiologicalRule parse_physio(Fields& f, std::string id)
{
    PhysiologicalRule r;
    r.id = std::move(id);
    const std::string kind = f.text("kind");
    if (kind == "min_bolus_interval") {
        r.kind = PhysioKind::MinBolusInterval;
        r.limit = f.number("minutes");
    } else if (kind == "max_bolus") {
        r.kind = PhysioKind::MaxBolus;
        r.limit = f.number("units");
    } else if (kind == "max_basal_rate") {
        r.kind = PhysioKind::MaxBasalRate;
        r.limit = f.number("units_per_h");
    } else if (kind == "bg_range") {
        r.kind = PhysioKind::BgRange;
        r.lo = f.number("lo");
        r.hi = f.number("hi");
    } else if (kind == "bg_rate") {
        r.kind = PhysioKind::BgRate;
        r.limit = f.number("mg_dl_per_min");
    } else {
        f.fail(fmt::format("unknown physiological kind '{}'", kind));
    }
    return r;
}

TimeTriggeredRule parse_timed(Fields& f, std::string id)
{
    TimeTriggeredRule r;
    r.id = std::move(id);
    const std::string kind = f.text("kind");
    if (kind == "expect_bg_rise_after_bolus") {
        r.kind = TimedKind::ExpectBgRiseAfterBolus;
        r.threshold = f.number("drop");
        r.window_min = f.number("window_min");
    } else if (kind == "warn_bg_rise_no_bolus") {
        r.kind = TimedKind::WarnBgRiseNoBolus;
        r.threshold = f.number("rise");
        r.window_min = f.number("window_min");
    } else if (kind == "heartbeat_timeout") {
        r.kind = TimedKind::HeartbeatTimeout;
        r.units = f.integer("units");
    } else {
        f.fail(fmt::format("unknown time-triggered kind '{}'", kind));
    }
    return r;
}

void parse_config(Fields& f, CoprocessorConfig& c, std::string_view key)
{
    const std::string k(key);
    if (k == "heartbeat_period_ms") {
        c.heartbeat_period = SimDuration{f.integer(k)};
    } else if (k == "basal_period_min") {
        c.basal_period_min = f.number(k);
    } else if (k == "processing_ms") {
        c.processing = SimDuration{f.integer(k)};
    } else if (k == "tick_period_ms") {
        c.tick_period = SimDuration{f.integer(k)};
    } else if (k == "reset_on_timeout") {
        const std::string v = f.text(k);
        if (v != "true" && v != "false") {
            f.fail("reset_on_timeout must be true or false");
        }
        c.reset_on_timeout = v == "true";
    } else if (k == "emergency_basal_u_per_h") {
        c.emergency_basal_u_per_h = f.number(k);
    } else {
        f.fail(fmt::format("unknown config key '{}'", k));
    }
}

std::string format_minutes(SimDuration d) { return fmt::format("{:g}", to_minutes(d)); }

}  // namespace

const char* to_string(Decision d)
{
    switch (d) {
    case Decision::Allow: return "ALLOW";
    case Decision::Block: return "BLOCK";
    case Decision::Warn: return "WARN";
    case Decision::ResetMain: return "RESET_MAIN";
    }
    return "?";
}

std::optional<Decision> parse_decision(std::string_view s)
{
    for (auto d : {Decision::Allow, Decision::Block, Decision::Warn, Decision::ResetMain}) {
        if (s == to_string(d)) {
            return d;
        }
    }
    return std::nullopt;
}

const char* to_string(RuleCategory c)
{
    switch (c) {
    case RuleCategory::IoAccess: return "io_access";
    case RuleCategory::StateTransition: return "state_transition";
    case RuleCategory::Physiological: return "physiological";
    case RuleCategory::TimeTriggered: return "time_triggered";
    case RuleCategory::Protocol: return "protocol";
    }
    return "?";
}

const char* to_string(PhysioKind k)
{
    switch (k) {
    case PhysioKind::MinBolusInterval: return "min_bolus_interval";
    case PhysioKind::MaxBolus: return "max_bolus";
    case PhysioKind::MaxBasalRate: return "max_basal_rate";
    case PhysioKind::BgRange: return "bg_range";
    case PhysioKind::BgRate: return "bg_rate";
    }
    return "?";
}

const char* to_string(TimedKind k)
{
    switch (k) {
    case TimedKind::ExpectBgRiseAfterBolus: return "expect_bg_rise_after_bolus";
    case TimedKind::WarnBgRiseNoBolus: return "warn_bg_rise_no_bolus";
    case TimedKind::HeartbeatTimeout: return "heartbeat_timeout";
    }
    return "?";
}

bool StateTransitionRule::legal(ProgramState from, ProgramState to) const
{
    return std::any_of(edges.begin(), edges.end(),
                       [&](const Edge& e) { return e.to == to && (!e.from || *e.from == from); });
}

const std::string& rule_id(const SafetyRule& r)
{
    return std::visit([](const auto& x) -> const std::string& { return x.id; }, r);
}

RuleCategory rule_category(const SafetyRule& r)
{
    return std::visit(overloaded{
                          [](const IoAccessRule&) { return RuleCategory::IoAccess; },
                          [](const StateTransitionRule&) { return RuleCategory::StateTransition; },
                          [](const PhysiologicalRule&) { return RuleCategory::Physiological; },
                          [](const TimeTriggeredRule&) { return RuleCategory::TimeTriggered; },
                      },
                      r);
}

void RuleSet::validate() const
{
    std::set<std::string> seen;
    for (const auto& r : rules) {
        const auto& id = rule_id(r);
        if (id.empty()) {
            throw RuleError("rule with empty id");
        }
        if (!seen.insert(id).second) {
            throw RuleError(fmt::format("duplicate rule id '{}'", id));
        }
        const auto bad = [&](const char* what) {
            throw RuleError(fmt::format("rule '{}': {} must be positive", id, what));
        };
        std::visit(overloaded{
                       [&](const IoAccessRule& x) {
                           if (x.allowed_states.empty()) {
                               throw RuleError(fmt::format("rule '{}': no allowed states", id));
                           }
                           if ((x.max_per_entry && *x.max_per_entry <= 0) || x.max_count < 0 ||
                               x.window <= SimDuration::zero()) {
                               bad("access budget");
                           }
                       },
                       [&](const StateTransitionRule& x) {
                           if (x.edges.empty()) {
                               throw RuleError(fmt::format("rule '{}': no edges", id));
                           }
                           for (const auto& [s, d] : x.max_dwell) {
                               if (d <= SimDuration::zero()) {
                                   bad("dwell limit");
                               }
                           }
                           if (x.max_entries < 0 || x.window <= SimDuration::zero()) {
                               bad("entry budget");
                           }
                       },
                       [&](const PhysiologicalRule& x) {
                           if (x.kind == PhysioKind::BgRange) {
                               if (!(x.lo > 0.0 && x.hi > x.lo)) {
                                   throw RuleError(fmt::format("rule '{}': need 0 < lo < hi", id));
                               }
                           } else if (!(x.limit > 0.0)) {
                               bad("limit");
                           }
                       },
                       [&](const TimeTriggeredRule& x) {
                           if (x.kind == TimedKind::HeartbeatTimeout ? x.units <= 0
                                                                     : !(x.threshold > 0.0 && x.window_min > 0.0)) {
                               bad("threshold");
                           }
                       },
                   },
                   r);
    }
    if (config.heartbeat_period <= SimDuration::zero() || config.tick_period <= SimDuration::zero() ||
        !(config.basal_period_min > 0.0) || config.processing < SimDuration::zero() ||
        config.emergency_basal_u_per_h < 0.0) {
        throw RuleError("invalid coprocessor config");
    }
}

std::vector<std::string> RuleSet::ids() const
{
    std::vector<std::string> out;
    for (const auto& r : rules) {
        out.push_back(rule_id(r));
    }
    return out;
}

const SafetyRule* RuleSet::find(std::string_view id) const
{
    for (const auto& r : rules) {
        if (rule_id(r) == id) {
            return &r;
        }
    }
    return nullptr;
}

RuleSet RuleSet::without(std::string_view id) const
{
    RuleSet out{{}, config};
    for (const auto& r : rules) {
        if (rule_id(r) != id) {
            out.rules.push_back(r);
        }
    }
    return out;
}

RuleSet default_rules()
{
    using PS = ProgramState;
    RuleSet set;
    set.rules.push_back(IoAccessRule{"io-pump", Device::Pump, {PS::InfuseInsulin}, 1, 12, minutes_ms(60),
                                     Decision::Block});
    set.rules.push_back(IoAccessRule{"io-rf", Device::Rf, {PS::RfAccess}, std::nullopt, 20, minutes_ms(10),
                                     Decision::Warn});
    StateTransitionRule st;
    st.id = "state-transition";
    st.edges = {
        {PS::Idle, PS::RfAccess},          {PS::Idle, PS::ComputeBasal},        {PS::RfAccess, PS::ComputeBolus},
        {PS::RfAccess, PS::Idle},          {PS::ComputeBasal, PS::InfuseInsulin}, {PS::ComputeBasal, PS::Idle},
        {PS::ComputeBolus, PS::InfuseInsulin}, {PS::InfuseInsulin, PS::Idle},    {std::nullopt, PS::Alert},
        {PS::Alert, PS::Idle},
    };
    st.max_dwell = {
        {PS::RfAccess, SimDuration{2000}},      {PS::ComputeBasal, SimDuration{1000}},
        {PS::ComputeBolus, SimDuration{1000}},  {PS::InfuseInsulin, SimDuration{2000}},
        {PS::Alert, SimDuration{60'000}},
    };
    st.max_entries = 30;
    st.window = minutes_ms(60);
    set.rules.push_back(st);
    set.rules.push_back(PhysiologicalRule{"min-bolus-interval", PhysioKind::MinBolusInterval, 60.0});
    set.rules.push_back(PhysiologicalRule{"max-bolus", PhysioKind::MaxBolus, 15.0});
    set.rules.push_back(PhysiologicalRule{"max-basal-rate", PhysioKind::MaxBasalRate, 4.0});
    set.rules.push_back(PhysiologicalRule{"bg-range", PhysioKind::BgRange, 0.0, 60.0, 300.0});
    set.rules.push_back(PhysiologicalRule{"bg-rate", PhysioKind::BgRate, 6.0});
    set.rules.push_back(TimeTriggeredRule{"expect-bg-rise-after-bolus", TimedKind::ExpectBgRiseAfterBolus, 10.0, 180.0});
    set.rules.push_back(TimeTriggeredRule{"warn-bg-rise-no-bolus", TimedKind::WarnBgRiseNoBolus, 10.0, 90.0});
    set.rules.push_back(TimeTriggeredRule{"heartbeat-timeout", TimedKind::HeartbeatTimeout, 0.0, 0.0, 3});
    return set;
}

RuleSet parse_rules(std::string_view text)
{
    RuleSet set;
    int line_no = 0;
    for (auto raw : split(text, '\n')) {
        ++line_no;
        auto line = raw.substr(0, raw.find('#'));
        auto toks = tokens(line);
        if (toks.empty()) {
            continue;
        }
        const auto directive = toks.front();
        toks.erase(toks.begin());
        Fields f(toks, line_no);
        if (directive == "config") {
            if (toks.size() != 1) {
                f.fail("config takes exactly one key=value");
            }
            const auto key = toks.front().substr(0, toks.front().find('='));
            parse_config(f, set.config, key);
        } else if (directive == "rule") {
            std::string id = f.text("id");
            const std::string category = f.text("category");
            if (category == "io_access") {
                set.rules.push_back(parse_io(f, std::move(id)));
            } else if (category == "state_transition") {
                set.rules.push_back(parse_transitions(f, std::move(id)));
            } else if (category == "physiological") {
                set.rules.push_back(parse_physio(f, std::move(id)));
            } else if (category == "time_triggered") {
                set.rules.push_back(parse_timed(f, std::move(id)));
            } else {
                f.fail(fmt::format("unknown category '{}'", category));
            }
        } else {
            f.fail(fmt::format("unknown directive '{}'", directive));
        }
        f.finish();
    }
    set.validate();
    return set;
}

RuleSet load_rules(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw RuleError("cannot open rules file " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_rules(ss.str());
}

std::string format_rules(const RuleSet& set)
{
    std::string out;
    const auto& c = set.config;
    out += fmt::format("config heartbeat_period_ms={}\n", c.heartbeat_period.count());
    out += fmt::format("config basal_period_min={:g}\n", c.basal_period_min);
    out += fmt::format("config processing_ms={}\n", c.processing.count());
    out += fmt::format("config tick_period_ms={}\n", c.tick_period.count());
    out += fmt::format("config reset_on_timeout={}\n", c.reset_on_timeout ? "true" : "false");
    out += fmt::format("config emergency_basal_u_per_h={:g}\n", c.emergency_basal_u_per_h);
    for (const auto& r : set.rules) {
        out += std::visit(
            overloaded{
                [](const IoAccessRule& x) {
                    std::string states;
                    for (auto s : x.allowed_states) {
                        states += (states.empty() ? "" : ",") + std::string(to_string(s));
                    }
                    std::string s = fmt::format("rule id={} category=io_access device={} allowed={}", x.id,
                                                to_string(x.device), states);
                    if (x.max_per_entry) {
                        s += fmt::format(" per_entry={}", *x.max_per_entry);
                    }
                    return s + fmt::format(" max_count={} window_min={} on_violation={}", x.max_count,
                                           format_minutes(x.window), to_string(x.on_violation));
                },
                [](const StateTransitionRule& x) {
                    std::string edges;
                    for (const auto& e : x.edges) {
                        edges += fmt::format("{}{}>{}", edges.empty() ? "" : ",",
                                             e.from ? to_string(*e.from) : "*", to_string(e.to));
                    }
                    std::string dwell;
                    for (const auto& [st, d] : x.max_dwell) {
                        dwell += fmt::format("{}{}:{}", dwell.empty() ? "" : ",", to_string(st), d.count());
                    }
                    std::string s = fmt::format("rule id={} category=state_transition edges={}", x.id, edges);
                    if (!dwell.empty()) {
                        s += " dwell_ms=" + dwell;
                    }
                    return s + fmt::format(" max_entries={} window_min={}", x.max_entries, format_minutes(x.window));
                },
                [](const PhysiologicalRule& x) {
                    const std::string head = fmt::format("rule id={} category=physiological kind={}", x.id,
                                                         to_string(x.kind));
                    switch (x.kind) {
                    case PhysioKind::MinBolusInterval: return head + fmt::format(" minutes={:g}", x.limit);
                    case PhysioKind::MaxBolus: return head + fmt::format(" units={:g}", x.limit);
                    case PhysioKind::MaxBasalRate: return head + fmt::format(" units_per_h={:g}", x.limit);
                    case PhysioKind::BgRange: return head + fmt::format(" lo={:g} hi={:g}", x.lo, x.hi);
                    case PhysioKind::BgRate: return head + fmt::format(" mg_dl_per_min={:g}", x.limit);
                    }
                    return head;
                },
                [](const TimeTriggeredRule& x) {
                    const std::string head = fmt::format("rule id={} category=time_triggered kind={}", x.id,
                                                         to_string(x.kind));
                    switch (x.kind) {
                    case TimedKind::ExpectBgRiseAfterBolus:
                        return head + fmt::format(" drop={:g} window_min={:g}", x.threshold, x.window_min);
                    case TimedKind::WarnBgRiseNoBolus:
                        return head + fmt::format(" rise={:g} window_min={:g}", x.threshold, x.window_min);
                    case TimedKind::HeartbeatTimeout: return head + fmt::format(" units={}", x.units);
                    }
                    return head;
                },
            },
            r);
        out += '\n';
    }
    return out;
}

}  // namespace apsim
