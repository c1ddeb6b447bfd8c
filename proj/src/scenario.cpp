#include "apsim/scenario.hpp"

#include "apsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace apsim {

namespace {

struct EmbeddedScript {
    const char* file;
    const char* text;
};

// generated at configure time from scenarios/*.scn
#include "builtin_scenarios.inc"

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::vector<std::string_view> words(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
        }
        const auto start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) {
            ++i;
        }
        if (i > start) {
            out.push_back(line.substr(start, i - start));
        }
    }
    return out;
}

class LineParser {
public:
    explicit LineParser(int line) : line_(line) {}

    [[noreturn]] void fail(const std::string& what) const
    {
        throw ScriptError(fmt::format("script line {}: {}", line_, what));
    }

    double number(std::string_view text) const
    {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
            fail(fmt::format("'{}' is not a number", text));
        }
        return v;
    }

    std::map<std::string, std::string> keyed(const std::vector<std::string_view>& toks, std::size_t from) const
    {
        std::map<std::string, std::string> out;
        for (std::size_t i = from; i < toks.size(); ++i) {
            const auto eq = toks[i].find('=');
            if (eq == std::string_view::npos || eq == 0) {
                fail(fmt::format("expected key=value, got '{}'", toks[i]));
            }
            if (!out.emplace(std::string(toks[i].substr(0, eq)), std::string(toks[i].substr(eq + 1))).second) {
                fail(fmt::format("duplicate key in '{}'", toks[i]));
            }
        }
        return out;
    }

    std::size_t size_value(const std::string& text) const
    {
        const double v = number(text);
        if (v < 0 || v != std::floor(v)) {
            fail(fmt::format("'{}' must be a non-negative integer", text));
        }
        return static_cast<std::size_t>(v);
    }

private:
    int line_;
};

RfPacket parse_packet(const LineParser& p, std::map<std::string, std::string> kv)
{
    RfPacket packet;
    auto take = [&](const char* key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) {
            return std::nullopt;
        }
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    const auto kind = take("kind");
    if (!kind) {
        p.fail("rf_packet needs kind=");
    }
    if (*kind == "bolus_request") {
        packet.kind = RfPacketKind::BolusRequest;
    } else if (*kind == "param_update") {
        packet.kind = RfPacketKind::ParamUpdate;
    } else if (*kind == "exploit") {
        packet.kind = RfPacketKind::Exploit;
        packet.payload_len = 64;
        packet.crafted_target = kExploitPumpWrite;
    } else {
        p.fail(fmt::format("unknown packet kind '{}'", *kind));
    }
    if (auto v = take("carbs")) {
        packet.carbs = p.number(*v);
    }
    if (auto v = take("units")) {
        packet.requested_units = p.number(*v);
    }
    if (auto v = take("payload_len")) {
        packet.payload_len = p.size_value(*v);
    }
    if (auto v = take("target")) {
        packet.crafted_target = *v;
    }
    if (auto v = take("param")) {
        packet.param = *v;
    }
    if (auto v = take("value")) {
        packet.value = p.number(*v);
    }
    if (!kv.empty()) {
        p.fail(fmt::format("unknown rf_packet key '{}'", kv.begin()->first));
    }
    return packet;
}

Frame parse_hex(const LineParser& p, std::string_view hex)
{
    if (hex.empty() || hex.size() % 2 != 0) {
        p.fail("hex= needs an even, non-zero number of digits");
    }
    Frame out;
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        unsigned v = 0;
        const auto [ptr, ec] = std::from_chars(hex.data() + i, hex.data() + i + 2, v, 16);
        if (ec != std::errc{} || ptr != hex.data() + i + 2) {
            p.fail(fmt::format("bad hex byte '{}'", hex.substr(i, 2)));
        }
        out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

ScriptActionKind parse_action(const LineParser& p, const std::vector<std::string_view>& toks)
{
    if (toks.size() < 3) {
        p.fail("'at' needs a time and an action");
    }
    const auto verb = toks[2];
    auto kv = p.keyed(toks, 3);
    if (verb == "rf_packet") {
        return parse_packet(p, std::move(kv));
    }
    if (verb == "meal") {
        if (kv.size() != 1 || !kv.count("grams")) {
            p.fail("meal takes exactly grams=");
        }
        const double g = p.number(kv["grams"]);
        if (g < 0) {
            p.fail("meal grams must be non-negative");
        }
        return Meal{g};
    }
    if (verb == "imc_frame") {
        if (kv.size() != 1 || !kv.count("hex")) {
            p.fail("imc_frame takes exactly hex=");
        }
        return InjectFrame{parse_hex(p, kv["hex"])};
    }
    if (!kv.empty()) {
        p.fail(fmt::format("{} takes no arguments", verb));
    }
    if (verb == "disable_firmware") {
        return DisableFirmware{};
    }
    if (verb == "enable_firmware") {
        return EnableFirmware{};
    }
    p.fail(fmt::format("unknown action '{}'", verb));
}

std::vector<ScenarioScript> parse_builtins()
{
    std::vector<ScenarioScript> out;
    for (const auto& e : kEmbeddedScripts) {
        try {
            out.push_back(parse_script(e.text));
        } catch (const ScriptError& err) {
            throw ScriptError(fmt::format("{}: {}", e.file, err.what()));
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

}  // namespace

void ScenarioScript::validate() const
{
    if (name.empty()) {
        throw ScriptError("script has no name");
    }
    if (!(duration_min > 0.0)) {
        throw ScriptError(fmt::format("{}: duration_min must be positive", name));
    }
    if (warmup_min < 0.0) {
        throw ScriptError(fmt::format("{}: warmup_min must be non-negative", name));
    }
    for (const auto& a : actions) {
        if (a.at_min < 0.0 || a.at_min > duration_min) {
            throw ScriptError(fmt::format("{}: action at {:g} min lies outside [0, {:g}]", name, a.at_min,
                                          duration_min));
        }
    }
}

ScenarioScript parse_script(std::string_view text)
{
    ScenarioScript s;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        std::string_view raw = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
        ++line_no;
        const LineParser p(line_no);
        const auto toks = words(raw.substr(0, raw.find('#')));
        if (toks.empty()) {
            continue;
        }
        const auto head = toks[0];
        if (head == "name") {
            if (toks.size() != 2) {
                p.fail("name takes one word");
            }
            s.name = std::string(toks[1]);
        } else if (head == "description") {
            const auto first = raw.find("description") + std::string_view("description").size();
            auto rest = raw.substr(first);
            const auto b = rest.find_first_not_of(" \t");
            s.description = b == std::string_view::npos ? "" : std::string(rest.substr(b));
        } else if (head == "duration_min" || head == "warmup_min") {
            if (toks.size() != 2) {
                p.fail(fmt::format("{} takes one value", head));
            }
            (head == "duration_min" ? s.duration_min : s.warmup_min) = p.number(toks[1]);
        } else if (head == "set") {
            if (toks.size() != 3) {
                p.fail("set takes <scope.field> <value>");
            }
            const auto target = toks[1];
            const double value = p.number(toks[2]);
            auto checked = [&](const std::vector<std::string>& known) {
                const std::string field(target.substr(8));
                if (std::find(known.begin(), known.end(), field) == known.end()) {
                    p.fail(fmt::format("unknown field '{}'", target));
                }
                return std::pair{field, value};
            };
            if (target.rfind("patient.", 0) == 0) {
                s.patient_overrides.push_back(checked(patient_fields()));
            } else if (target.rfind("therapy.", 0) == 0) {
                s.therapy_overrides.push_back(checked(therapy_fields()));
            } else {
                p.fail(fmt::format("set target '{}' must start with patient. or therapy.", target));
            }
        } else if (head == "at") {
            if (toks.size() < 2) {
                p.fail("'at' needs a time");
            }
            s.actions.push_back({p.number(toks[1]), parse_action(p, toks)});
        } else {
            p.fail(fmt::format("unknown directive '{}'", head));
        }
    }
    s.validate();
    std::stable_sort(s.actions.begin(), s.actions.end(),
                     [](const ScriptAction& a, const ScriptAction& b) { return a.at_min < b.at_min; });
    return s;
}

ScenarioScript load_script(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ScriptError("cannot open script " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_script(ss.str());
}

std::string describe(const ScriptActionKind& a)
{
    return std::visit(
        overloaded{
            [](const RfPacket& p) {
                switch (p.kind) {
                case RfPacketKind::BolusRequest:
                    return p.requested_units ? fmt::format("rf bolus request {:g} U", *p.requested_units)
                                             : fmt::format("rf bolus request carbs={:g} g", p.carbs);
                case RfPacketKind::ParamUpdate:
                    return fmt::format("rf param update {}={:g} ({} bytes)", p.param, p.value, p.payload_len);
                case RfPacketKind::Exploit:
                    return fmt::format("rf crafted packet {} bytes -> {}", p.payload_len, p.crafted_target);
                }
                return std::string("rf packet");
            },
            [](const Meal& m) { return fmt::format("meal {:g} g", m.grams); },
            [](const DisableFirmware&) { return std::string("firmware disabled"); },
            [](const EnableFirmware&) { return std::string("firmware enabled"); },
            [](const InjectFrame& f) { return fmt::format("injected IMC frame ({} bytes)", f.bytes.size()); },
        },
        a);
}

const std::vector<ScenarioScript>& builtin_scenarios()
{
    static const std::vector<ScenarioScript> scripts = parse_builtins();
    return scripts;
}

std::vector<std::string> builtin_scenario_names()
{
    std::vector<std::string> out;
    for (const auto& s : builtin_scenarios()) {
        out.push_back(s.name);
    }
    return out;
}

const ScenarioScript& builtin_scenario(const std::string& name)
{
    for (const auto& s : builtin_scenarios()) {
        if (s.name == name) {
            return s;
        }
    }
    std::string names;
    for (const auto& n : builtin_scenario_names()) {
        names += (names.empty() ? "" : ", ") + n;
    }
    throw ScriptError(fmt::format("unknown scenario '{}' (available: {})", name, names));
}

}  // namespace apsim
