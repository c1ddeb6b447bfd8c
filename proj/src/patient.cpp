#include "apsim/patient.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace apsim {

namespace {

void require_positive(double v, const char* name)
{
    if (!std::isfinite(v) || v <= 0.0) {
        throw std::invalid_argument(std::string("patient parameter ") + name + " must be positive and finite");
    }
}

void require_admissible(double v, const char* name)
{
    if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument(std::string(name) + " must be finite and non-negative");
    }
}

using Vec = std::array<double, 5>;  // Q, S1, S2, I, G

struct Rates {
    double k_abs, k_sc, k_clr, v_i, f_ra, egp, s_i;
};

Vec derivative(const Vec& x, const Rates& r, double infusion)
{
    const auto [q, s1, s2, i, g] = x;
    return {
        -r.k_abs * q,
        infusion - r.k_sc * s1,
        r.k_sc * (s1 - s2),
        r.k_sc * s2 / r.v_i - r.k_clr * i,
        r.egp + r.f_ra * r.k_abs * q - r.s_i * i * g,
    };
}

Vec axpy(const Vec& x, double h, const Vec& k)
{
    Vec out{};
    for (std::size_t n = 0; n < x.size(); ++n) {
        out[n] = x[n] + h * k[n];
    }
    return out;
}

}  // namespace

void PatientParams::validate() const
{
    require_positive(body_weight_kg, "body_weight_kg");
    require_positive(egp_mg_per_kg_min, "egp_mg_per_kg_min");
    require_positive(glucose_volume_dl_per_kg, "glucose_volume_dl_per_kg");
    require_positive(insulin_volume_l_per_kg, "insulin_volume_l_per_kg");
    require_positive(carb_absorption_per_min, "carb_absorption_per_min");
    require_positive(insulin_clearance_per_min, "insulin_clearance_per_min");
    require_positive(sc_absorption_per_min, "sc_absorption_per_min");
    require_positive(carb_bioavailability, "carb_bioavailability");
    require_positive(equilibrium_bg, "equilibrium_bg");
    require_positive(basal_u_per_h, "basal_u_per_h");
    require_admissible(noise_sd, "noise_sd");
}

double PatientParams::equilibrium_insulin() const
{
    return (basal_u_per_h / 60.0) / (insulin_clearance_per_min * insulin_volume_l());
}

double PatientParams::insulin_sensitivity() const
{
    return egp_net() / (equilibrium_insulin() * equilibrium_bg);
}

PatientState equilibrium_state(const PatientParams& params)
{
    params.validate();
    const double u = params.basal_u_per_h / 60.0;
    PatientState s;
    s.bg = params.equilibrium_bg;
    s.gut_carbs = 0.0;
    s.sc_insulin_1 = u / params.sc_absorption_per_min;
    s.sc_insulin_2 = s.sc_insulin_1;
    s.plasma_insulin = params.equilibrium_insulin();
    return s;
}

PatientState step(const PatientState& state, const PatientParams& params, double dt_min,
                  double insulin_in_u, double carbs_in_g)
{
    if (!std::isfinite(dt_min) || dt_min <= 0.0) {
        throw std::invalid_argument("patient step dt must be positive and finite");
    }
    require_admissible(insulin_in_u, "insulin_in");
    require_admissible(carbs_in_g, "carbs_in");

    const Rates r{
        params.carb_absorption_per_min,
        params.sc_absorption_per_min,
        params.insulin_clearance_per_min,
        params.insulin_volume_l(),
        params.carb_bioavailability * 1000.0 / params.glucose_volume_dl(),
        params.egp_net(),
        params.insulin_sensitivity(),
    };
    const double infusion = insulin_in_u / dt_min;

    const Vec x{state.gut_carbs + carbs_in_g, state.sc_insulin_1, state.sc_insulin_2,
                state.plasma_insulin, state.bg};
    const Vec k1 = derivative(x, r, infusion);
    const Vec k2 = derivative(axpy(x, dt_min / 2, k1), r, infusion);
    const Vec k3 = derivative(axpy(x, dt_min / 2, k2), r, infusion);
    const Vec k4 = derivative(axpy(x, dt_min, k3), r, infusion);

    Vec next{};
    for (std::size_t n = 0; n < x.size(); ++n) {
        next[n] = std::max(0.0, x[n] + dt_min / 6.0 * (k1[n] + 2 * k2[n] + 2 * k3[n] + k4[n]));
    }

    PatientState out;
    out.gut_carbs = next[0];
    out.sc_insulin_1 = next[1];
    out.sc_insulin_2 = next[2];
    out.plasma_insulin = next[3];
    out.bg = next[4];
    out.time = state.time + from_minutes(dt_min);
    return out;
}

double cgm_reading(double true_bg, double noise_draw) { return std::max(0.0, true_bg + noise_draw); }

double standard_normal(std::mt19937_64& rng)
{
    constexpr double scale = 0x1.0p-53;
    // u1 in (0, 1] so the log is finite
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * scale;
    const double u2 = static_cast<double>(rng() >> 11) * scale;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CgmSample sample_cgm(const PatientState& state, double noise_sd, std::mt19937_64& rng)
{
    require_admissible(noise_sd, "noise_sd");
    const double draw = noise_sd > 0.0 ? noise_sd * standard_normal(rng) : 0.0;
    return CgmSample{cgm_reading(state.bg, draw), state.time, noise_sd};
}

CgmSample sample_cgm(const PatientState& state, double noise_sd, std::uint64_t rng_seed)
{
    std::mt19937_64 rng(rng_seed);
    return sample_cgm(state, noise_sd, rng);
}

}  // namespace apsim
