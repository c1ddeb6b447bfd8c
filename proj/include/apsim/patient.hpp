#pragma once

// Glucose-insulin dynamics of a type 1 diabetic patient, driven by pump
// insulin and meal carbohydrate, observed through a noisy CGM.
//
// Compartments (per minute):
//   gut:    dQ/dt  = -k_abs Q                              (+ meal impulses)
//   sc1:    dS1/dt = u(t) - k_sc S1                        (pump infusion, U/min)
//   sc2:    dS2/dt = k_sc (S1 - S2)
//   plasma: dI/dt  = k_sc S2 / V_I - k_clr I
//   bg:     dG/dt  = EGP_net + f k_abs Q * 1000 / (V_g BW) - S_I I G
//
// EGP_net is the endogenous production spread over the glucose volume and S_I
// is solved so that (G_eq, basal) is a fixed point.

#include "apsim/sim_core.hpp"

#include <cstdint>
#include <random>

namespace apsim {

struct PatientParams {
    double body_weight_kg = 78.0;
    double egp_mg_per_kg_min = 2.40;
    double glucose_volume_dl_per_kg = 3.5;
    double insulin_volume_l_per_kg = 0.05;
    double carb_absorption_per_min = 0.035;
    double insulin_clearance_per_min = 0.02;
    double sc_absorption_per_min = 1.0 / 25.0;
    double carb_bioavailability = 0.7;
    double equilibrium_bg = 110.0;   // mg/dL
    double basal_u_per_h = 1.0;      // infusion that holds equilibrium_bg
    double noise_sd = 0.5;           // CGM noise, mg/dL

    // Throws std::invalid_argument unless every size/rate is positive and finite.
    void validate() const;

    double glucose_volume_dl() const { return glucose_volume_dl_per_kg * body_weight_kg; }
    double insulin_volume_l() const { return insulin_volume_l_per_kg * body_weight_kg; }
    double egp_net() const { return egp_mg_per_kg_min / glucose_volume_dl_per_kg; }  // mg/dL/min
    double equilibrium_insulin() const;                                            // U/L
    double insulin_sensitivity() const;                                            // 1/((U/L) min)
};

struct PatientState {
    double bg = 0.0;              // plasma glucose, mg/dL
    double gut_carbs = 0.0;       // g
    double sc_insulin_1 = 0.0;    // U
    double sc_insulin_2 = 0.0;    // U
    double plasma_insulin = 0.0;  // U/L
    SimTime time{};
};

// Analytic fixed point under a constant infusion of basal_u_per_h.
PatientState equilibrium_state(const PatientParams& params);

// Advances the patient by dt minutes with one RK4 step. carbs_in enters the
// gut at the start of the step; insulin_in is infused at a constant rate over
// the step. Throws std::invalid_argument on non-finite or negative inputs.
PatientState step(const PatientState& state, const PatientParams& params, double dt_min,
                  double insulin_in_u, double carbs_in_g);

struct CgmSample {
    double bg_reading = 0.0;
    SimTime at{};
    double noise_sd = 0.0;
};

// Reading for a given true value and noise draw, clamped at zero.
double cgm_reading(double true_bg, double noise_draw);

// Zero-mean gaussian noise with the given sd; deterministic for a given
// engine state on every platform.
CgmSample sample_cgm(const PatientState& state, double noise_sd, std::mt19937_64& rng);
CgmSample sample_cgm(const PatientState& state, double noise_sd, std::uint64_t rng_seed);

// Standard normal draw via Box-Muller on the raw engine output; the standard
// distributions are implementation-defined and would break cross-platform
// reproducibility.
double standard_normal(std::mt19937_64& rng);

}  // namespace apsim
