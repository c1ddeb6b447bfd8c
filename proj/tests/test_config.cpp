#include "apsim/config.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace apsim;

TEST(Config, PatientRoundTrip)
{
    PatientParams p;
    p.body_weight_kg = 64.0;
    p.noise_sd = 1.5;
    const PatientParams back = patient_from_json(to_json(p));
    EXPECT_EQ(back.body_weight_kg, 64.0);
    EXPECT_EQ(back.noise_sd, 1.5);
    EXPECT_EQ(back.egp_mg_per_kg_min, p.egp_mg_per_kg_min);
}

TEST(Config, AbsentFieldsKeepDefaults)
{
    const PatientParams p = patient_from_json(nlohmann::json::parse(R"({"equilibrium_bg": 95})"));
    EXPECT_EQ(p.equilibrium_bg, 95.0);
    EXPECT_EQ(p.body_weight_kg, PatientParams{}.body_weight_kg);
}

TEST(Config, UnknownOrInvalidFieldsRejected)
{
    EXPECT_THROW(patient_from_json(nlohmann::json::parse(R"({"body_weigth_kg": 70})")), ConfigFileError);
    EXPECT_THROW(patient_from_json(nlohmann::json::parse(R"({"body_weight_kg": "heavy"})")), ConfigFileError);
    EXPECT_THROW(patient_from_json(nlohmann::json::parse(R"({"body_weight_kg": -1})")), ConfigFileError);
    EXPECT_THROW(patient_from_json(nlohmann::json::parse("[1, 2]")), ConfigFileError);
    EXPECT_THROW(therapy_from_json(nlohmann::json::parse(R"({"max_bolus": 99})")), ConfigFileError);
}

TEST(Config, TherapyRoundTrip)
{
    TherapyConfig t;
    t.params.carb_ratio = 12.0;
    t.alarms.critical_hi = 250.0;
    t.params.heartbeat_period = SimDuration{30'000};
    const TherapyConfig back = therapy_from_json(to_json(t));
    EXPECT_EQ(back.params.carb_ratio, 12.0);
    EXPECT_EQ(back.alarms.critical_hi, 250.0);
    EXPECT_EQ(back.params.heartbeat_period, SimDuration{30'000});
}

TEST(Config, FieldSetters)
{
    PatientParams p;
    set_patient_field(p, "basal_u_per_h", 1.2);
    EXPECT_EQ(p.basal_u_per_h, 1.2);
    EXPECT_THROW(set_patient_field(p, "wings", 2.0), ConfigFileError);
    TherapyConfig t;
    set_therapy_field(t, "critical_lo_bg", 70.0);
    EXPECT_EQ(t.alarms.critical_lo, 70.0);
    EXPECT_THROW(set_therapy_field(t, "wings", 2.0), ConfigFileError);
    EXPECT_FALSE(patient_fields().empty());
    EXPECT_FALSE(therapy_fields().empty());
}

TEST(Config, LoadFromFile)
{
    const auto path = std::filesystem::temp_directory_path() / "apsim_patient_test.json";
    {
        std::ofstream f(path);
        f << R"({"body_weight_kg": 70, "noise_sd": 0})";
    }
    EXPECT_EQ(load_patient(path.string()).body_weight_kg, 70.0);
    {
        std::ofstream f(path);
        f << "{ not json";
    }
    EXPECT_THROW(load_patient(path.string()), ConfigFileError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_patient(path.string()), ConfigFileError);
}
