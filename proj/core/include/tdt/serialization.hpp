#pragma once

// JSON and CSV formats for every exchanged artifact. Parsers throw
// SchemaError carrying the path of the offending field ("patient.k_p_l",
// "layers[1].w[3][0]", "line 12").

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdt/dosimetry.hpp"
#include "tdt/dss.hpp"
#include "tdt/evalmetrics.hpp"
#include "tdt/pbpk.hpp"
#include "tdt/surrogate.hpp"

namespace tdt::io {

using nlohmann::json;

/// Serialized form used for files and HTTP bodies: 2-space indented,
/// shortest round-trip doubles, keys in sorted order.
std::string dump(const json& j);
/// Parses text, reporting syntax errors as SchemaError at `path`.
json parse(const std::string& text, const std::string& path = "");
json read_json_file(const std::string& file);
void write_text_file(const std::string& file, const std::string& contents);
std::string read_text_file(const std::string& file);

// -- pbpk -------------------------------------------------------------------
json to_json(const pbpk::PatientParams& p);
pbpk::PatientParams patient_from_json(const json& j, const std::string& path = "");

json to_json(const pbpk::State& c);
pbpk::State state_from_json(const json& j, const std::string& path = "");

json to_json(const pbpk::ParamSpread& s);
/// Missing keys mean no variability; "volumes"/"masses" accept a scalar or
/// an array.
pbpk::ParamSpread spread_from_json(const json& j, const std::string& path = "");

json to_json(const pbpk::CohortSpec& c);
/// "base" defaults to the reference patient.
pbpk::CohortSpec cohort_from_json(const json& j, const std::string& path = "");

json to_json(const pbpk::Trajectory& t);
pbpk::Trajectory trajectory_from_json(const json& j, const std::string& path = "");
pbpk::Method method_from_string(const std::string& s, const std::string& path = "");

/// Header `time_h,plasma,liver,kidney,tumor`, 17 significant digits.
void write_trajectory_csv(std::ostream& os, const pbpk::Trajectory& t);
pbpk::Trajectory read_trajectory_csv(std::istream& is);

// -- dosimetry --------------------------------------------------------------
json to_json(const dosimetry::DoseReport& r);
dosimetry::DoseReport dose_report_from_json(const json& j, const std::string& path = "");
dosimetry::Tail tail_from_string(const std::string& s, const std::string& path = "");

// -- surrogate --------------------------------------------------------------
json to_json(const surrogate::SurrogateParams& p);
surrogate::SurrogateParams surrogate_from_json(const json& j, const std::string& path = "");

json to_json(const surrogate::TrainReport& r);
/// Header `iter,loss`; iterations are 1-based.
void write_loss_history_csv(std::ostream& os, const surrogate::TrainReport& r);

/// Everything needed to run one training: patient, initial state, dose and
/// optimizer settings.
struct TrainingJob {
  pbpk::PatientParams patient;
  pbpk::State initial{};
  double total_dose = 0.0;
  surrogate::TrainConfig config;
};
json to_json(const TrainingJob& job);
/// Collocation points come from "t_batch" or from "horizon_h" plus
/// "collocation_points" (default 256). "initial" defaults to the whole dose
/// in plasma.
TrainingJob training_job_from_json(const json& j, const std::string& path = "");

// -- dss --------------------------------------------------------------------
json to_json(const dss::RewardConfig& r);
dss::RewardConfig reward_from_json(const json& j, const std::string& path = "");

json to_json(const dss::MdpSpec& s);
/// Every key is optional and falls back to the defaults of MdpSpec.
dss::MdpSpec mdp_spec_from_json(const json& j, const std::string& path = "");

/// MDP configuration document: the spec plus an optional "patient".
struct MdpConfig {
  pbpk::PatientParams patient = pbpk::reference_patient();
  dss::MdpSpec spec;
};
MdpConfig mdp_config_from_json(const json& j, const std::string& path = "");

/// `{"actions":[...],"v":[...],"q":[[...]]}` with action indices.
json to_json(const dss::Policy& p);
dss::Policy policy_from_json(const json& j, const std::string& path = "");

json to_json(const dss::Recommendation& r, const dss::MdpSpec& spec);

/// Header `cycle,state,action_mbq,reward,tumor_gy,kidney_gy,liver_gy`; one
/// row per treated cycle, episodes concatenated in cohort order.
void write_episodes_csv(std::ostream& os, const std::vector<dss::Episode>& episodes);

// -- evalmetrics ------------------------------------------------------------
/// Header `tau,point,lo,hi`.
void write_profile_csv(std::ostream& os, const std::vector<evalmetrics::ProfilePoint>& profile);
json to_json(const std::vector<evalmetrics::ProfilePoint>& profile);

/// Formats a double with 17 significant digits.
std::string format_double(double x);

}  // namespace tdt::io
