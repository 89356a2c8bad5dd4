#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "tdt/errors.hpp"
#include "tdt/serialization.hpp"

using namespace tdt;
using namespace tdt::io;

namespace {

std::string schema_path(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const SchemaError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("patient round trip and fixture") {
  const auto p = pbpk::reference_patient();
  const json j = to_json(p);
  CHECK(j.contains("units"));
  CHECK(patient_from_json(j) == p);
  CHECK(patient_from_json(parse(dump(j))) == p);
  CHECK(patient_from_json(read_json_file(TDT_TEST_FIXTURES "/reference_patient.json")) == p);
}

TEST_CASE("patient schema errors carry the field path") {
  json j = to_json(pbpk::reference_patient());
  json bad = j;
  bad["k_p_l"] = -0.1;
  CHECK(schema_path([&] { patient_from_json(bad, "patient"); }) == "patient.k_p_l");
  bad = j;
  bad["volumes"][2] = 0.0;
  CHECK(schema_path([&] { patient_from_json(bad); }) == "volumes[2]");
  bad = j;
  bad["s_factors"][1][3] = "x";
  CHECK(schema_path([&] { patient_from_json(bad); }) == "s_factors[1][3]");
  bad = j;
  bad.erase("k_ex");
  CHECK(schema_path([&] { patient_from_json(bad); }) == "k_ex");
  bad = j;
  bad["extra"] = 1;
  CHECK(schema_path([&] { patient_from_json(bad); }) == "extra");
  bad = j;
  bad["masses"] = {1.0, 2.0};
  CHECK(schema_path([&] { patient_from_json(bad); }) == "masses");
  CHECK_THROWS_AS(parse("{not json", "f.json"), SchemaError);
  CHECK_THROWS_AS(read_json_file("/nonexistent/p.json"), SchemaError);
}

TEST_CASE("cohort and spread documents") {
  pbpk::CohortSpec c;
  c.n = 4;
  c.base = pbpk::reference_patient();
  c.variability.rates.fill(1.3);
  c.variability.volumes = {1.1, 1.2, 1.3, 1.4};
  c.seed = 99;
  const auto back = cohort_from_json(parse(dump(to_json(c))));
  CHECK(back.n == 4);
  CHECK(back.base == c.base);
  CHECK(back.variability == c.variability);
  CHECK(back.seed == 99);

  auto d = cohort_from_json(json{{"n", 2}, {"variability", {{"k_ex", 1.5}, {"masses", 1.2}}}});
  CHECK(d.base == pbpk::reference_patient());
  CHECK(d.variability.rate("k_ex") == 1.5);
  CHECK(d.variability.rate("k_met") == 1.0);
  CHECK(d.variability.masses == std::array<double, 3>{1.2, 1.2, 1.2});

  CHECK(schema_path([&] { cohort_from_json(json{{"n", 0}}); }) == "n");
  CHECK(schema_path([&] { cohort_from_json(json{{"n", 2}, {"variability", {{"k_zz", 1.5}}}}); }) ==
        "variability.k_zz");
  CHECK(schema_path([&] { cohort_from_json(json{{"n", 2}, {"variability", {{"k_ex", 0.5}}}}); }) ==
        "variability.k_ex");
}

TEST_CASE("trajectory csv: header, precision and round trip") {
  const auto t = pbpk::integrate(pbpk::reference_patient(), {1480, 0, 0, 0}, 2.0, 0.1);
  std::ostringstream os;
  write_trajectory_csv(os, t);
  const std::string text = os.str();
  CHECK(text.rfind("time_h,plasma,liver,kidney,tumor\n", 0) == 0);
  std::istringstream is(text);
  const auto back = read_trajectory_csv(is);
  CHECK(back.times == t.times);
  CHECK(back.states == t.states);
  CHECK(format_double(0.1) == "0.10000000000000001");

  std::istringstream bad_header("t,p\n0,1\n");
  CHECK_THROWS_AS(read_trajectory_csv(bad_header), SchemaError);
  std::istringstream bad_row("time_h,plasma,liver,kidney,tumor\n0,1,2,3\n");
  CHECK(schema_path([&] { read_trajectory_csv(bad_row); }) == "line 2");
  std::istringstream negative("time_h,plasma,liver,kidney,tumor\n0,1,2,3,-4\n");
  CHECK_THROWS_AS(read_trajectory_csv(negative), SchemaError);
}

TEST_CASE("trajectory json") {
  const auto t = pbpk::integrate(pbpk::reference_patient(), {10, 0, 0, 0}, 1.0, 0.5);
  const auto back = trajectory_from_json(parse(dump(to_json(t))));
  CHECK(back.times == t.times);
  CHECK(back.states == t.states);
  CHECK_THROWS_AS(trajectory_from_json(json{{"times", {0.0, 1.0}}, {"states", {{1, 0, 0, 0}}}}), SchemaError);
  CHECK(method_from_string("rk45") == pbpk::Method::rk45);
  CHECK_THROWS_AS(method_from_string("euler", "method"), SchemaError);
}

TEST_CASE("dose report json") {
  dosimetry::DoseReport r{{1, 2, 3, 4}, {0.5, 1.5, 2.5}, true};
  const json j = to_json(r);
  CHECK(j["dose_gy"]["kidney"] == 1.5);
  CHECK(j["tia_mbq_h"]["tumor"] == 4.0);
  CHECK(j["cumulative"] == true);
  CHECK(dose_report_from_json(j) == r);
  CHECK(tail_from_string("mono-exp") == dosimetry::Tail::mono_exp);
  CHECK(tail_from_string("mono_exp") == dosimetry::Tail::mono_exp);
  CHECK_THROWS_AS(tail_from_string("linear"), SchemaError);
  CHECK(schema_path([&] { dose_report_from_json(json{{"dose_gy", {{"liver", 1}, {"kidney", -1}, {"tumor", 0}}}}); }) ==
        "dose_gy.kidney");
}

TEST_CASE("checkpoint round trip") {
  const auto p = surrogate::random_network(std::vector<std::size_t>{1, 5, 3, 4}, 72.0, 4);
  const json j = to_json(p);
  CHECK(j["activation"] == "tanh");
  CHECK(j["layers"][0]["w"].size() == 5);
  CHECK(j["layers"][0]["w"][0].size() == 1);
  const auto back = surrogate_from_json(parse(dump(j)));
  CHECK(back == p);
  json bad = j;
  bad["layers"][1]["w"][2].push_back(1.0);
  CHECK(schema_path([&] { surrogate_from_json(bad); }) == "layers[1].w[2]");
  bad = j;
  bad["activation"] = "relu";
  CHECK(schema_path([&] { surrogate_from_json(bad); }) == "activation");
}

TEST_CASE("loss history csv") {
  surrogate::TrainReport r;
  r.loss_history = {3.0, 2.0, 0.5};
  std::ostringstream os;
  write_loss_history_csv(os, r);
  CHECK(os.str() == "iter,loss\n1,3\n2,2\n3,0.5\n");
}

TEST_CASE("training job") {
  const auto job = training_job_from_json(json{{"total_dose", 7400.0}, {"horizon_h", 72.0}, {"tolerance", "inf"}});
  CHECK(job.patient == pbpk::reference_patient());
  CHECK(job.initial[0] == doctest::Approx(7400.0 / 5.0));
  CHECK(job.config.t_batch.size() == 256);
  CHECK(job.config.t_batch.back() == 72.0);
  CHECK(std::isinf(job.config.tolerance));

  const auto round = training_job_from_json(parse(dump(to_json(job))));
  CHECK(round.config.t_batch == job.config.t_batch);
  CHECK(round.patient == job.patient);
  CHECK(std::isinf(round.config.tolerance));

  const auto p15 = training_job_from_json(
      json{{"total_dose", 5.0}, {"horizon_h", 10.0}, {"collocation_points", 11}, {"collocation_power", 2.0},
           {"ode_time_weight", 1.5}, {"optimizer", "gd"}, {"seed", 3}});
  CHECK(p15.config.t_batch[1] == doctest::Approx(10.0 * 0.01));
  CHECK(p15.config.ode_time_weight == 1.5);
  CHECK(p15.config.optimizer == surrogate::Optimizer::gradient_descent);
  CHECK(p15.config.seed == 3);

  CHECK(schema_path([&] { training_job_from_json(json{{"horizon_h", 72.0}}); }) == "total_dose");
  CHECK(schema_path([&] {
          training_job_from_json(json{{"total_dose", 1.0}, {"horizon_h", 72.0}, {"loss_weights", {{"ode", 0}, {"ic", 0}}}});
        }) == "loss_weights");
  CHECK(schema_path([&] { training_job_from_json(json{{"total_dose", 1.0}, {"t_batch", json::array()}}); }) ==
        "t_batch");
  CHECK(schema_path([&] { training_job_from_json(json{{"total_dose", 1.0}, {"horizon_h", 1.0}, {"learning_rate", 0}}); }) ==
        "learning_rate");
}

TEST_CASE("mdp spec and config") {
  dss::MdpSpec s;
  s.max_cycles = 3;
  s.actions = {0.0, 1000.0};
  s.reward.violation_penalty = 42.0;
  s.sim_method = pbpk::Method::rk4;
  const auto back = mdp_spec_from_json(parse(dump(to_json(s))));
  CHECK(back.max_cycles == 3);
  CHECK(back.actions == s.actions);
  CHECK(back.reward == s.reward);
  CHECK(back.variability == s.variability);
  CHECK(back.sim_method == pbpk::Method::rk4);
  CHECK(back.tumor_bins == s.tumor_bins);

  const auto d = mdp_spec_from_json(json::object());
  CHECK(d.actions == dss::MdpSpec{}.actions);
  CHECK(d.gamma == 0.95);
  const auto cfg = mdp_config_from_json(json{{"max_cycles", 2}});
  CHECK(cfg.patient == pbpk::reference_patient());
  CHECK(cfg.spec.max_cycles == 2);

  CHECK(schema_path([&] { mdp_spec_from_json(json{{"reward", {{"kidney_limit", 0}}}}); }) == "reward.kidney_limit");
  CHECK_THROWS_AS(mdp_spec_from_json(json{{"gamma", 1.5}}), SchemaError);
  CHECK(schema_path([&] { mdp_spec_from_json(json{{"bogus", 1}}); }) == "bogus");
}

TEST_CASE("policy json") {
  dss::Policy p;
  p.action = {0, 2, 1};
  p.value = {1.5, -2.0, 0.0};
  p.q = {{1.5, 0, 0}, {0, 0, -2}, {0, 0, 0}};
  const json j = to_json(p);
  CHECK(j["actions"] == json({0, 2, 1}));
  const auto back = policy_from_json(parse(dump(j)));
  CHECK(back.action == p.action);
  CHECK(back.value == p.value);
  CHECK(back.q == p.q);
  json bad = j;
  bad["v"] = {1.0};
  CHECK_THROWS_AS(policy_from_json(bad), SchemaError);
}

TEST_CASE("episodes and profile csv") {
  dss::Episode ep;
  dss::EpisodeStep s;
  s.cycle = 0;
  s.state = 7;
  s.activity_mbq = 7400;
  s.reward = 1.5;
  s.cumulative = {1.0, 2.0, 3.0};
  ep.steps.push_back(s);
  std::ostringstream os;
  write_episodes_csv(os, {ep});
  CHECK(os.str() == "cycle,state,action_mbq,reward,tumor_gy,kidney_gy,liver_gy\n0,7,7400,1.5,3,2,1\n");

  std::ostringstream pr;
  write_profile_csv(pr, {{0.5, 0.25, 0.0, 0.5}});
  CHECK(pr.str() == "tau,point,lo,hi\n0.5,0.25,0,0.5\n");
}

TEST_CASE("dump is stable") {
  const json j = to_json(pbpk::reference_patient());
  CHECK(dump(j) == dump(parse(dump(j))));
  CHECK(dump(j).back() == '\n');
}
