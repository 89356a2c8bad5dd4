#include "tdt/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "tdt/errors.hpp"

namespace tdt::io {

namespace {

using pbpk::kCompartmentNames;
using pbpk::kNumCompartments;
using pbpk::kNumTargets;
using pbpk::kTargetNames;

std::string field(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string item(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const json& object(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  return j;
}

const json& array(const json& j, const std::string& path, std::size_t expected = 0) {
  if (!j.is_array()) throw SchemaError(path, "expected an array");
  if (expected != 0 && j.size() != expected) {
    throw SchemaError(path, "expected " + std::to_string(expected) + " entries, got " +
                                std::to_string(j.size()));
  }
  return j;
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError(field(path, key), "unknown field");
  }
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw SchemaError(path, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw SchemaError(path, "must be finite");
  return x;
}

double nonneg(const json& j, const std::string& path) {
  const double x = number(j, path);
  if (x < 0.0) throw SchemaError(path, "must be >= 0");
  return x;
}

double positive(const json& j, const std::string& path) {
  const double x = number(j, path);
  if (!(x > 0.0)) throw SchemaError(path, "must be > 0");
  return x;
}

std::uint64_t unsigned_int(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0)) {
    throw SchemaError(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw SchemaError(path, "expected true or false");
  return j.get<bool>();
}

std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a string");
  return j.get<std::string>();
}

const json& required(const json& j, std::string_view key, const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(field(path, key), "missing required field");
  return *it;
}

const json* optional(const json& j, std::string_view key) {
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

std::vector<double> number_list(const json& j, const std::string& path) {
  array(j, path);
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], item(path, i)));
  return out;
}

template <std::size_t N>
json named(const std::array<double, N>& values, const std::array<std::string_view, N>& names) {
  json o = json::object();
  for (std::size_t i = 0; i < N; ++i) o[std::string(names[i])] = values[i];
  return o;
}

template <std::size_t N>
std::array<double, N> from_named(const json& j, const std::array<std::string_view, N>& names,
                                 const std::string& path) {
  object(j, path);
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = nonneg(required(j, names[i], path), field(path, names[i]));
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto n : names) ok = ok || key == n;
    if (!ok) throw SchemaError(field(path, key), "unknown field");
  }
  return out;
}

const char* method_name(pbpk::Method m) { return m == pbpk::Method::rk4 ? "rk4" : "rk45"; }

void check_csv_header(std::istream& is, const std::string& expected) {
  std::string header;
  if (!std::getline(is, header)) throw SchemaError("line 1", "missing CSV header");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != expected) throw SchemaError("line 1", "expected header '" + expected + "'");
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json parse(const std::string& text, const std::string& path) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(path, std::string("invalid JSON: ") + e.what());
  }
}

std::string read_text_file(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw SchemaError(file, "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json_file(const std::string& file) { return parse(read_text_file(file), file); }

void write_text_file(const std::string& file, const std::string& contents) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw SchemaError(file, "cannot write file");
  out << contents;
  if (!out) throw SchemaError(file, "write failed");
}

// -- pbpk -------------------------------------------------------------------

json to_json(const pbpk::PatientParams& p) {
  json j;
  for (const auto& f : pbpk::kRateFields) j[std::string(f.name)] = p.*f.member;
  j["volumes"] = p.volumes;
  j["masses"] = p.masses;
  j["s_factors"] = p.s_factors;
  j["units"] = {{"rates", "1/h"},
                {"volumes", "L (plasma, liver, kidney, tumor)"},
                {"masses", "kg (liver, kidney, tumor)"},
                {"s_factors", "Gy/(MBq h), rows liver, kidney, tumor; columns plasma, liver, kidney, tumor"}};
  return j;
}

pbpk::PatientParams patient_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"k_p_l", "k_l_p", "k_p_k", "k_k_p", "k_met", "k_ex", "k_p_t", "k_t_p",
                           "lambda_phys", "volumes", "masses", "s_factors", "units"});
  pbpk::PatientParams p;
  for (const auto& f : pbpk::kRateFields) {
    p.*f.member = nonneg(required(j, f.name, path), field(path, f.name));
  }
  {
    const std::string vp = field(path, "volumes");
    const json& v = array(required(j, "volumes", path), vp, kNumCompartments);
    for (std::size_t i = 0; i < kNumCompartments; ++i) p.volumes[i] = positive(v[i], item(vp, i));
  }
  {
    const std::string mp = field(path, "masses");
    const json& m = array(required(j, "masses", path), mp, kNumTargets);
    for (std::size_t i = 0; i < kNumTargets; ++i) p.masses[i] = positive(m[i], item(mp, i));
  }
  {
    const std::string sp = field(path, "s_factors");
    const json& s = array(required(j, "s_factors", path), sp, kNumTargets);
    for (std::size_t t = 0; t < kNumTargets; ++t) {
      const json& row = array(s[t], item(sp, t), kNumCompartments);
      for (std::size_t c = 0; c < kNumCompartments; ++c) {
        p.s_factors[t][c] = nonneg(row[c], item(item(sp, t), c));
      }
    }
  }
  if (const json* u = optional(j, "units"); u && !u->is_object()) {
    throw SchemaError(field(path, "units"), "expected an object");
  }
  return p;
}

json to_json(const pbpk::State& c) { return json(c); }

pbpk::State state_from_json(const json& j, const std::string& path) {
  array(j, path, kNumCompartments);
  pbpk::State c{};
  for (std::size_t i = 0; i < kNumCompartments; ++i) c[i] = nonneg(j[i], item(path, i));
  return c;
}

json to_json(const pbpk::ParamSpread& s) {
  json j;
  for (std::size_t i = 0; i < pbpk::kRateFields.size(); ++i) {
    j[std::string(pbpk::kRateFields[i].name)] = s.rates[i];
  }
  j["volumes"] = s.volumes;
  j["masses"] = s.masses;
  return j;
}

pbpk::ParamSpread spread_from_json(const json& j, const std::string& path) {
  object(j, path);
  pbpk::ParamSpread s;
  auto spread = [&](const json& v, const std::string& p) {
    const double x = number(v, p);
    if (x < 1.0) throw SchemaError(p, "spread factor must be >= 1");
    return x;
  };
  auto fill = [&](auto& arr, const json& v, const std::string& p) {
    if (v.is_array()) {
      array(v, p, arr.size());
      for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = spread(v[i], item(p, i));
    } else {
      arr.fill(spread(v, p));
    }
  };
  for (const auto& [key, value] : j.items()) {
    const std::string p = field(path, key);
    if (key == "volumes") {
      fill(s.volumes, value, p);
    } else if (key == "masses") {
      fill(s.masses, value, p);
    } else {
      try {
        s.rate(key) = spread(value, p);
      } catch (const ContractError&) {
        throw SchemaError(p, "unknown parameter");
      }
    }
  }
  return s;
}

json to_json(const pbpk::CohortSpec& c) {
  return {{"n", c.n}, {"base", to_json(c.base)}, {"variability", to_json(c.variability)}, {"seed", c.seed}};
}

pbpk::CohortSpec cohort_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"n", "base", "variability", "seed"});
  pbpk::CohortSpec c;
  c.n = unsigned_int(required(j, "n", path), field(path, "n"));
  if (c.n < 1) throw SchemaError(field(path, "n"), "must be >= 1");
  const json* base = optional(j, "base");
  c.base = base ? patient_from_json(*base, field(path, "base")) : pbpk::reference_patient();
  if (const json* v = optional(j, "variability")) c.variability = spread_from_json(*v, field(path, "variability"));
  if (const json* s = optional(j, "seed")) c.seed = unsigned_int(*s, field(path, "seed"));
  return c;
}

json to_json(const pbpk::Trajectory& t) {
  return {{"times", t.times}, {"states", t.states}};
}

pbpk::Trajectory trajectory_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"times", "states"});
  pbpk::Trajectory t;
  t.times = number_list(required(j, "times", path), field(path, "times"));
  const std::string sp = field(path, "states");
  const json& states = array(required(j, "states", path), sp);
  for (std::size_t i = 0; i < states.size(); ++i) t.states.push_back(state_from_json(states[i], item(sp, i)));
  try {
    t.validate();
  } catch (const Error& e) {
    throw SchemaError(path, e.what());
  }
  return t;
}

pbpk::Method method_from_string(const std::string& s, const std::string& path) {
  if (s == "rk4") return pbpk::Method::rk4;
  if (s == "rk45") return pbpk::Method::rk45;
  throw SchemaError(path, "method must be 'rk4' or 'rk45'");
}

void write_trajectory_csv(std::ostream& os, const pbpk::Trajectory& t) {
  os << "time_h,plasma,liver,kidney,tumor\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    os << format_double(t.times[i]);
    for (double c : t.states[i]) os << ',' << format_double(c);
    os << '\n';
  }
}

pbpk::Trajectory read_trajectory_csv(std::istream& is) {
  check_csv_header(is, "time_h,plasma,liver,kidney,tumor");
  pbpk::Trajectory t;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    std::array<double, 5> row{};
    std::size_t col = 0;
    const char* p = line.c_str();
    while (true) {
      if (col >= row.size()) throw SchemaError(where, "expected 5 columns");
      char* end = nullptr;
      row[col] = std::strtod(p, &end);
      if (end == p || !std::isfinite(row[col])) throw SchemaError(where, "malformed number");
      ++col;
      if (*end == '\0') break;
      if (*end != ',') throw SchemaError(where, "malformed row");
      p = end + 1;
    }
    if (col != row.size()) throw SchemaError(where, "expected 5 columns");
    t.times.push_back(row[0]);
    t.states.push_back({row[1], row[2], row[3], row[4]});
  }
  try {
    t.validate();
  } catch (const Error& e) {
    throw SchemaError("trajectory", e.what());
  }
  return t;
}

// -- dosimetry --------------------------------------------------------------

json to_json(const dosimetry::DoseReport& r) {
  return {{"tia_mbq_h", named(r.tia, kCompartmentNames)},
          {"dose_gy", named(r.dose, kTargetNames)},
          {"cumulative", r.cumulative}};
}

dosimetry::DoseReport dose_report_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"tia_mbq_h", "dose_gy", "cumulative"});
  dosimetry::DoseReport r;
  if (const json* tia = optional(j, "tia_mbq_h")) r.tia = from_named(*tia, kCompartmentNames, field(path, "tia_mbq_h"));
  r.dose = from_named(required(j, "dose_gy", path), kTargetNames, field(path, "dose_gy"));
  if (const json* c = optional(j, "cumulative")) r.cumulative = boolean(*c, field(path, "cumulative"));
  return r;
}

dosimetry::Tail tail_from_string(const std::string& s, const std::string& path) {
  if (s == "none") return dosimetry::Tail::none;
  if (s == "mono_exp" || s == "mono-exp") return dosimetry::Tail::mono_exp;
  throw SchemaError(path, "tail must be 'none' or 'mono_exp'");
}

// -- surrogate --------------------------------------------------------------

json to_json(const surrogate::SurrogateParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    json w = json::array();
    for (std::size_t r = 0; r < l.out; ++r) {
      w.push_back(std::vector<double>(l.w.begin() + static_cast<std::ptrdiff_t>(r * l.in),
                                      l.w.begin() + static_cast<std::ptrdiff_t>((r + 1) * l.in)));
    }
    layers.push_back({{"w", w}, {"b", l.b}});
  }
  return {{"layer_sizes", p.layer_sizes}, {"layers", layers}, {"activation", "tanh"}, {"t_scale", p.t_scale}};
}

surrogate::SurrogateParams surrogate_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"layer_sizes", "layers", "activation", "t_scale"});
  surrogate::SurrogateParams p;
  {
    const std::string lp = field(path, "layer_sizes");
    const json& sizes = array(required(j, "layer_sizes", path), lp);
    for (std::size_t i = 0; i < sizes.size(); ++i) p.layer_sizes.push_back(unsigned_int(sizes[i], item(lp, i)));
  }
  if (const json* a = optional(j, "activation"); a && string(*a, field(path, "activation")) != "tanh") {
    throw SchemaError(field(path, "activation"), "only 'tanh' is supported");
  }
  p.t_scale = positive(required(j, "t_scale", path), field(path, "t_scale"));
  const std::string lp = field(path, "layers");
  const json& layers = array(required(j, "layers", path), lp);
  if (p.layer_sizes.size() != layers.size() + 1) throw SchemaError(lp, "layer count does not match layer_sizes");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string here = item(lp, l);
    object(layers[l], here);
    surrogate::Layer layer;
    layer.in = p.layer_sizes[l];
    layer.out = p.layer_sizes[l + 1];
    const json& w = array(required(layers[l], "w", here), field(here, "w"), layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) {
      const std::string wr = item(field(here, "w"), r);
      const json& row = array(w[r], wr, layer.in);
      for (std::size_t c = 0; c < layer.in; ++c) layer.w.push_back(number(row[c], item(wr, c)));
    }
    layer.b = number_list(array(required(layers[l], "b", here), field(here, "b"), layer.out), field(here, "b"));
    p.layers.push_back(std::move(layer));
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw SchemaError(path, e.what());
  }
  return p;
}

json to_json(const surrogate::TrainReport& r) {
  return {{"final_loss", r.final_loss},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"loss_history", r.loss_history}};
}

void write_loss_history_csv(std::ostream& os, const surrogate::TrainReport& r) {
  os << "iter,loss\n";
  for (std::size_t i = 0; i < r.loss_history.size(); ++i) {
    os << (i + 1) << ',' << format_double(r.loss_history[i]) << '\n';
  }
}

json to_json(const TrainingJob& job) {
  const auto& c = job.config;
  return {{"patient", to_json(job.patient)},
          {"initial", job.initial},
          {"total_dose", job.total_dose},
          {"t_batch", c.t_batch},
          {"tolerance", std::isfinite(c.tolerance) ? json(c.tolerance) : json("inf")},
          {"max_iters", c.max_iters},
          {"learning_rate", c.learning_rate},
          {"ode_time_weight", c.ode_time_weight},
          {"loss_weights", {{"ode", c.loss_weights.ode}, {"phys", c.loss_weights.phys}, {"ic", c.loss_weights.ic}}},
          {"seed", c.seed},
          {"layer_sizes", c.layer_sizes},
          {"optimizer", c.optimizer == surrogate::Optimizer::adam ? "adam" : "gd"}};
}

TrainingJob training_job_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"patient", "initial", "total_dose", "t_batch", "horizon_h", "collocation_points",
                           "collocation_power", "ode_time_weight", "tolerance", "max_iters", "learning_rate",
                           "loss_weights", "seed", "layer_sizes", "optimizer"});
  TrainingJob job;
  const json* patient = optional(j, "patient");
  job.patient = patient ? patient_from_json(*patient, field(path, "patient")) : pbpk::reference_patient();
  job.total_dose = positive(required(j, "total_dose", path), field(path, "total_dose"));
  if (const json* init = optional(j, "initial")) {
    job.initial = state_from_json(*init, field(path, "initial"));
  } else {
    job.initial[pbpk::index(pbpk::Compartment::plasma)] =
        job.total_dose / job.patient.volumes[pbpk::index(pbpk::Compartment::plasma)];
  }

  auto& c = job.config;
  if (const json* tb = optional(j, "t_batch")) {
    c.t_batch = number_list(*tb, field(path, "t_batch"));
    if (c.t_batch.empty()) throw SchemaError(field(path, "t_batch"), "must not be empty");
  } else {
    const double horizon = positive(required(j, "horizon_h", path), field(path, "horizon_h"));
    std::size_t n = 256;
    if (const json* cp = optional(j, "collocation_points")) {
      n = unsigned_int(*cp, field(path, "collocation_points"));
      if (n < 2) throw SchemaError(field(path, "collocation_points"), "must be >= 2");
    }
    double power = 1.0;
    if (const json* pw = optional(j, "collocation_power")) power = positive(*pw, field(path, "collocation_power"));
    c.t_batch = surrogate::power_collocation(horizon, n, power);
  }
  if (const json* t = optional(j, "tolerance")) {
    if (t->is_string() && (t->get<std::string>() == "inf" || t->get<std::string>() == "infinity")) {
      c.tolerance = std::numeric_limits<double>::infinity();
    } else {
      c.tolerance = positive(*t, field(path, "tolerance"));
    }
  }
  if (const json* m = optional(j, "max_iters")) {
    c.max_iters = unsigned_int(*m, field(path, "max_iters"));
    if (c.max_iters < 1) throw SchemaError(field(path, "max_iters"), "must be >= 1");
  }
  if (const json* lr = optional(j, "learning_rate")) c.learning_rate = positive(*lr, field(path, "learning_rate"));
  if (const json* tw = optional(j, "ode_time_weight")) c.ode_time_weight = nonneg(*tw, field(path, "ode_time_weight"));
  if (const json* w = optional(j, "loss_weights")) {
    const std::string wp = field(path, "loss_weights");
    object(*w, wp);
    reject_unknown(*w, wp, {"ode", "phys", "ic"});
    if (const json* x = optional(*w, "ode")) c.loss_weights.ode = nonneg(*x, field(wp, "ode"));
    if (const json* x = optional(*w, "phys")) c.loss_weights.phys = nonneg(*x, field(wp, "phys"));
    if (const json* x = optional(*w, "ic")) c.loss_weights.ic = nonneg(*x, field(wp, "ic"));
    if (c.loss_weights.ode == 0.0 && c.loss_weights.phys == 0.0 && c.loss_weights.ic == 0.0) {
      throw SchemaError(wp, "at least one loss weight must be positive");
    }
  }
  if (const json* s = optional(j, "seed")) c.seed = unsigned_int(*s, field(path, "seed"));
  if (const json* ls = optional(j, "layer_sizes")) {
    const std::string lp = field(path, "layer_sizes");
    array(*ls, lp);
    c.layer_sizes.clear();
    for (std::size_t i = 0; i < ls->size(); ++i) c.layer_sizes.push_back(unsigned_int((*ls)[i], item(lp, i)));
  }
  if (const json* o = optional(j, "optimizer")) {
    const std::string name = string(*o, field(path, "optimizer"));
    if (name == "adam") {
      c.optimizer = surrogate::Optimizer::adam;
    } else if (name == "gd") {
      c.optimizer = surrogate::Optimizer::gradient_descent;
    } else {
      throw SchemaError(field(path, "optimizer"), "optimizer must be 'adam' or 'gd'");
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw SchemaError(path, e.what());
  }
  return job;
}

// -- dss --------------------------------------------------------------------

json to_json(const dss::RewardConfig& r) {
  return {{"w_tumor", r.w_tumor},
          {"w_kidney", r.w_kidney},
          {"w_liver", r.w_liver},
          {"kidney_limit", r.kidney_limit},
          {"liver_limit", r.liver_limit},
          {"tumor_target", r.tumor_target},
          {"violation_penalty", r.violation_penalty},
          {"completion_bonus", r.completion_bonus}};
}

dss::RewardConfig reward_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"w_tumor", "w_kidney", "w_liver", "kidney_limit", "liver_limit", "tumor_target",
                           "violation_penalty", "completion_bonus"});
  dss::RewardConfig r;
  auto get = [&](std::string_view key, double& out, bool strictly_positive) {
    if (const json* v = optional(j, key)) {
      out = strictly_positive ? positive(*v, field(path, key)) : nonneg(*v, field(path, key));
    }
  };
  get("w_tumor", r.w_tumor, false);
  get("w_kidney", r.w_kidney, false);
  get("w_liver", r.w_liver, false);
  get("kidney_limit", r.kidney_limit, true);
  get("liver_limit", r.liver_limit, true);
  get("tumor_target", r.tumor_target, true);
  get("violation_penalty", r.violation_penalty, false);
  get("completion_bonus", r.completion_bonus, false);
  return r;
}

json to_json(const dss::MdpSpec& s) {
  return {{"tumor_dose_bins", s.tumor_bins},
          {"kidney_dose_bins", s.kidney_bins},
          {"liver_dose_bins", s.liver_bins},
          {"max_cycles", s.max_cycles},
          {"actions", s.actions},
          {"cycle_interval", s.cycle_interval},
          {"gamma", s.gamma},
          {"reward", to_json(s.reward)},
          {"rollouts_per_sa", s.rollouts_per_sa},
          {"seed", s.seed},
          {"variability", to_json(s.variability)},
          {"sim_dt", s.sim_dt},
          {"sim_method", method_name(s.sim_method)}};
}

dss::MdpSpec mdp_spec_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"tumor_dose_bins", "kidney_dose_bins", "liver_dose_bins", "max_cycles", "actions",
                           "cycle_interval", "gamma", "reward", "rollouts_per_sa", "seed", "variability",
                           "sim_dt", "sim_method", "patient"});
  dss::MdpSpec s;
  if (const json* v = optional(j, "tumor_dose_bins")) s.tumor_bins = number_list(*v, field(path, "tumor_dose_bins"));
  if (const json* v = optional(j, "kidney_dose_bins")) s.kidney_bins = number_list(*v, field(path, "kidney_dose_bins"));
  if (const json* v = optional(j, "liver_dose_bins")) s.liver_bins = number_list(*v, field(path, "liver_dose_bins"));
  if (const json* v = optional(j, "max_cycles")) s.max_cycles = unsigned_int(*v, field(path, "max_cycles"));
  if (const json* v = optional(j, "actions")) s.actions = number_list(*v, field(path, "actions"));
  if (const json* v = optional(j, "cycle_interval")) s.cycle_interval = positive(*v, field(path, "cycle_interval"));
  if (const json* v = optional(j, "gamma")) s.gamma = nonneg(*v, field(path, "gamma"));
  if (const json* v = optional(j, "reward")) s.reward = reward_from_json(*v, field(path, "reward"));
  if (const json* v = optional(j, "rollouts_per_sa")) s.rollouts_per_sa = unsigned_int(*v, field(path, "rollouts_per_sa"));
  if (const json* v = optional(j, "seed")) s.seed = unsigned_int(*v, field(path, "seed"));
  if (const json* v = optional(j, "variability")) s.variability = spread_from_json(*v, field(path, "variability"));
  if (const json* v = optional(j, "sim_dt")) s.sim_dt = positive(*v, field(path, "sim_dt"));
  if (const json* v = optional(j, "sim_method")) {
    s.sim_method = method_from_string(string(*v, field(path, "sim_method")), field(path, "sim_method"));
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw SchemaError(path, e.what());
  }
  return s;
}

MdpConfig mdp_config_from_json(const json& j, const std::string& path) {
  MdpConfig c;
  c.spec = mdp_spec_from_json(j, path);
  if (const json* p = optional(j, "patient")) c.patient = patient_from_json(*p, field(path, "patient"));
  return c;
}

json to_json(const dss::Policy& p) {
  return {{"actions", p.action}, {"v", p.value}, {"q", p.q}};
}

dss::Policy policy_from_json(const json& j, const std::string& path) {
  object(j, path);
  reject_unknown(j, path, {"actions", "v", "q"});
  dss::Policy p;
  const std::string ap = field(path, "actions");
  const json& actions = array(required(j, "actions", path), ap);
  for (std::size_t i = 0; i < actions.size(); ++i) p.action.push_back(unsigned_int(actions[i], item(ap, i)));
  p.value = number_list(required(j, "v", path), field(path, "v"));
  const std::string qp = field(path, "q");
  const json& q = array(required(j, "q", path), qp);
  for (std::size_t i = 0; i < q.size(); ++i) p.q.push_back(number_list(q[i], item(qp, i)));
  if (p.value.size() != p.action.size() || p.q.size() != p.action.size()) {
    throw SchemaError(path, "actions, v and q must have one entry per state");
  }
  return p;
}

json to_json(const dss::Recommendation& r, const dss::MdpSpec& spec) {
  return {{"action_index", r.action},
          {"action_mbq", r.activity_mbq},
          {"q_row", r.q_row},
          {"actions_mbq", spec.actions},
          {"state", r.state},
          {"clamped", r.clamped}};
}

void write_episodes_csv(std::ostream& os, const std::vector<dss::Episode>& episodes) {
  os << "cycle,state,action_mbq,reward,tumor_gy,kidney_gy,liver_gy\n";
  const auto tumor = pbpk::index(pbpk::Target::tumor);
  const auto kidney = pbpk::index(pbpk::Target::kidney);
  const auto liver = pbpk::index(pbpk::Target::liver);
  for (const auto& ep : episodes) {
    for (const auto& s : ep.steps) {
      os << s.cycle << ',' << s.state << ',' << format_double(s.activity_mbq) << ','
         << format_double(s.reward) << ',' << format_double(s.cumulative[tumor]) << ','
         << format_double(s.cumulative[kidney]) << ',' << format_double(s.cumulative[liver]) << '\n';
    }
  }
}

// -- evalmetrics ------------------------------------------------------------

void write_profile_csv(std::ostream& os, const std::vector<evalmetrics::ProfilePoint>& profile) {
  os << "tau,point,lo,hi\n";
  for (const auto& p : profile) {
    os << format_double(p.tau) << ',' << format_double(p.point) << ',' << format_double(p.lo) << ','
       << format_double(p.hi) << '\n';
  }
}

json to_json(const std::vector<evalmetrics::ProfilePoint>& profile) {
  json out = json::array();
  for (const auto& p : profile) out.push_back({{"tau", p.tau}, {"point", p.point}, {"lo", p.lo}, {"hi", p.hi}});
  return out;
}

}  // namespace tdt::io
