#include <cmath>

#include "tdt/dss.hpp"
#include "tdt/errors.hpp"

namespace tdt::dss {

Episode run_episode(const pbpk::PatientParams& patient, const Policy& pol, const MdpSpec& spec,
                    const CycleModel& model) {
  spec.validate();
  const StateSpace space(spec);
  if (pol.action.size() != space.n_states()) throw ContractError("policy does not match the MDP spec");

  Episode ep;
  DoseVector cumulative{};
  double discount = 1.0;
  for (std::size_t cycle = 0; cycle < spec.max_cycles; ++cycle) {
    EpisodeStep step;
    step.cycle = cycle;
    step.state = space.encode(space.bin(cumulative).bins, cycle);
    step.action = pol.action[step.state];
    if (step.action >= spec.actions.size()) throw ContractError("policy action index out of range");
    step.activity_mbq = spec.actions[step.action];

    const DoseReport per = model.cycle_dose(patient, step.activity_mbq);
    DoseVector next;
    for (std::size_t t = 0; t < pbpk::kNumTargets; ++t) next[t] = cumulative[t] + per.dose[t];
    const bool last = cycle + 1 == spec.max_cycles;
    step.reward = reward(cumulative, next, spec.reward, last);
    step.cumulative = next;
    ep.total_return += discount * step.reward;
    discount *= spec.gamma;
    cumulative = next;
    ep.steps.push_back(step);
  }
  return ep;
}

CohortEvaluation evaluate_policy(std::span<const pbpk::PatientParams> cohort, const Policy& pol,
                                 const MdpSpec& spec, const CycleModel& model) {
  if (cohort.empty()) throw ContractError("cohort must not be empty");
  CohortEvaluation out;
  const std::size_t kidney = pbpk::index(pbpk::Target::kidney);
  double sum = 0.0;
  for (const auto& patient : cohort) {
    Episode ep = run_episode(patient, pol, spec, model);
    out.returns.push_back(ep.total_return);
    sum += ep.total_return;
    if (ep.steps.back().cumulative[kidney] > spec.reward.kidney_limit) ++out.kidney_violations;
    out.episodes.push_back(std::move(ep));
  }
  const double n = static_cast<double>(cohort.size());
  out.mean_return = sum / n;
  out.kidney_violation_rate = static_cast<double>(out.kidney_violations) / n;
  return out;
}

}  // namespace tdt::dss
