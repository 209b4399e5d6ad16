#include "kernelsmith/step_model.hpp"

#include <cmath>

namespace ks {
namespace {

struct LmState final : StepState {
  explicit LmState(TokenId before) : before_prev(before) {}
  TokenId before_prev;
};

}  // namespace

StatePtr LmStepModel::start(std::span<const TokenId> /*input*/) const {
  return std::make_shared<const LmState>(Vocab::kBos);
}

StepOutput LmStepModel::step(const StepState& state, TokenId prev) const {
  const auto& s = static_cast<const LmState&>(state);
  std::vector<double> p = next_token_distribution(*lm_, s.before_prev, prev);
  StepOutput out;
  out.log_probs.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out.log_probs[i] = std::log(p[i]);
  out.next = std::make_shared<const LmState>(prev);
  return out;
}

}  // namespace ks
