#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "kernelsmith/ngram_lm.hpp"
#include "kernelsmith/vocab.hpp"

namespace ks {

// Opaque per-hypothesis decoder state. States are immutable once produced,
// so beams can share them.
class StepState {
 public:
  virtual ~StepState() = default;
};

using StatePtr = std::shared_ptr<const StepState>;

struct StepOutput {
  std::vector<double> log_probs;  // natural log, length vocab_size()
  StatePtr next;
};

// Anything that maps (state, previous token) to a next-token distribution.
// Contract: log_probs are normalized (log-sum-exp 0) and <pad>, <unk> and
// <s> are -infinity. The first step() after start() receives <s>.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual StatePtr start(std::span<const TokenId> input) const = 0;
  virtual StepOutput step(const StepState& state, TokenId prev) const = 0;
};

// Unconditional trigram LM as a step model; the input only matters to the
// caller (for expected length).
class LmStepModel final : public StepModel {
 public:
  explicit LmStepModel(std::shared_ptr<const TrigramLM> lm) : lm_(std::move(lm)) {}

  std::size_t vocab_size() const override { return lm_->vocab().size(); }
  StatePtr start(std::span<const TokenId> input) const override;
  StepOutput step(const StepState& state, TokenId prev) const override;

  const TrigramLM& lm() const { return *lm_; }

 private:
  std::shared_ptr<const TrigramLM> lm_;
};

}  // namespace ks
