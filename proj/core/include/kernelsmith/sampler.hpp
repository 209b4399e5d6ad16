#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kernelsmith/step_model.hpp"
#include "kernelsmith/vocab.hpp"

namespace ks {

enum class DecodeMethod {
  kGreedy,
  kBeam,
  kRandom,
  kParabolaB2,
  kParabolaC,
  kExponential,
  kWindowed,
};

std::string_view to_string(DecodeMethod method);
// Throws kInvalidArgument for an unknown tag.
DecodeMethod parse_method(std::string_view tag);
const std::vector<DecodeMethod>& all_methods();

struct RepeatPenalty {
  double content = 15.0;
  double stopword = 10.0;
};

struct DecodeConfig {
  DecodeMethod method = DecodeMethod::kParabolaC;
  double temperature = 1.0;  // fixed temperature for kRandom
  std::size_t beam_width = 10;
  std::size_t top_k = 40;
  // Total novelty budget; unset means 0.1 * expected length.
  std::optional<double> target_total_novelty;
  double expansion_factor = 1.65;
  std::size_t max_len = 50;
  double tau_floor = 0.1;
  double tau_ceiling = 2.0;
  double b2_const = 0.5;  // held fixed by parabola_c (and windowed)
  double c_const = 3.0;   // held fixed by parabola_b2
  RepeatPenalty penalty;
  std::size_t repeat_window = 5;
  std::size_t window_size = 3;
  double exp_kappa = 0.5;
  double exp_alpha = 1.0;
  std::uint64_t seed = 0;

  // Throws kInvalidArgument on out-of-range fields.
  void validate() const;
};

// b^2 such that the integral of b^2 (x - 0.5)^2 + c over [a, 1] equals t.
// Throws kEndOfCurve at a == 1.
double solve_parabola_b2(double a, double c, double t);
// c such that the same integral equals t.
double solve_parabola_c(double a, double b2, double t);
inline double parabola(double b2, double c, double x) { return b2 * (x - 0.5) * (x - 0.5) + c; }

// Peak probability minus the chosen token's probability under
// softmax(log_probs / tau). -infinity entries have probability zero.
double token_novelty(std::span<const double> log_probs, double tau, TokenId chosen);

// Subtracts the stopword or content penalty once from every distinct token
// in recent (reserved ids excepted), then renormalizes.
std::vector<double> apply_repeat_penalty(std::span<const double> log_probs,
                                         std::span<const TokenId> recent, const Vocab& vocab,
                                         const RepeatPenalty& penalty);

struct CurveState {
  std::size_t step = 0;
  std::size_t expected_length = 1;
  double target = 0.0;
  double accumulated = 0.0;
  double a = 0.0;
  double remaining = 0.0;
  // Last solved free parameter (b^2 or c); the opposite one is constant.
  double b2 = 0.0;
  double c = 0.0;
};

// round(expansion_factor * input_len) clamped to [1, max_len].
std::size_t expected_length(std::size_t input_len, const DecodeConfig& config);

struct Candidate {
  TokenId token;
  double prob;
};

struct TraceStep {
  TokenId token;
  double tau;
  double novelty;
  double window;  // novelty summed over the last window_size steps, this one included
  std::vector<Candidate> candidates;  // sampling distribution over the top-k set
};

struct DecodeTrace {
  std::vector<TraceStep> steps;
  double total_novelty = 0.0;
};

struct DecodeResult {
  std::vector<TokenId> ids;  // without </s>
  DecodeTrace trace;
  bool terminated = false;  // emitted </s> within max_len + 1 steps
  double log_prob = 0.0;    // model log-probability of ids (+ </s> if terminated)
  CurveState curve;
};

// Runs one decode. The end-of-sentence step ends decoding and is not part of
// the trace. Greedy and beam traces are evaluated at tau = 1 without
// penalties. When no </s> arrives, terminated is false and ids holds the
// max_len tokens produced.
DecodeResult decode(const StepModel& model, const Vocab& vocab, std::span<const TokenId> input,
                    const DecodeConfig& config);

struct Hypothesis {
  std::vector<TokenId> ids;  // without </s>
  double log_prob = 0.0;
  bool finished = false;
  double normalized() const;
};

// Length-normalized beam search; at most beam_width hypotheses, best first.
std::vector<Hypothesis> beam_search(const StepModel& model, std::span<const TokenId> input,
                                    const DecodeConfig& config);

// Rejects token sequences in which some block of 10 tokens reappears with a
// start-to-start distance of at most 15.
bool passes_repetitiveness_filter(std::span<const std::string> tokens);
inline constexpr std::size_t kRepeatBlock = 10;
inline constexpr std::size_t kRepeatDistance = 15;

// {tokens[], tau[], novelty[], window[], candidates[][]}
nlohmann::json trace_to_json(const DecodeTrace& trace, const Vocab& vocab);
nlohmann::json config_to_json(const DecodeConfig& config);
// Overlays fields present in j onto base. Throws kInvalidArgument on bad types.
DecodeConfig config_from_json(const nlohmann::json& j, DecodeConfig base = {});

}  // namespace ks
