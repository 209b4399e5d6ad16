#include "kernelsmith/sampler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"

namespace ks {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

constexpr std::array<std::pair<DecodeMethod, std::string_view>, 7> kMethodTags{{
    {DecodeMethod::kGreedy, "greedy"},
    {DecodeMethod::kBeam, "beam"},
    {DecodeMethod::kRandom, "random"},
    {DecodeMethod::kParabolaB2, "parabola_b2"},
    {DecodeMethod::kParabolaC, "parabola_c"},
    {DecodeMethod::kExponential, "exponential"},
    {DecodeMethod::kWindowed, "windowed"},
}};

double max_finite(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  return m;
}

// Unnormalized softmax(v / tau) weights, shifted so the peak weight is 1.
std::vector<double> tempered_weights(std::span<const double> log_probs, double tau) {
  const double m = max_finite(log_probs);
  std::vector<double> w(log_probs.size(), 0.0);
  if (m == kNegInf) return w;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    if (log_probs[i] != kNegInf) w[i] = std::exp((log_probs[i] - m) / tau);
  }
  return w;
}

// Ids of the k largest finite entries, best first, ties to the lower id.
std::vector<TokenId> top_k_ids(std::span<const double> log_probs, std::size_t k) {
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    if (log_probs[i] != kNegInf) ids.push_back(static_cast<TokenId>(i));
  }
  auto better = [&](TokenId x, TokenId y) {
    if (log_probs[x] != log_probs[y]) return log_probs[x] > log_probs[y];
    return x < y;
  };
  const std::size_t keep = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), better);
  ids.resize(keep);
  return ids;
}

TokenId argmax(std::span<const double> log_probs) {
  TokenId best = 0;
  for (std::size_t i = 1; i < log_probs.size(); ++i) {
    if (log_probs[i] > log_probs[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(i);
  }
  return best;
}

std::vector<Candidate> candidate_list(std::span<const TokenId> ids, std::span<const double> weights) {
  double total = 0.0;
  for (TokenId id : ids) total += weights[static_cast<std::size_t>(id)];
  std::vector<Candidate> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back({id, weights[static_cast<std::size_t>(id)] / total});
  return out;
}

double window_sum(const std::vector<TraceStep>& steps, double current, std::size_t size) {
  double sum = current;
  const std::size_t past = size == 0 ? 0 : size - 1;
  for (std::size_t i = 0; i < past && i < steps.size(); ++i) sum += steps[steps.size() - 1 - i].novelty;
  return sum;
}

double clamp_tau(double tau, const DecodeConfig& cfg) {
  if (std::isnan(tau)) return cfg.tau_floor;
  return std::clamp(tau, cfg.tau_floor, cfg.tau_ceiling);
}

// Corrected temperature for the curve methods at the current step. Updates
// the solved parameter in curve.
double curve_tau(const DecodeConfig& cfg, CurveState& curve, const std::vector<TraceStep>& steps,
                 double* window_factor) {
  curve.a = static_cast<double>(curve.step) / static_cast<double>(curve.expected_length);
  curve.remaining = curve.target - curve.accumulated;
  const bool live = curve.a < 1.0;
  const double x = curve.a;
  *window_factor = 1.0;
  switch (cfg.method) {
    case DecodeMethod::kParabolaC:
      curve.b2 = cfg.b2_const;
      if (live) curve.c = solve_parabola_c(curve.a, curve.b2, curve.remaining);
      return clamp_tau(parabola(curve.b2, curve.c, x), cfg);
    case DecodeMethod::kParabolaB2:
      curve.c = cfg.c_const;
      if (live) curve.b2 = solve_parabola_b2(curve.a, curve.c, curve.remaining);
      return clamp_tau(parabola(curve.b2, curve.c, x), cfg);
    case DecodeMethod::kExponential:
      return clamp_tau(cfg.exp_kappa * std::exp(cfg.exp_alpha * curve.remaining), cfg);
    case DecodeMethod::kWindowed: {
      // Constant parabola fixed at the start, then nudged by how the recent
      // window compares with its share of the budget.
      curve.b2 = cfg.b2_const;
      if (curve.step == 0) curve.c = solve_parabola_c(0.0, curve.b2, curve.target);
      double tau = parabola(curve.b2, curve.c, x);
      if (!steps.empty()) {
        const std::size_t span = std::min(cfg.window_size, steps.size());
        double actual = 0.0;
        for (std::size_t i = 0; i < span; ++i) actual += steps[steps.size() - 1 - i].novelty;
        const double wanted =
            curve.target / static_cast<double>(curve.expected_length) * static_cast<double>(span);
        *window_factor = actual > 0.0 ? std::clamp(wanted / actual, 0.5, 2.0) : 2.0;
        tau *= *window_factor;
      }
      return clamp_tau(tau, cfg);
    }
    case DecodeMethod::kRandom:
      return cfg.temperature;
    case DecodeMethod::kGreedy:
    case DecodeMethod::kBeam:
      return 1.0;
  }
  return 1.0;
}

// Trace of a fixed sequence at tau = 1 with no penalties.
DecodeTrace replay(const StepModel& model, std::span<const TokenId> input,
                   const std::vector<TokenId>& ids, const DecodeConfig& cfg, double* log_prob,
                   bool terminated) {
  DecodeTrace trace;
  StatePtr state = model.start(input);
  TokenId prev = Vocab::kBos;
  *log_prob = 0.0;
  for (std::size_t i = 0; i <= ids.size(); ++i) {
    if (i == ids.size() && !terminated) break;
    StepOutput out = model.step(*state, prev);
    const TokenId tok = i < ids.size() ? ids[i] : Vocab::kEos;
    *log_prob += out.log_probs[static_cast<std::size_t>(tok)];
    if (i == ids.size()) break;
    const std::vector<double> w = tempered_weights(out.log_probs, 1.0);
    const double nov = token_novelty(out.log_probs, 1.0, tok);
    TraceStep step{tok, 1.0, nov, window_sum(trace.steps, nov, cfg.window_size),
                   candidate_list(top_k_ids(out.log_probs, cfg.top_k), w)};
    trace.steps.push_back(std::move(step));
    trace.total_novelty += nov;
    state = out.next;
    prev = tok;
  }
  return trace;
}

DecodeResult decode_greedy(const StepModel& model, std::span<const TokenId> input,
                           const DecodeConfig& cfg) {
  DecodeResult r;
  StatePtr state = model.start(input);
  TokenId prev = Vocab::kBos;
  for (std::size_t s = 0; s <= cfg.max_len; ++s) {
    StepOutput out = model.step(*state, prev);
    const TokenId tok = argmax(out.log_probs);
    if (tok == Vocab::kEos) {
      r.terminated = true;
      break;
    }
    if (s == cfg.max_len) break;
    r.ids.push_back(tok);
    state = out.next;
    prev = tok;
  }
  r.trace = replay(model, input, r.ids, cfg, &r.log_prob, r.terminated);
  return r;
}

DecodeResult decode_beam(const StepModel& model, std::span<const TokenId> input,
                         const DecodeConfig& cfg) {
  std::vector<Hypothesis> hyps = beam_search(model, input, cfg);
  DecodeResult r;
  if (!hyps.empty()) {
    r.ids = hyps.front().ids;
    r.terminated = hyps.front().finished;
  }
  r.trace = replay(model, input, r.ids, cfg, &r.log_prob, r.terminated);
  return r;
}

DecodeResult decode_sampled(const StepModel& model, const Vocab& vocab,
                            std::span<const TokenId> input, const DecodeConfig& cfg,
                            CurveState curve) {
  DecodeResult r;
  Rng rng(cfg.seed);
  StatePtr state = model.start(input);
  TokenId prev = Vocab::kBos;
  for (std::size_t s = 0; s <= cfg.max_len; ++s) {
    StepOutput out = model.step(*state, prev);
    curve.step = s;
    double factor = 1.0;
    const double tau = curve_tau(cfg, curve, r.trace.steps, &factor);

    const std::size_t from = r.ids.size() > cfg.repeat_window ? r.ids.size() - cfg.repeat_window : 0;
    const std::span<const TokenId> recent(r.ids.data() + from, r.ids.size() - from);
    const std::vector<double> logp = apply_repeat_penalty(out.log_probs, recent, vocab, cfg.penalty);

    const std::vector<double> full = tempered_weights(logp, tau);
    const std::vector<TokenId> top = top_k_ids(logp, cfg.top_k);
    std::vector<double> restricted(full.size(), 0.0);
    for (TokenId id : top) restricted[static_cast<std::size_t>(id)] = full[static_cast<std::size_t>(id)];
    const auto tok = static_cast<TokenId>(rng.categorical(restricted));

    if (tok == Vocab::kEos) {
      r.terminated = true;
      r.log_prob += out.log_probs[static_cast<std::size_t>(tok)];
      break;
    }
    if (s == cfg.max_len) break;
    const double nov = token_novelty(logp, tau, tok);
    TraceStep step{tok, tau, nov, window_sum(r.trace.steps, nov, cfg.window_size),
                   candidate_list(top, full)};
    r.trace.steps.push_back(std::move(step));
    r.trace.total_novelty += nov;
    curve.accumulated += nov;
    r.log_prob += out.log_probs[static_cast<std::size_t>(tok)];
    r.ids.push_back(tok);
    state = out.next;
    prev = tok;
  }
  curve.step = r.ids.size();
  curve.a = static_cast<double>(curve.step) / static_cast<double>(curve.expected_length);
  curve.remaining = curve.target - curve.accumulated;
  r.curve = curve;
  return r;
}

}  // namespace

std::string_view to_string(DecodeMethod method) {
  for (const auto& [m, tag] : kMethodTags) {
    if (m == method) return tag;
  }
  return "unknown";
}

DecodeMethod parse_method(std::string_view tag) {
  for (const auto& [m, t] : kMethodTags) {
    if (t == tag) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown decode method '" + std::string(tag) + "'");
}

const std::vector<DecodeMethod>& all_methods() {
  static const std::vector<DecodeMethod> methods = [] {
    std::vector<DecodeMethod> m;
    for (const auto& entry : kMethodTags) m.push_back(entry.first);
    return m;
  }();
  return methods;
}

void DecodeConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidArgument, msg); };
  if (top_k < 1) fail("top_k must be at least 1");
  if (beam_width < 1) fail("beam_width must be at least 1");
  if (!(tau_floor > 0.0)) fail("tau_floor must be positive");
  if (!(tau_ceiling >= tau_floor)) fail("tau_ceiling must be at least tau_floor");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(expansion_factor >= 1.0)) fail("expansion_factor must be at least 1");
  if (!(penalty.content >= 0.0) || !(penalty.stopword >= 0.0)) fail("penalties must be nonnegative");
  if (max_len < 1) fail("max_len must be at least 1");
  if (window_size < 1) fail("window_size must be at least 1");
  if (target_total_novelty && !(*target_total_novelty >= 0.0)) {
    fail("target_total_novelty must be nonnegative");
  }
  if (!std::isfinite(b2_const) || !std::isfinite(c_const) || !std::isfinite(exp_kappa) ||
      !std::isfinite(exp_alpha)) {
    fail("curve constants must be finite");
  }
}

double solve_parabola_b2(double a, double c, double t) {
  const double den = 4.0 * a * a * a - 6.0 * a * a + 3.0 * a - 1.0;
  if (a >= 1.0 || den == 0.0) throw Error(ErrorCode::kEndOfCurve, "curve position reached 1");
  return 12.0 * (c - a * c - t) / den;
}

double solve_parabola_c(double a, double b2, double t) {
  if (a >= 1.0) throw Error(ErrorCode::kEndOfCurve, "curve position reached 1");
  return (-4.0 * a * a * a * b2 + 6.0 * a * a * b2 - 3.0 * a * b2 + b2 - 12.0 * t) / (12.0 * (a - 1.0));
}

double token_novelty(std::span<const double> log_probs, double tau, TokenId chosen) {
  const std::vector<double> w = tempered_weights(log_probs, tau);
  const double z = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(z > 0.0)) return 0.0;
  // The peak weight is exactly 1 after the shift.
  return (1.0 - w[static_cast<std::size_t>(chosen)]) / z;
}

std::vector<double> apply_repeat_penalty(std::span<const double> log_probs,
                                         std::span<const TokenId> recent, const Vocab& vocab,
                                         const RepeatPenalty& penalty) {
  std::vector<double> out(log_probs.begin(), log_probs.end());
  std::unordered_set<TokenId> seen;
  bool changed = false;
  for (TokenId id : recent) {
    if (vocab.is_reserved(id) || static_cast<std::size_t>(id) >= out.size() || !seen.insert(id).second) continue;
    const double amount = vocab.is_stopword(id) ? penalty.stopword : penalty.content;
    if (amount == 0.0 || out[static_cast<std::size_t>(id)] == kNegInf) continue;
    out[static_cast<std::size_t>(id)] -= amount;
    changed = true;
  }
  if (!changed) return out;
  const double m = max_finite(out);
  double z = 0.0;
  for (double x : out) {
    if (x != kNegInf) z += std::exp(x - m);
  }
  const double lse = m + std::log(z);
  for (double& x : out) {
    if (x != kNegInf) x -= lse;
  }
  return out;
}

std::size_t expected_length(std::size_t input_len, const DecodeConfig& config) {
  const auto n = static_cast<std::size_t>(std::llround(config.expansion_factor * static_cast<double>(input_len)));
  return std::clamp<std::size_t>(n, 1, config.max_len);
}

double Hypothesis::normalized() const {
  const std::size_t len = ids.size() + (finished ? 1 : 0);
  return len == 0 ? 0.0 : log_prob / static_cast<double>(len);
}

std::vector<Hypothesis> beam_search(const StepModel& model, std::span<const TokenId> input,
                                    const DecodeConfig& cfg) {
  cfg.validate();
  if (input.empty()) throw Error(ErrorCode::kEmptyInput, "cannot decode an empty input");
  struct Beam {
    Hypothesis hyp;
    StatePtr state;
  };
  struct Extension {
    double score;
    std::size_t beam;
    TokenId token;
  };
  std::vector<Beam> alive{{Hypothesis{}, model.start(input)}};
  std::vector<Hypothesis> finished;
  std::vector<Hypothesis> last_alive;

  for (std::size_t len = 0; len <= cfg.max_len && !alive.empty() && finished.size() < cfg.beam_width; ++len) {
    std::vector<StepOutput> outs;
    std::vector<Extension> ext;
    for (std::size_t b = 0; b < alive.size(); ++b) {
      const TokenId prev = alive[b].hyp.ids.empty() ? Vocab::kBos : alive[b].hyp.ids.back();
      outs.push_back(model.step(*alive[b].state, prev));
      const auto& lp = outs.back().log_probs;
      for (std::size_t tok = 0; tok < lp.size(); ++tok) {
        if (lp[tok] != kNegInf) ext.push_back({alive[b].hyp.log_prob + lp[tok], b, static_cast<TokenId>(tok)});
      }
    }
    const std::size_t keep = std::min(cfg.beam_width, ext.size());
    std::partial_sort(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(keep), ext.end(),
                      [](const Extension& x, const Extension& y) {
                        if (x.score != y.score) return x.score > y.score;
                        if (x.beam != y.beam) return x.beam < y.beam;
                        return x.token < y.token;
                      });
    last_alive.clear();
    for (const auto& b : alive) last_alive.push_back(b.hyp);
    std::vector<Beam> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Extension& e = ext[i];
      Hypothesis h = alive[e.beam].hyp;
      h.log_prob = e.score;
      if (e.token == Vocab::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else if (len < cfg.max_len) {
        h.ids.push_back(e.token);
        next.push_back({std::move(h), outs[e.beam].next});
      }
    }
    alive = std::move(next);
    if (!alive.empty()) {
      last_alive.clear();
      for (const auto& b : alive) last_alive.push_back(b.hyp);
    }
  }

  auto rank = [](const Hypothesis& x, const Hypothesis& y) {
    if (x.normalized() != y.normalized()) return x.normalized() > y.normalized();
    return x.ids < y.ids;
  };
  std::stable_sort(finished.begin(), finished.end(), rank);
  if (!finished.empty()) {
    // The last step can finish several hypotheses at once.
    if (finished.size() > cfg.beam_width) finished.resize(cfg.beam_width);
    return finished;
  }
  std::stable_sort(last_alive.begin(), last_alive.end(), rank);
  return last_alive;
}

DecodeResult decode(const StepModel& model, const Vocab& vocab, std::span<const TokenId> input,
                    const DecodeConfig& config) {
  config.validate();
  if (input.empty()) throw Error(ErrorCode::kEmptyInput, "cannot decode an empty input");
  if (model.vocab_size() != vocab.size()) {
    throw Error(ErrorCode::kShapeError, "step model and vocabulary sizes differ");
  }
  CurveState curve;
  curve.expected_length = expected_length(input.size(), config);
  curve.target = config.target_total_novelty.value_or(0.1 * static_cast<double>(curve.expected_length));
  curve.remaining = curve.target;

  DecodeResult r;
  switch (config.method) {
    case DecodeMethod::kGreedy:
      r = decode_greedy(model, input, config);
      break;
    case DecodeMethod::kBeam:
      r = decode_beam(model, input, config);
      break;
    default:
      return decode_sampled(model, vocab, input, config, curve);
  }
  curve.step = r.ids.size();
  curve.accumulated = r.trace.total_novelty;
  curve.a = static_cast<double>(curve.step) / static_cast<double>(curve.expected_length);
  curve.remaining = curve.target - curve.accumulated;
  r.curve = curve;
  return r;
}

bool passes_repetitiveness_filter(std::span<const std::string> tokens) {
  const std::size_t n = tokens.size();
  if (n < kRepeatBlock + 1) return true;
  for (std::size_t i = 0; i + kRepeatBlock <= n; ++i) {
    for (std::size_t j = i + 1; j <= i + kRepeatDistance && j + kRepeatBlock <= n; ++j) {
      if (std::equal(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                     tokens.begin() + static_cast<std::ptrdiff_t>(i + kRepeatBlock),
                     tokens.begin() + static_cast<std::ptrdiff_t>(j))) {
        return false;
      }
    }
  }
  return true;
}

nlohmann::json trace_to_json(const DecodeTrace& trace, const Vocab& vocab) {
  nlohmann::json tokens = nlohmann::json::array();
  nlohmann::json tau = nlohmann::json::array();
  nlohmann::json novelty = nlohmann::json::array();
  nlohmann::json window = nlohmann::json::array();
  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    tokens.push_back(vocab.token(s.token));
    tau.push_back(s.tau);
    novelty.push_back(s.novelty);
    window.push_back(s.window);
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : s.candidates) cands.push_back({{"token", vocab.token(c.token)}, {"prob", c.prob}});
    candidates.push_back(std::move(cands));
  }
  return {{"tokens", tokens},   {"tau", tau},
          {"novelty", novelty}, {"window", window},
          {"candidates", candidates}, {"total_novelty", trace.total_novelty}};
}

nlohmann::json config_to_json(const DecodeConfig& c) {
  nlohmann::json j = {
      {"method", to_string(c.method)},
      {"temperature", c.temperature},
      {"beam_width", c.beam_width},
      {"top_k", c.top_k},
      {"target_total_novelty", nullptr},
      {"expansion_factor", c.expansion_factor},
      {"max_len", c.max_len},
      {"tau_floor", c.tau_floor},
      {"tau_ceiling", c.tau_ceiling},
      {"b2_const", c.b2_const},
      {"c_const", c.c_const},
      {"penalty_content", c.penalty.content},
      {"penalty_stopword", c.penalty.stopword},
      {"repeat_window", c.repeat_window},
      {"window_size", c.window_size},
      {"exp_kappa", c.exp_kappa},
      {"exp_alpha", c.exp_alpha},
      {"seed", c.seed},
  };
  if (c.target_total_novelty) j["target_total_novelty"] = *c.target_total_novelty;
  return j;
}

DecodeConfig config_from_json(const nlohmann::json& j, DecodeConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "decode overrides must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "method") c.method = parse_method(value.get<std::string>());
      else if (key == "temperature") c.temperature = value.get<double>();
      else if (key == "beam_width") c.beam_width = value.get<std::size_t>();
      else if (key == "top_k") c.top_k = value.get<std::size_t>();
      else if (key == "target_total_novelty") {
        if (value.is_null()) c.target_total_novelty.reset();
        else c.target_total_novelty = value.get<double>();
      }
      else if (key == "expansion_factor") c.expansion_factor = value.get<double>();
      else if (key == "max_len") c.max_len = value.get<std::size_t>();
      else if (key == "tau_floor") c.tau_floor = value.get<double>();
      else if (key == "tau_ceiling") c.tau_ceiling = value.get<double>();
      else if (key == "b2_const") c.b2_const = value.get<double>();
      else if (key == "c_const") c.c_const = value.get<double>();
      else if (key == "penalty_content") c.penalty.content = value.get<double>();
      else if (key == "penalty_stopword") c.penalty.stopword = value.get<double>();
      else if (key == "repeat_window") c.repeat_window = value.get<std::size_t>();
      else if (key == "window_size") c.window_size = value.get<std::size_t>();
      else if (key == "exp_kappa") c.exp_kappa = value.get<double>();
      else if (key == "exp_alpha") c.exp_alpha = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw Error(ErrorCode::kInvalidArgument, "unknown decode field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad decode field: ") + e.what());
  }
  return c;
}

}  // namespace ks
