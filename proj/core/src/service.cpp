#include "kernelsmith/service.hpp"

#include "kernelsmith/error.hpp"
#include "kernelsmith/step_model.hpp"
#include "kernelsmith/textprep.hpp"

namespace ks {
namespace {

constexpr const char* kVersion = "0.1.0";

[[noreturn]] void bad_request(const std::string& message) { throw Error(ErrorCode::kBadRequest, message); }

const nlohmann::json& require_object(const nlohmann::json& request) {
  if (!request.is_object()) bad_request("request body must be a JSON object");
  return request;
}

Sentence read_sentence(const nlohmann::json& request) {
  auto it = request.find("sentence");
  if (it == request.end() || !it->is_string()) bad_request("field 'sentence' (string) is required");
  try {
    return normalize_sentence(it->get<std::string>());
  } catch (const Error& e) {
    bad_request(e.what());
  }
}

nlohmann::json metrics_json(const MetricReport& r) {
  return {{"dist1", r.diversity.dist1},
          {"dist2", r.diversity.dist2},
          {"expansion_ratio", r.diversity.expansion_ratio},
          {"added_words", r.diversity.added_words},
          {"input_len", r.input_len},
          {"output_len", r.output_len},
          {"frechet", r.frechet},
          {"cosine_dist", r.cosine_dist}};
}

nlohmann::json flat_trace(const std::vector<std::string>& tokens) {
  nlohmann::json ones = nlohmann::json::array();
  nlohmann::json zeros = nlohmann::json::array();
  nlohmann::json empty = nlohmann::json::array();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    ones.push_back(1.0);
    zeros.push_back(0.0);
    empty.push_back(nlohmann::json::array());
  }
  return {{"tokens", tokens}, {"tau", ones},          {"novelty", zeros},
          {"window", zeros},  {"candidates", empty}, {"total_novelty", 0.0}};
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kServiceUnready:
      return 503;
    case ErrorCode::kBadRequest:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kEmptySentence:
    case ErrorCode::kEmptyInput:
    case ErrorCode::kTooShort:
    case ErrorCode::kParseError:
      return 400;
    default:
      return 500;
  }
}

ExpansionService::ExpansionService(std::shared_ptr<const TrigramLM> lm, std::shared_ptr<const ExpansionModel> model,
                                   ServiceSettings settings)
    : lm_(std::move(lm)), model_(std::move(model)), settings_(std::move(settings)) {
  settings_.decode.validate();
  settings_.compression.validate();
  if (model_ != nullptr) {
    step_model_ = std::make_shared<Seq2SeqStepModel>(model_);
  } else if (lm_ != nullptr) {
    step_model_ = std::make_shared<LmStepModel>(lm_);
  }
}

ExpansionService ExpansionService::from_config(const KeyValueConfig& config) {
  std::shared_ptr<const TrigramLM> lm;
  std::shared_ptr<const ExpansionModel> model;
  if (auto p = config.get("lm.path"); p && !p->empty()) {
    lm = std::make_shared<const TrigramLM>(TrigramLM::load_arpa(*p));
  }
  if (auto p = config.get("model.path"); p && !p->empty()) {
    model = std::make_shared<const ExpansionModel>(load_checkpoint(*p));
  }
  ServiceSettings s;
  s.decode = decode_config_from(config);
  s.compression = compression_config_from(config);
  s.max_candidates = config.get_size("server.max_candidates", s.max_candidates);
  return ExpansionService(std::move(lm), std::move(model), s);
}

const Vocab& ExpansionService::vocab() const { return model_ != nullptr ? model_->vocab() : lm_->vocab(); }

nlohmann::json ExpansionService::expand(const nlohmann::json& request) const {
  require_object(request);
  DecodeConfig cfg = settings_.decode;
  bool baseline = false;
  if (auto it = request.find("overrides"); it != request.end() && !it->is_null()) {
    try {
      cfg = config_from_json(*it, cfg);
    } catch (const Error& e) {
      bad_request(e.what());
    }
  }
  if (auto it = request.find("method"); it != request.end() && !it->is_null()) {
    if (!it->is_string()) bad_request("field 'method' must be a string");
    const std::string tag = it->get<std::string>();
    if (tag == kTrigramMethod) {
      baseline = true;
    } else {
      try {
        cfg.method = parse_method(tag);
      } catch (const Error& e) {
        bad_request(e.what());
      }
    }
  }
  std::size_t count = 1;
  if (auto it = request.find("candidate_count"); it != request.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() < 1) bad_request("candidate_count must be a positive integer");
    count = it->get<std::size_t>();
    if (count > settings_.max_candidates) {
      bad_request("candidate_count exceeds " + std::to_string(settings_.max_candidates));
    }
  }
  if (auto it = request.find("seed"); it != request.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() < 0) bad_request("seed must be a nonnegative integer");
    cfg.seed = it->get<std::uint64_t>();
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    bad_request(e.what());
  }
  const Sentence input = read_sentence(request);

  if (!ready()) throw Error(ErrorCode::kServiceUnready, "no model is loaded");
  if (baseline && lm_ == nullptr) throw Error(ErrorCode::kServiceUnready, "trigram baseline needs a language model");

  nlohmann::json out;
  out["seed"] = cfg.seed;
  out["method"] = baseline ? std::string(kTrigramMethod) : std::string(to_string(cfg.method));
  out["model"] = baseline || model_ == nullptr ? "trigram_lm" : "seq2seq";
  out["input"] = {{"tokens", input.tokens}, {"text", detokenize(input.tokens)}};
  out["config"] = config_to_json(cfg);
  const std::size_t expected = expected_length(input.size(), cfg);
  out["expected_length"] = expected;
  out["target_novelty"] = cfg.target_total_novelty.value_or(0.1 * static_cast<double>(expected));

  const std::vector<TokenId> ids = vocab().encode(input.tokens);
  nlohmann::json candidates = nlohmann::json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    std::vector<std::string> tokens;
    nlohmann::json trace;
    bool terminated = true;
    nlohmann::json log_prob = nullptr;
    if (baseline) {
      tokens = insert_trigram_words(*lm_, input, cfg.expansion_factor, seed).tokens;
      trace = flat_trace(tokens);
    } else {
      DecodeConfig c = cfg;
      c.seed = seed;
      const DecodeResult r = decode(*step_model_, vocab(), ids, c);
      tokens = vocab().decode(r.ids);
      trace = trace_to_json(r.trace, vocab());
      terminated = r.terminated;
      log_prob = r.log_prob;
    }
    nlohmann::json cand;
    cand["seed"] = seed;
    cand["tokens"] = tokens;
    cand["text"] = detokenize(tokens);
    cand["trace"] = std::move(trace);
    cand["terminated"] = terminated;
    cand["log_prob"] = log_prob;
    cand["metrics"] = metrics_json(evaluate_pair(input.tokens, tokens, nullptr, embedder_));
    if (!terminated) {
      cand["filtered"] = {{"flag", true}, {"reason", "non-terminating"}};
    } else if (!passes_repetitiveness_filter(tokens)) {
      cand["filtered"] = {{"flag", true}, {"reason", "repetitive"}};
    } else {
      cand["filtered"] = {{"flag", false}, {"reason", nullptr}};
    }
    candidates.push_back(std::move(cand));
  }
  out["candidates"] = std::move(candidates);
  return out;
}

nlohmann::json ExpansionService::compress(const nlohmann::json& request) const {
  require_object(request);
  CompressionConfig cc = settings_.compression;
  if (auto it = request.find("target_rate"); it != request.end() && !it->is_null()) {
    if (!it->is_number()) bad_request("target_rate must be a number");
    cc.target_rate = it->get<double>();
  }
  try {
    cc.validate();
  } catch (const Error& e) {
    bad_request(e.what());
  }
  const Sentence input = read_sentence(request);
  if (input.size() < 2) bad_request("sentence is too short to compress");
  if (lm_ == nullptr) throw Error(ErrorCode::kServiceUnready, "compression needs a language model");
  const Compression c = compress_detailed(*lm_, input, cc);
  return {{"input", {{"tokens", input.tokens}, {"text", detokenize(input.tokens)}}},
          {"kernel", {{"tokens", c.kernel.tokens}, {"text", detokenize(c.kernel.tokens)}}},
          {"kept", c.kept},
          {"score", c.score},
          {"target_rate", cc.target_rate},
          {"achieved_rate", static_cast<double>(c.kernel.size()) / static_cast<double>(input.size())}};
}

nlohmann::json ExpansionService::methods() const {
  nlohmann::json tags = nlohmann::json::array();
  for (DecodeMethod m : all_methods()) tags.push_back(to_string(m));
  tags.push_back(kTrigramMethod);
  return {{"methods", tags},
          {"defaults", config_to_json(settings_.decode)},
          {"max_candidates", settings_.max_candidates}};
}

nlohmann::json ExpansionService::health() const {
  return {{"status", ready() ? "ok" : "unready"},
          {"lm_loaded", lm_ != nullptr},
          {"model_loaded", model_ != nullptr},
          {"step_model", model_ != nullptr ? "seq2seq" : (lm_ != nullptr ? "trigram_lm" : "none")},
          {"version", kVersion}};
}

HttpReply route(const ExpansionService& service, std::string_view method, std::string_view path,
                const std::string& body) {
  auto error = [](int status, std::string code, std::string message) {
    return HttpReply{status, {{"code", std::move(code)}, {"message", std::move(message)}}};
  };
  const bool get = method == "GET";
  const bool post = method == "POST";
  try {
    if (path == "/api/health") {
      if (!get) return error(405, "method-not-allowed", "use GET");
      return {200, service.health()};
    }
    if (path == "/api/methods") {
      if (!get) return error(405, "method-not-allowed", "use GET");
      return {200, service.methods()};
    }
    if (path == "/api/expand" || path == "/api/compress") {
      if (!post) return error(405, "method-not-allowed", "use POST");
      nlohmann::json request;
      try {
        request = nlohmann::json::parse(body);
      } catch (const nlohmann::json::exception& e) {
        return error(400, std::string(to_string(ErrorCode::kBadRequest)), std::string("invalid JSON: ") + e.what());
      }
      return {200, path == "/api/expand" ? service.expand(request) : service.compress(request)};
    }
    return error(404, "not-found", "no route for " + std::string(path));
  } catch (const Error& e) {
    const int status = http_status(e.code());
    const ErrorCode code = status == 400 ? ErrorCode::kBadRequest : e.code();
    return error(status, std::string(to_string(code)), e.what());
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

}  // namespace ks
