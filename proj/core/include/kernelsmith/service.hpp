#pragma once

#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "kernelsmith/compressor.hpp"
#include "kernelsmith/config.hpp"
#include "kernelsmith/error.hpp"
#include "kernelsmith/metrics.hpp"
#include "kernelsmith/ngram_lm.hpp"
#include "kernelsmith/sampler.hpp"
#include "kernelsmith/seq2seq.hpp"

namespace ks {

// Method tag for the trigram insertion baseline, accepted next to the
// decoder tags.
inline constexpr std::string_view kTrigramMethod = "trigram";

struct ServiceSettings {
  DecodeConfig decode;
  CompressionConfig compression;
  std::size_t max_candidates = 16;
};

// Request handlers over immutable artifacts. Every method is const and
// safe to call from many threads at once.
class ExpansionService {
 public:
  ExpansionService(std::shared_ptr<const TrigramLM> lm, std::shared_ptr<const ExpansionModel> model,
                   ServiceSettings settings = {});

  // Loads lm.path and model.path (either may be absent) and the decode,
  // compression and server settings.
  static ExpansionService from_config(const KeyValueConfig& config);

  // Request: {sentence, method?, overrides?, candidate_count?, seed?}.
  // Throws Error(kBadRequest) or Error(kServiceUnready).
  nlohmann::json expand(const nlohmann::json& request) const;
  // Request: {sentence, target_rate?}.
  nlohmann::json compress(const nlohmann::json& request) const;
  nlohmann::json methods() const;
  nlohmann::json health() const;

  bool ready() const { return lm_ != nullptr || model_ != nullptr; }
  const ServiceSettings& settings() const { return settings_; }

 private:
  const Vocab& vocab() const;
  std::shared_ptr<const TrigramLM> lm_;
  std::shared_ptr<const ExpansionModel> model_;
  std::shared_ptr<const StepModel> step_model_;
  ServiceSettings settings_;
  RandomProjectionEmbedder embedder_;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

// Transport-independent router for the JSON API: POST /api/expand,
// POST /api/compress, GET /api/methods, GET /api/health. Failures become
// {code, message} bodies with 400, 404, 405, 503 or 500.
HttpReply route(const ExpansionService& service, std::string_view method, std::string_view path,
                const std::string& body);

int http_status(ErrorCode code);

}  // namespace ks
