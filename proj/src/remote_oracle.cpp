#include <cmath>
#include <cstdlib>

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include "sgcp/plausibility.hpp"

namespace sgcp {

using nlohmann::json;

struct RemoteOracle::Impl {
  explicit Impl(const RemoteOracleConfig& config)
      : client(config.base_url.c_str()) {
    client.set_connection_timeout(static_cast<int>(config.timeout_s), 0);
    client.set_read_timeout(static_cast<int>(config.timeout_s), 0);
    if (const char* key = std::getenv(config.api_key_env.c_str()))
      client.set_bearer_token_auth(key);
  }
  httplib::Client client;
};

RemoteOracle::RemoteOracle(RemoteOracleConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {}

RemoteOracle::~RemoteOracle() = default;

std::string RemoteOracle::build_request_body(const McqaQuery& query,
                                             const RemoteOracleConfig& config) {
  json messages = json::array();
  messages.push_back(json{{"role", "system"},
                          {"content", config.system_prompt}});
  if (!config.example_user.empty()) {
    messages.push_back(json{{"role", "user"},
                            {"content", config.example_user}});
    messages.push_back(json{{"role", "assistant"},
                            {"content", config.example_assistant}});
  }
  // The provider-side adapter crops the referenced image to crop_region
  // (the subject-object union box) before answering.
  json content = json::array();
  content.push_back(json{{"type", "text"}, {"text", mcq_text(query)}});
  content.push_back(json{{"type", "image_ref"},
                         {"path", query.image_ref},
                         {"crop",
                          json::array({query.crop_region.x1, query.crop_region.y1,
                                       query.crop_region.x2,
                                       query.crop_region.y2})}});
  messages.push_back(json{{"role", "user"}, {"content", content}});

  json body;
  body["model"] = config.model;
  body["messages"] = messages;
  body["max_tokens"] = 1;
  body["logprobs"] = true;
  body["top_logprobs"] = 16;
  return body.dump();
}

OracleResponse RemoteOracle::parse_response(const std::string& body,
                                            int num_options) {
  json j;
  try {
    j = json::parse(body);
  } catch (const std::exception& e) {
    throw OracleError(std::string("malformed provider response: ") + e.what());
  }
  OracleResponse resp;
  resp.raw = body;
  try {
    const auto& top =
        j.at("choices").at(0).at("logprobs").at("content").at(0).at(
            "top_logprobs");
    std::vector<double> probs(static_cast<size_t>(num_options) + 1, -1.0);
    for (const auto& entry : top) {
      std::string token = entry.at("token").get<std::string>();
      // trim whitespace the tokenizer may attach
      while (!token.empty() && std::isspace(static_cast<unsigned char>(
                                   token.front())))
        token.erase(token.begin());
      while (!token.empty() &&
             std::isspace(static_cast<unsigned char>(token.back())))
        token.pop_back();
      if (token.size() != 1) continue;
      const int idx = token[0] - 'A';
      if (idx < 0 || idx > num_options) continue;
      if (probs[static_cast<size_t>(idx)] < 0)
        probs[static_cast<size_t>(idx)] =
            std::exp(entry.at("logprob").get<double>());
    }
    for (int i = 0; i <= num_options; ++i)
      if (probs[static_cast<size_t>(i)] < 0)
        throw OracleError(std::string("missing likelihood for option token '") +
                          static_cast<char>('A' + i) + "'");
    resp.option_likelihoods.assign(probs.begin(), probs.end() - 1);
    resp.no_valid_likelihood = probs.back();
  } catch (const OracleError&) {
    throw;
  } catch (const std::exception& e) {
    throw OracleError(std::string("malformed provider response: ") + e.what());
  }
  return resp;
}

OracleResponse RemoteOracle::query(const McqaQuery& query) {
  const auto body = build_request_body(query, config_);
  auto res = impl_->client.Post(config_.path.c_str(), body,
                                "application/json");
  if (!res)
    throw OracleError("transport failure: " +
                      httplib::to_string(res.error()));
  if (res->status != 200)
    throw OracleError("provider returned HTTP " +
                      std::to_string(res->status));
  return parse_response(res->body,
                        static_cast<int>(query.options.size()));
}

}  // namespace sgcp
