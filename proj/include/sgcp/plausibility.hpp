#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sgcp/core.hpp"

namespace sgcp {

struct PlausibilityConfig {
  double tau = 0.1;
  int group_size = 5;
  bool include_no_valid_option = true;
  int request_concurrency = 1;
  double request_timeout_s = 30.0;
  int max_retries = 2;

  void validate() const;
};

struct McqaQuery {
  BoundingBox crop_region;  // subject-object union box
  std::string image_ref;
  std::vector<std::string> options;
  bool has_no_valid_option = true;
};

struct OracleResponse {
  std::vector<double> option_likelihoods;  // aligned with query options
  double no_valid_likelihood = 0;
  std::string raw;  // provider payload, kept for audit
};

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class PlausibilityOracle {
 public:
  virtual ~PlausibilityOracle() = default;
  virtual OracleResponse query(const McqaQuery& query) = 0;
  // Pure oracles (mocks, replays) can be queried concurrently.
  virtual bool thread_safe() const { return false; }
};

// "<subject> <predicate> <object>", lowercase, '-'/'_' mapped to spaces.
std::string describe(const std::array<int, 3>& entry, const LabelSpace& space);

std::vector<std::vector<std::array<int, 3>>> group_entries(
    const std::vector<std::array<int, 3>>& entries, int group_size);

// The MCQ text sent to providers (and used by mocks keyed on option text).
std::string mcq_text(const McqaQuery& query);

// Materialize, group, query the oracle per group, threshold normalized
// option likelihoods at tau, drop groups where 'no valid option' is the
// strict maximum. Falls back to the single highest-likelihood entry when
// everything is filtered away.
TripletPredictionSet filter_set(const TripletPredictionSet& set,
                                const std::string& image_ref,
                                const BoundingBox& crop_region,
                                const PlausibilityConfig& config,
                                PlausibilityOracle& oracle,
                                const LabelSpace& space);

// --- bundled oracle implementations ---

enum class MockPolicy { Uniform, GtAware, Adversarial, NoValidDominant,
                        Stochastic };

// Deterministic likelihoods from a seeded policy; ignores images entirely.
// GtAware/Adversarial are keyed on the set of ground-truth descriptions.
class MockOracle : public PlausibilityOracle {
 public:
  MockOracle(MockPolicy policy, std::uint64_t seed = 0,
             std::vector<std::string> gt_descriptions = {});

  OracleResponse query(const McqaQuery& query) override;
  bool thread_safe() const override { return true; }

 private:
  MockPolicy policy_;
  std::uint64_t seed_;
  std::vector<std::string> gt_;
};

struct RemoteOracleConfig {
  std::string base_url;  // e.g. http://localhost:8080
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "SGCP_ORACLE_API_KEY";
  std::string system_prompt;
  std::string example_user;
  std::string example_assistant = "A";
  double timeout_s = 30.0;
};

// HTTP chat-completions-style client: one-token answer with per-token
// likelihoods for the option letters plus the 'no valid option' letter.
class RemoteOracle : public PlausibilityOracle {
 public:
  explicit RemoteOracle(RemoteOracleConfig config);
  ~RemoteOracle() override;

  OracleResponse query(const McqaQuery& query) override;

  static std::string build_request_body(const McqaQuery& query,
                                        const RemoteOracleConfig& config);
  static OracleResponse parse_response(const std::string& body,
                                       int num_options);

 private:
  RemoteOracleConfig config_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Replays recorded provider response bodies in request order, for offline
// tests of the remote wire contract.
class ReplayOracle : public PlausibilityOracle {
 public:
  explicit ReplayOracle(const std::string& fixture_path);

  OracleResponse query(const McqaQuery& query) override;

 private:
  std::vector<std::string> bodies_;
  size_t next_ = 0;
};

}  // namespace sgcp
