#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "evm/chart.hpp"
#include "evm/dataset.hpp"
#include "evm/error.hpp"
#include "evm/fit.hpp"
#include "evm/predict.hpp"

namespace evm {

inline constexpr std::size_t kDefaultDraws = 50;
inline constexpr std::size_t kMaxDraws = 500;

// Raised for ids that are not in the catalog; maps to HTTP 404.
class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StoredModel {
  FittedModel model;
  std::string dataset_id;
};

struct CheckRequest {
  std::string dataset_id;
  ChartSpec chart;
  std::vector<std::string> model_ids;
  std::size_t n_draws = kDefaultDraws;
  std::optional<std::uint64_t> seed;
};

struct CheckResult {
  PredictiveTable table;
  CheckLayout layout;
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

// Catalog of immutable datasets and fitted models. Lookups take a shared lock;
// fitting and sampling run outside the lock.
class Session {
 public:
  explicit Session(std::uint64_t base_seed = 0) : base_seed_(base_seed) {}

  std::uint64_t base_seed() const { return base_seed_; }

  std::string add_dataset(Dataset d, std::optional<std::string> id = std::nullopt);
  std::shared_ptr<const Dataset> dataset(const std::string& id) const;
  std::string apply_pipeline(const std::string& dataset_id, const std::vector<PipelineStep>& steps);

  std::string fit(const std::string& dataset_id, const ModelSpec& spec);
  std::shared_ptr<const StoredModel> model(const std::string& id) const;

  PredictiveTable draws(const std::string& model_id, std::size_t n, std::optional<std::uint64_t> seed) const;
  ResidualColumn model_residuals(const std::string& model_id) const;
  CheckResult check(const CheckRequest& request) const;

  // Routes one HTTP request. query is the raw query string without '?'.
  HttpResponse handle(std::string_view method, std::string_view path, std::string_view query,
                      std::string_view body);

 private:
  std::string next_id(char prefix);

  std::uint64_t base_seed_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
  std::map<std::string, std::shared_ptr<const StoredModel>> models_;
  std::uint64_t counter_ = 0;
};

int http_status_for(ErrorCode code);

CheckRequest check_request_from_json(const nlohmann::json& j);

}  // namespace evm
