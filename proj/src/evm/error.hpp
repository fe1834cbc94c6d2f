#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace evm {

enum class ErrorCode {
  parse_error,
  unknown_variable,
  domain_error,
  fit_not_converged,
  unsupported,
  internal,
};

std::string_view to_string(ErrorCode code);

// Every engine failure is raised as an Error carrying exactly one code and an
// optional structured payload (offending rows, character position, step index).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, nlohmann::json detail = nlohmann::json::object())
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& detail() const noexcept { return detail_; }

  nlohmann::json to_json() const;

 private:
  ErrorCode code_;
  nlohmann::json detail_;
};

}  // namespace evm
