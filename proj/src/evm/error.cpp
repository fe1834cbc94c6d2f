#include "evm/error.hpp"

namespace evm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::unknown_variable: return "unknown_variable";
    case ErrorCode::domain_error: return "domain_error";
    case ErrorCode::fit_not_converged: return "fit_not_converged";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::internal: return "internal";
  }
  return "internal";
}

nlohmann::json Error::to_json() const {
  return {{"code", std::string(to_string(code_))}, {"message", what()}, {"detail", detail_}};
}

}  // namespace evm
