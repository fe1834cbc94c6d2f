#include "evm/evm.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "evm/error.hpp"
#include "evm/serialize.hpp"
#include "evm/service.hpp"

struct evm_session {
  evm::Session rep;
};

namespace {

thread_local std::string g_last_error;

char* copy_out(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_out(char** out, const std::string& s) {
  if (out) *out = copy_out(s);
}

evm_status status_for(evm::ErrorCode code) {
  switch (code) {
    case evm::ErrorCode::parse_error: return EVM_PARSE_ERROR;
    case evm::ErrorCode::unknown_variable: return EVM_UNKNOWN_VARIABLE;
    case evm::ErrorCode::domain_error: return EVM_DOMAIN_ERROR;
    case evm::ErrorCode::fit_not_converged: return EVM_FIT_NOT_CONVERGED;
    case evm::ErrorCode::unsupported: return EVM_UNSUPPORTED;
    case evm::ErrorCode::internal: return EVM_INTERNAL;
  }
  return EVM_INTERNAL;
}

evm_status fail(evm_status status, const std::string& code, const std::string& message) {
  g_last_error = nlohmann::json{{"code", code}, {"message", message}, {"detail", nlohmann::json::object()}}.dump();
  return status;
}

template <typename Fn>
evm_status guard(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return EVM_OK;
  } catch (const evm::Error& e) {
    g_last_error = e.to_json().dump();
    return status_for(e.code());
  } catch (const evm::NotFound& e) {
    return fail(EVM_NOT_FOUND, "not_found", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(EVM_PARSE_ERROR, "parse_error", e.what());
  } catch (const std::exception& e) {
    return fail(EVM_INTERNAL, "internal", e.what());
  }
}

nlohmann::json parse(const char* text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw evm::Error(evm::ErrorCode::parse_error, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

#define EVM_REQUIRE(cond)                                                   \
  do {                                                                      \
    if (!(cond)) return fail(EVM_INVALID_ARGUMENT, "invalid_argument", #cond); \
  } while (0)

extern "C" {

const char* evm_version(void) { return "1.0.0"; }

const char* evm_status_name(evm_status status) {
  switch (status) {
    case EVM_OK: return "ok";
    case EVM_PARSE_ERROR: return "parse_error";
    case EVM_UNKNOWN_VARIABLE: return "unknown_variable";
    case EVM_DOMAIN_ERROR: return "domain_error";
    case EVM_FIT_NOT_CONVERGED: return "fit_not_converged";
    case EVM_UNSUPPORTED: return "unsupported";
    case EVM_INTERNAL: return "internal";
    case EVM_NOT_FOUND: return "not_found";
    case EVM_INVALID_ARGUMENT: return "invalid_argument";
  }
  return "internal";
}

const char* evm_last_error(void) { return g_last_error.c_str(); }

evm_session* evm_session_create(uint64_t base_seed) {
  try {
    return new evm_session{evm::Session(base_seed)};
  } catch (...) {
    return nullptr;
  }
}

void evm_session_destroy(evm_session* session) { delete session; }

void evm_free(char* text) { std::free(text); }

evm_status evm_dataset_load_csv(evm_session* session, const char* csv, size_t csv_len, const char* name,
                                const char* id, char** out_json) {
  EVM_REQUIRE(session && (csv || csv_len == 0));
  return guard([&] {
    auto d = evm::load_csv(std::string_view(csv ? csv : "", csv_len), name ? name : "dataset");
    std::string key = session->rep.add_dataset(std::move(d), id ? std::optional<std::string>(id) : std::nullopt);
    set_out(out_json, nlohmann::json{{"id", key}, {"schema", evm::schema_json(*session->rep.dataset(key))}}.dump());
  });
}

evm_status evm_dataset_pipeline(evm_session* session, const char* dataset_id, const char* steps_json, char** out_json) {
  EVM_REQUIRE(session && dataset_id && steps_json);
  return guard([&] {
    auto steps = evm::pipeline_from_json(parse(steps_json));
    std::string key = session->rep.apply_pipeline(dataset_id, steps);
    set_out(out_json, nlohmann::json{{"id", key}, {"schema", evm::schema_json(*session->rep.dataset(key))}}.dump());
  });
}

evm_status evm_fit(evm_session* session, const char* request_json, char** out_json) {
  EVM_REQUIRE(session && request_json);
  return guard([&] {
    auto j = parse(request_json);
    if (!j.contains("dataset") || !j.at("dataset").is_string())
      throw evm::Error(evm::ErrorCode::parse_error, "fit request needs a 'dataset' id");
    std::string dataset_id = j.at("dataset").get<std::string>();
    std::string id = session->rep.fit(dataset_id, evm::model_spec_from_json(j));
    auto out = evm::model_summary_json(session->rep.model(id)->model);
    out["model_id"] = id;
    out["dataset"] = dataset_id;
    set_out(out_json, out.dump());
  });
}

evm_status evm_model_export(evm_session* session, const char* model_id, char** out_json) {
  EVM_REQUIRE(session && model_id);
  return guard([&] {
    auto m = session->rep.model(model_id);
    auto out = evm::model_export_json(m->model);
    out["model_id"] = model_id;
    out["dataset"] = m->dataset_id;
    set_out(out_json, out.dump());
  });
}

evm_status evm_model_draws(evm_session* session, const char* model_id, size_t n_draws, uint64_t seed, char** out_json) {
  EVM_REQUIRE(session && model_id);
  return guard([&] { set_out(out_json, evm::predictive_table_json(session->rep.draws(model_id, n_draws, seed)).dump()); });
}

evm_status evm_model_residuals(evm_session* session, const char* model_id, char** out_json) {
  EVM_REQUIRE(session && model_id);
  return guard([&] {
    auto m = session->rep.model(model_id);
    set_out(out_json, evm::residuals_json(session->rep.model_residuals(model_id), m->model.spec.label).dump());
  });
}

evm_status evm_check(evm_session* session, const char* request_json, char** layout_json, char** table_csv) {
  EVM_REQUIRE(session && request_json);
  return guard([&] {
    auto result = session->rep.check(evm::check_request_from_json(parse(request_json)));
    set_out(layout_json, evm::to_json(result.layout).dump(2));
    set_out(table_csv, evm::predictive_table_csv(result.table, result.layout.residual_view));
  });
}

evm_status evm_http_handle(evm_session* session, const char* method, const char* path, const char* query,
                           const char* body, size_t body_len, int* http_status, char** response_body) {
  EVM_REQUIRE(session && method && path && http_status);
  return guard([&] {
    auto r = session->rep.handle(method, path, query ? query : "", std::string_view(body ? body : "", body_len));
    *http_status = r.status;
    set_out(response_body, r.body);
  });
}

}  // extern "C"
