#include "evm/service.hpp"

#include <charconv>
#include <vector>

#include "evm/error.hpp"
#include "evm/serialize.hpp"

namespace evm {

namespace {

using nlohmann::json;

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    auto slash = path.find('/');
    auto part = path.substr(0, slash);
    if (!part.empty()) parts.push_back(part);
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return parts;
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size()) {
      int v = 0;
      std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      out += static_cast<char>(v);
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::map<std::string, std::string> parse_query(std::string_view q) {
  std::map<std::string, std::string> out;
  while (!q.empty()) {
    auto amp = q.find('&');
    auto pair = q.substr(0, amp);
    auto eq = pair.find('=');
    if (!pair.empty())
      out[url_decode(pair.substr(0, eq))] = eq == std::string_view::npos ? "" : url_decode(pair.substr(eq + 1));
    if (amp == std::string_view::npos) break;
    q.remove_prefix(amp + 1);
  }
  return out;
}

std::uint64_t parse_unsigned(const std::string& text, const char* what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorCode::parse_error, std::string("invalid ") + what + " '" + text + "'");
  return v;
}

json parse_body(std::string_view body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("request body is not valid JSON: ") + e.what());
  }
}

std::size_t checked_draws(std::size_t n) {
  if (n < 1 || n > kMaxDraws)
    throw Error(ErrorCode::domain_error, "n_draws must be between 1 and " + std::to_string(kMaxDraws), {{"n_draws", n}});
  return n;
}

HttpResponse respond(int status, const json& body) { return {status, body.dump()}; }

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse_error:
    case ErrorCode::unknown_variable:
    case ErrorCode::unsupported: return 400;
    case ErrorCode::domain_error:
    case ErrorCode::fit_not_converged: return 422;
    case ErrorCode::internal: return 500;
  }
  return 500;
}

CheckRequest check_request_from_json(const json& j) {
  try {
    CheckRequest r;
    r.dataset_id = j.at("dataset").get<std::string>();
    r.chart = chart_spec_from_json(j.value("chart", json::object()));
    if (j.contains("models"))
      for (const auto& id : j.at("models")) r.model_ids.push_back(id.get<std::string>());
    r.n_draws = j.value("n_draws", kDefaultDraws);
    if (j.contains("seed") && !j.at("seed").is_null()) r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("malformed check request: ") + e.what());
  }
}

std::string Session::next_id(char prefix) { return std::string(1, prefix) + std::to_string(++counter_); }

std::string Session::add_dataset(Dataset d, std::optional<std::string> id) {
  auto stored = std::make_shared<const Dataset>(std::move(d));
  std::unique_lock lock(mutex_);
  std::string key = id ? *id : next_id('d');
  if (datasets_.count(key)) throw Error(ErrorCode::domain_error, "dataset id '" + key + "' already exists");
  datasets_.emplace(key, std::move(stored));
  return key;
}

std::shared_ptr<const Dataset> Session::dataset(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = datasets_.find(id);
  if (it == datasets_.end()) throw NotFound("unknown dataset '" + id + "'");
  return it->second;
}

std::string Session::apply_pipeline(const std::string& dataset_id, const std::vector<PipelineStep>& steps) {
  auto d = dataset(dataset_id);
  return add_dataset(evm::apply_pipeline(*d, steps));
}

std::string Session::fit(const std::string& dataset_id, const ModelSpec& spec) {
  auto d = dataset(dataset_id);
  auto stored = std::make_shared<const StoredModel>(StoredModel{fit_model(*d, spec), dataset_id});
  std::unique_lock lock(mutex_);
  std::string id = next_id('m');
  models_.emplace(id, std::move(stored));
  return id;
}

std::shared_ptr<const StoredModel> Session::model(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = models_.find(id);
  if (it == models_.end()) throw NotFound("unknown model '" + id + "'");
  return it->second;
}

PredictiveTable Session::draws(const std::string& model_id, std::size_t n, std::optional<std::uint64_t> seed) const {
  auto m = model(model_id);
  auto d = dataset(m->dataset_id);
  if (!m->model.converged)
    throw Error(ErrorCode::fit_not_converged, "model did not converge",
                {{"model", m->model.spec.label}, {"diagnostic", m->model.diagnostic}});
  return assemble_check(*d, {m->model}, checked_draws(n), seed.value_or(base_seed_));
}

ResidualColumn Session::model_residuals(const std::string& model_id) const {
  auto m = model(model_id);
  return residuals(m->model, *dataset(m->dataset_id));
}

CheckResult Session::check(const CheckRequest& request) const {
  auto d = dataset(request.dataset_id);
  std::vector<FittedModel> models;
  for (const auto& id : request.model_ids) {
    auto m = model(id);
    if (m->dataset_id != request.dataset_id)
      throw Error(ErrorCode::domain_error,
                  "model '" + id + "' was fit on dataset '" + m->dataset_id + "', not '" + request.dataset_id + "'",
                  {{"model", id}});
    models.push_back(m->model);
  }
  std::size_t n = models.empty() ? request.n_draws : checked_draws(request.n_draws);
  CheckResult out;
  out.table = assemble_check(*d, models, n, request.seed.value_or(base_seed_));
  out.layout = compose_check(request.chart, out.table);
  return out;
}

HttpResponse Session::handle(std::string_view method, std::string_view path, std::string_view query,
                             std::string_view body) {
  try {
    auto parts = split_path(path);
    auto params = parse_query(query);
    auto is = [&](std::string_view m, std::initializer_list<std::string_view> shape) {
      if (method != m || parts.size() != shape.size()) return false;
      std::size_t i = 0;
      for (auto s : shape) {
        if (s != "*" && parts[i] != s) return false;
        ++i;
      }
      return true;
    };

    if (is("GET", {"health"})) return respond(200, {{"status", "ok"}});
    if (is("GET", {"families"})) {
      json out = json::array();
      for (auto k : kAllFamilies)
        out.push_back({{"name", std::string(to_string(k))}, {"has_scale", has_scale(k)},
                       {"support", std::string(support_description(k))}});
      return respond(200, out);
    }
    if (is("POST", {"datasets"})) {
      if (body.empty()) throw Error(ErrorCode::parse_error, "empty request body");
      std::string name = params.count("name") ? params["name"] : "dataset";
      LoadOptions opts;
      if (params.count("discrete_threshold")) opts.discrete_threshold = parse_unsigned(params["discrete_threshold"], "threshold");
      std::string id = add_dataset(load_csv(body, name, opts));
      return respond(201, {{"id", id}, {"schema", schema_json(*dataset(id))}});
    }
    if (is("GET", {"datasets", "*"})) {
      std::string id(parts[1]);
      return respond(200, {{"id", id}, {"schema", schema_json(*dataset(id))}});
    }
    if (is("POST", {"datasets", "*", "pipeline"})) {
      auto steps = pipeline_from_json(parse_body(body));
      std::string id = apply_pipeline(std::string(parts[1]), steps);
      return respond(201, {{"id", id}, {"schema", schema_json(*dataset(id))}});
    }
    if (is("POST", {"describe"})) {
      auto spec = model_spec_from_json(parse_body(body));
      json warnings = spec.location.warnings;
      if (spec.scale)
        for (const auto& w : spec.scale->warnings) warnings.push_back(w);
      return respond(200, {{"description", describe_model(spec)}, {"warnings", warnings}});
    }
    if (is("POST", {"fit"})) {
      json j = parse_body(body);
      std::string dataset_id;
      try {
        dataset_id = j.at("dataset").get<std::string>();
      } catch (const json::exception&) {
        throw Error(ErrorCode::parse_error, "fit request needs a 'dataset' id");
      }
      auto spec = model_spec_from_json(j);
      std::string id = fit(dataset_id, spec);
      json out = model_summary_json(model(id)->model);
      out["model_id"] = id;
      out["dataset"] = dataset_id;
      return respond(200, out);
    }
    if (is("GET", {"models", "*"})) {
      std::string id(parts[1]);
      auto m = model(id);
      json out = model_summary_json(m->model);
      out["model_id"] = id;
      out["dataset"] = m->dataset_id;
      return respond(200, out);
    }
    if (is("GET", {"models", "*", "draws"})) {
      std::size_t n = params.count("n") ? parse_unsigned(params["n"], "n") : kDefaultDraws;
      std::optional<std::uint64_t> seed;
      if (params.count("seed")) seed = parse_unsigned(params["seed"], "seed");
      return respond(200, predictive_table_json(draws(std::string(parts[1]), n, seed)));
    }
    if (is("GET", {"models", "*", "residuals"})) {
      std::string id(parts[1]);
      return respond(200, residuals_json(model_residuals(id), model(id)->model.spec.label));
    }
    if (is("POST", {"check"})) {
      json j = parse_body(body);
      auto request = check_request_from_json(j);
      auto result = check(request);
      json out = to_json(result.layout);
      if (j.value("embed_data", true)) out["data"] = predictive_table_json(result.table, result.layout.residual_view)["records"];
      return respond(200, out);
    }
    return respond(404, {{"code", "not_found"}, {"message", "no route for " + std::string(method) + " " + std::string(path)},
                         {"detail", json::object()}});
  } catch (const NotFound& e) {
    return respond(404, {{"code", "not_found"}, {"message", e.what()}, {"detail", json::object()}});
  } catch (const Error& e) {
    return respond(http_status_for(e.code()), e.to_json());
  } catch (const std::exception& e) {
    return respond(500, Error(ErrorCode::internal, e.what()).to_json());
  }
}

}  // namespace evm
