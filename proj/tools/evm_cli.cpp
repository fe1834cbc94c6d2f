// Headless front end for the engine: fits models, writes model checks, and
// serves the JSON API. Talks to the engine exclusively through the C API.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "evm/evm.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kEngineError = 2;
constexpr int kUsageError = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown after an engine call fails; the ApiError JSON is already captured.
struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CString {
  char* ptr = nullptr;
  ~CString() { evm_free(ptr); }
  std::string str() const { return ptr ? std::string(ptr) : std::string(); }
};

struct SessionDeleter {
  void operator()(evm_session* s) const { evm_session_destroy(s); }
};
using SessionPtr = std::unique_ptr<evm_session, SessionDeleter>;

void check(evm_status status) {
  if (status != EVM_OK) throw EngineError(evm_last_error());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << text;
}

// Accepts inline JSON or a path to a JSON file.
json json_argument(const std::string& value, const char* what) {
  std::string text = value;
  auto first = value.find_first_not_of(" \t\n");
  if (first == std::string::npos || (value[first] != '{' && value[first] != '[')) text = read_file(value);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("invalid ") + what + " JSON: " + e.what());
  }
}

// "x=study_time,y=absences,row=g_edu,residuals" or JSON.
json chart_argument(const std::string& value) {
  auto first = value.find_first_not_of(" \t\n");
  if (first != std::string::npos && value[first] == '{') return json_argument(value, "chart");
  if (fs::exists(value)) return json_argument(value, "chart");
  json chart = json::object();
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) {
      if (item == "residuals") chart["show_residuals"] = true;
      else throw UsageError("chart item '" + item + "' is not key=value");
      continue;
    }
    std::string key = item.substr(0, eq);
    if (key != "x" && key != "y" && key != "row" && key != "column")
      throw UsageError("unknown chart encoding '" + key + "'");
    chart[key] = item.substr(eq + 1);
  }
  return chart;
}

std::string load_dataset(evm_session* s, const std::string& path, const std::string& pipeline) {
  std::string csv = read_file(path);
  CString out;
  check(evm_dataset_load_csv(s, csv.data(), csv.size(), fs::path(path).stem().string().c_str(), nullptr, &out.ptr));
  std::string id = json::parse(out.str()).at("id").get<std::string>();
  if (!pipeline.empty()) {
    json steps = json_argument(pipeline, "pipeline");
    if (steps.is_array()) steps = json{{"steps", steps}};
    CString piped;
    check(evm_dataset_pipeline(s, id.c_str(), steps.dump().c_str(), &piped.ptr));
    id = json::parse(piped.str()).at("id").get<std::string>();
  }
  return id;
}

std::string fit_one(evm_session* s, const std::string& dataset, json request) {
  request["dataset"] = dataset;
  CString out;
  check(evm_fit(s, request.dump().c_str(), &out.ptr));
  return json::parse(out.str()).at("model_id").get<std::string>();
}

json export_model(evm_session* s, const std::string& id) {
  CString out;
  check(evm_model_export(s, id.c_str(), &out.ptr));
  return json::parse(out.str());
}

struct FitArgs {
  std::string data, family, location, scale, label, pipeline, out;
};

int run_fit(const FitArgs& a) {
  SessionPtr s(evm_session_create(0));
  std::string dataset = load_dataset(s.get(), a.data, a.pipeline);
  json request{{"family", a.family}, {"location", a.location}};
  if (!a.scale.empty()) request["scale"] = a.scale;
  if (!a.label.empty()) request["label"] = a.label;
  std::string text = export_model(s.get(), fit_one(s.get(), dataset, request)).dump(2) + "\n";
  if (a.out.empty() || a.out == "-") std::cout << text;
  else write_file(a.out, text);
  return 0;
}

struct CheckArgs {
  std::string data, chart, models, pipeline, out;
  std::size_t draws = 50;
  std::uint64_t seed = 0;
};

int run_check(const CheckArgs& a) {
  SessionPtr s(evm_session_create(a.seed));
  std::string dataset = load_dataset(s.get(), a.data, a.pipeline);
  json models = a.models.empty() ? json::array() : json_argument(a.models, "models");
  if (models.is_object()) models = json::array({models});

  json ids = json::array();
  json exports = json::array();
  for (const auto& m : models) {
    std::string id = fit_one(s.get(), dataset, m);
    ids.push_back(id);
    exports.push_back(export_model(s.get(), id));
  }
  json request{{"dataset", dataset}, {"chart", chart_argument(a.chart)}, {"models", ids},
               {"n_draws", a.draws}, {"seed", a.seed}};
  CString layout, table;
  check(evm_check(s.get(), request.dump().c_str(), &layout.ptr, &table.ptr));

  fs::path dir(a.out);
  write_file(dir / "layout.json", layout.str() + "\n");
  write_file(dir / "table.csv", table.str());
  write_file(dir / "models.json", exports.dump(2) + "\n");
  return 0;
}

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir;
  std::uint64_t seed = 0;
};

int run_serve(const ServeArgs& a) {
  SessionPtr s(evm_session_create(a.seed));
  if (!a.data_dir.empty()) {
    for (const auto& entry : fs::directory_iterator(a.data_dir)) {
      if (entry.path().extension() != ".csv") continue;
      std::string csv = read_file(entry.path());
      std::string stem = entry.path().stem().string();
      CString out;
      if (evm_dataset_load_csv(s.get(), csv.data(), csv.size(), stem.c_str(), stem.c_str(), &out.ptr) == EVM_OK)
        std::cerr << "loaded dataset '" << stem << "'\n";
      else
        std::cerr << "skipped " << entry.path() << ": " << evm_last_error() << "\n";
    }
  }

  httplib::Server server;
  auto route = [&](const httplib::Request& req, httplib::Response& res) {
    std::string query;
    for (const auto& [k, v] : req.params) {
      if (!query.empty()) query += '&';
      query += httplib::detail::encode_query_param(k) + "=" + httplib::detail::encode_query_param(v);
    }
    int status = 500;
    CString body;
    if (evm_http_handle(s.get(), req.method.c_str(), req.path.c_str(), query.c_str(), req.body.data(), req.body.size(),
                        &status, &body.ptr) != EVM_OK) {
      res.status = 500;
      res.set_content(evm_last_error(), "application/json");
      return;
    }
    res.status = status;
    res.set_content(body.str(), "application/json");
  };
  server.Get(".*", route);
  server.Post(".*", route);
  std::cerr << "listening on http://" << a.host << ":" << a.port << "\n";
  if (!server.listen(a.host, a.port)) {
    std::cerr << "cannot listen on " << a.host << ":" << a.port << "\n";
    return kUsageError;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exploratory visual modeling engine"};
  app.require_subcommand(1);

  ServeArgs serve;
  if (const char* env = std::getenv("EVM_PORT")) serve.port = std::atoi(env);
  auto* serve_cmd = app.add_subcommand("serve", "Serve the JSON API over HTTP");
  serve_cmd->add_option("--port", serve.port, "Port (default from EVM_PORT, else 8080)");
  serve_cmd->add_option("--host", serve.host, "Interface to bind");
  serve_cmd->add_option("--data-dir", serve.data_dir, "Directory of CSV files to preload (id = file stem)")
      ->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--seed", serve.seed, "Session base seed");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one model and write it as JSON");
  fit_cmd->add_option("--data", fit.data, "CSV file")->required();
  fit_cmd->add_option("--family", fit.family, "normal | log_normal | logit_normal | logistic | poisson | negative_binomial")
      ->required();
  fit_cmd->add_option("--location", fit.location, "Location formula, e.g. 'y ~ a + b'")->required();
  fit_cmd->add_option("--scale", fit.scale, "Scale formula, e.g. '~ a'");
  fit_cmd->add_option("--label", fit.label, "Model label");
  fit_cmd->add_option("--pipeline", fit.pipeline, "Filters/transforms JSON (inline or file)");
  fit_cmd->add_option("--out", fit.out, "Output file (default stdout)");

  CheckArgs chk;
  auto* check_cmd = app.add_subcommand("check", "Fit models and write a model check layout and predictive table");
  check_cmd->add_option("--data", chk.data, "CSV file")->required();
  check_cmd->add_option("--chart", chk.chart, "Chart spec: 'x=..,y=..,row=..,column=..[,residuals]' or JSON")->required();
  check_cmd->add_option("--models", chk.models, "JSON list of {family, location, scale, label} (inline or file)");
  check_cmd->add_option("--draws", chk.draws, "Predictive draws per model (1-500)");
  check_cmd->add_option("--seed", chk.seed, "Sampling seed");
  check_cmd->add_option("--pipeline", chk.pipeline, "Filters/transforms JSON (inline or file)");
  check_cmd->add_option("--out", chk.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return run_serve(serve);
    if (*fit_cmd) return run_fit(fit);
    if (*check_cmd) return run_check(chk);
  } catch (const EngineError& e) {
    std::cerr << e.what() << "\n";
    return kEngineError;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return 0;
}
