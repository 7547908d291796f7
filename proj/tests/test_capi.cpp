#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <unistd.h>

#include "kamstark/kamstark.h"

namespace {

using Json = nlohmann::json;

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("kamstark_capi_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

using ModelPtr = std::unique_ptr<ks_model, decltype(&ks_model_destroy)>;
using DiagPtr = std::unique_ptr<ks_diagonalization, decltype(&ks_diagonalization_destroy)>;
using ResultPtr = std::unique_ptr<ks_result, decltype(&ks_result_destroy)>;

ResultPtr run(const Json& cfg, ks_status& st) {
  ks_result* r = nullptr;
  st = ks_run(cfg.dump().c_str(), &r);
  return ResultPtr(r, ks_result_destroy);
}

}  // namespace

TEST_CASE("version, status names and usage") {
  CHECK(std::string(ks_version()).rfind("0.1.0", 0) == 0);
  CHECK(std::string(ks_status_name(KS_ERR_RESONANCE)) == "resonance");
  CHECK(std::string(ks_usage()).find("diagonalize") != std::string::npos);
}

TEST_CASE("model and diagonalization handles") {
  ks_model* raw = nullptr;
  REQUIRE(ks_model_create(-32, 32, 1.0 / 60.0, 1, &raw) == KS_OK);
  const ModelPtr model(raw, ks_model_destroy);
  double v = 0.0;
  REQUIRE(ks_model_disorder(model.get(), 0, &v) == KS_OK);
  CHECK(v == doctest::Approx(0.051687526765033).epsilon(1e-14));
  CHECK(ks_model_disorder(model.get(), 40, &v) == KS_ERR_INVALID);
  CHECK(std::string(ks_last_error()).find("40") != std::string::npos);

  ks_diagonalization* rd = nullptr;
  REQUIRE(ks_diagonalize(model.get(), 1e-12, &rd) == KS_OK);
  const DiagPtr diag(rd, ks_diagonalization_destroy);
  double d0 = 0.0;
  REQUIRE(ks_diagonalization_eigenvalue(diag.get(), 0, &d0) == KS_OK);
  CHECK(d0 == doctest::Approx(0.051643374750524).epsilon(1e-12));
  int steps = 0;
  REQUIRE(ks_diagonalization_steps(diag.get(), &steps) == KS_OK);
  CHECK(steps == 3);
  CHECK(ks_diagonalization_all_pass(diag.get()) == 1);
  CHECK(ks_diagonalization_eigenvalue(diag.get(), -33, &d0) == KS_ERR_INVALID);
}

TEST_CASE("invalid arguments report through the status and last error") {
  ks_model* raw = nullptr;
  CHECK(ks_model_create(5, 3, 0.1, 1, &raw) == KS_ERR_INVALID);
  CHECK(raw == nullptr);
  CHECK(std::string(ks_last_error()).find("window") != std::string::npos);
  CHECK(ks_model_create(-3, 3, -1.0, 1, &raw) == KS_ERR_INVALID);
  CHECK(ks_model_create(-3, 3, 0.1, 1, nullptr) == KS_ERR_INVALID);
  CHECK(ks_diagonalize(nullptr, 1e-12, nullptr) == KS_ERR_INVALID);
  ks_model_destroy(nullptr);
  ks_result_destroy(nullptr);
}

TEST_CASE("run: usage errors, unknown keys and a successful command") {
  ks_status st = KS_OK;
  auto none = run(Json::object(), st);
  CHECK(st == KS_ERR_USAGE);
  CHECK(std::string(ks_last_error()).find("usage") != std::string::npos);

  ks_result* r = nullptr;
  CHECK(ks_run("{not json", &r) == KS_ERR_USAGE);
  CHECK(r == nullptr);

  auto bad = run(Json{{"command", "diagonalize"}, {"windw", "-8:8"}}, st);
  CHECK(st == KS_ERR_INVALID);
  CHECK(std::string(ks_last_error()).find("windw") != std::string::npos);

  auto malformed = run(Json{{"command", "diagonalize"}, {"window", "8-8"}}, st);
  CHECK(st == KS_ERR_INVALID);
  CHECK(std::string(ks_last_error()).find("window") != std::string::npos);

  const TempDir tmp;
  const std::string out = (tmp.path / "diag.json").string();
  auto ok = run(Json{{"command", "diagonalize"}, {"window", "-16:16"}, {"out", out}}, st);
  REQUIRE(st == KS_OK);
  CHECK(ks_result_exit_code(ok.get()) == 0);
  const Json summary = Json::parse(ks_result_summary(ok.get()));
  CHECK(summary["command"] == "diagonalize");
  CHECK(summary["files"][0] == out);
  std::ifstream in(out);
  const Json artifact = Json::parse(in);
  CHECK(artifact["kind"] == "diagonalize");
  CHECK(artifact["config"]["window"] == "-16:16");
  CHECK(artifact["config_hash"].is_string());
}
