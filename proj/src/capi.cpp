#include "kamstark/kamstark.h"

#include <new>
#include <string>

#include "kamstark/pipeline.hpp"

struct ks_model {
  kamstark::LatticeModel model;
};

struct ks_diagonalization {
  kamstark::DiagonalizationResult result;
};

struct ks_result {
  int exit_code = 0;
  std::string summary;
};

namespace {

thread_local std::string last_error;

ks_status map_code(kamstark::Error::Code c) {
  switch (c) {
    case kamstark::Error::Code::bound: return KS_ERR_BOUND;
    case kamstark::Error::Code::invalid_argument: return KS_ERR_INVALID;
    case kamstark::Error::Code::io: return KS_ERR_IO;
    case kamstark::Error::Code::numeric: return KS_ERR_NUMERIC;
    case kamstark::Error::Code::resonance: return KS_ERR_RESONANCE;
  }
  return KS_ERR_INTERNAL;
}

template <class F>
ks_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return KS_OK;
  } catch (const kamstark::Error& e) {
    last_error = e.what();
    return map_code(e.code());
  } catch (const kamstark::Json::exception& e) {
    last_error = std::string("config: ") + e.what();
    return KS_ERR_USAGE;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return KS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return KS_ERR_INTERNAL;
  }
}

ks_status null_argument(const char* what) {
  last_error = std::string(what) + ": null pointer";
  return KS_ERR_INVALID;
}

}  // namespace

extern "C" {

const char* ks_version(void) {
  static const std::string v = kamstark::version_string();
  return v.c_str();
}

const char* ks_last_error(void) { return last_error.c_str(); }

const char* ks_usage(void) {
  static const std::string u = kamstark::usage_text();
  return u.c_str();
}

const char* ks_status_name(ks_status s) {
  switch (s) {
    case KS_OK: return "ok";
    case KS_ERR_BOUND: return "bound violation";
    case KS_ERR_USAGE: return "usage error";
    case KS_ERR_INVALID: return "invalid argument";
    case KS_ERR_IO: return "i/o error";
    case KS_ERR_NUMERIC: return "numeric failure";
    case KS_ERR_RESONANCE: return "resonance";
    case KS_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

ks_status ks_model_create(int lo, int hi, double delta, uint64_t seed, ks_model** out) {
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new ks_model{kamstark::LatticeModel::sample(kamstark::SiteWindow(lo, hi), delta, seed)};
  });
}

void ks_model_destroy(ks_model* m) { delete m; }

ks_status ks_model_disorder(const ks_model* m, int site, double* out) {
  if (!m || !out) return null_argument("model");
  return guarded([&] {
    if (!m->model.window.contains(site)) kamstark::fail(kamstark::Error::Code::invalid_argument, "site " + std::to_string(site) + " outside window " + m->model.window.to_string());
    *out = m->model.v(site);
  });
}

ks_status ks_diagonalize(const ks_model* m, double target, ks_diagonalization** out) {
  if (!m || !out) return null_argument("model");
  *out = nullptr;
  return guarded([&] {
    kamstark::DiagonalizeOptions opt;
    opt.target = target;
    *out = new ks_diagonalization{kamstark::diagonalize(m->model, opt)};
  });
}

void ks_diagonalization_destroy(ks_diagonalization* d) { delete d; }

ks_status ks_diagonalization_eigenvalue(const ks_diagonalization* d, int site, double* out) {
  if (!d || !out) return null_argument("diagonalization");
  return guarded([&] {
    if (!d->result.model.window.contains(site)) kamstark::fail(kamstark::Error::Code::invalid_argument, "site " + std::to_string(site) + " outside window " + d->result.model.window.to_string());
    *out = d->result.eigenvalue(site).value;
  });
}

ks_status ks_diagonalization_steps(const ks_diagonalization* d, int* out) {
  if (!d || !out) return null_argument("diagonalization");
  *out = d->result.steps;
  last_error.clear();
  return KS_OK;
}

int ks_diagonalization_all_pass(const ks_diagonalization* d) { return d && d->result.all_pass() ? 1 : 0; }

ks_status ks_run(const char* config_json, ks_result** out) {
  if (!config_json || !out) return null_argument("config");
  *out = nullptr;
  kamstark::Json config;
  try {
    config = kamstark::Json::parse(config_json);
  } catch (const kamstark::Json::exception& e) {
    last_error = std::string("config: ") + e.what();
    return KS_ERR_USAGE;
  }
  if (!config.is_object() || !config.contains("command")) {
    last_error = "command: missing\n" + kamstark::usage_text();
    return KS_ERR_USAGE;
  }
  return guarded([&] {
    const kamstark::CommandResult r = kamstark::run_command(config);
    *out = new ks_result{r.exit_code, r.summary.dump()};
  });
}

void ks_result_destroy(ks_result* r) { delete r; }

int ks_result_exit_code(const ks_result* r) { return r ? r->exit_code : 2; }

const char* ks_result_summary(const ks_result* r) { return r ? r->summary.c_str() : ""; }

}  // extern "C"
