#include "xreid/xreid.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <optional>
#include <string>

#include "../core/common.hpp"
#include "../core/config.hpp"
#include "../core/pipeline.hpp"
#include "../core/train.hpp"

namespace {

thread_local std::string g_last_error = "";

xr_status status_of(xreid::Errc c) {
    switch (c) {
        case xreid::Errc::invalid_argument: return XR_ERR_INVALID_ARGUMENT;
        case xreid::Errc::io: return XR_ERR_IO;
        case xreid::Errc::state: return XR_ERR_STATE;
        case xreid::Errc::numeric: return XR_ERR_NUMERIC;
    }
    return XR_ERR_UNKNOWN;
}

template <typename F>
xr_status guarded(F&& f) {
    try {
        f();
        return XR_OK;
    } catch (const xreid::Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return XR_ERR_UNKNOWN;
    } catch (...) {
        g_last_error = "unknown failure";
        return XR_ERR_UNKNOWN;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

xr_status require(bool ok, const char* msg) {
    if (ok) return XR_OK;
    g_last_error = msg;
    return XR_ERR_INVALID_ARGUMENT;
}

double cmc_at(const xreid::RankingResult& r, std::size_t rank) {
    return rank <= r.cmc.size() ? r.cmc[rank - 1] : -1.0;
}

void fill_ranking(const xreid::RankingResult& r, xr_ranking* out) {
    if (!out) return;
    out->cmc1 = cmc_at(r, 1);
    out->cmc5 = cmc_at(r, 5);
    out->cmc10 = cmc_at(r, 10);
    out->cmc20 = cmc_at(r, 20);
    out->map = r.map;
    out->n_queries = r.n_queries_evaluated;
    out->n_queries_skipped = r.n_queries_skipped;
}

}  // namespace

struct xr_config {
    xreid::ExperimentConfig cfg;
};

extern "C" {

const char* xr_last_error(void) { return g_last_error.c_str(); }

const char* xr_version(void) { return "0.1.0"; }

void xr_string_free(char* s) { std::free(s); }

xr_status xr_config_load(const char* path, xr_config** out) {
    if (xr_status st = require(path && out, "xr_config_load: NULL argument")) return st;
    *out = nullptr;
    return guarded([&] { *out = new xr_config{xreid::load_config(path)}; });
}

xr_status xr_config_parse(const char* text, xr_config** out) {
    if (xr_status st = require(text && out, "xr_config_parse: NULL argument")) return st;
    *out = nullptr;
    return guarded([&] { *out = new xr_config{xreid::parse_config(text)}; });
}

void xr_config_free(xr_config* cfg) { delete cfg; }

xr_status xr_config_override(xr_config* cfg, const char* out_dir, int has_seed, uint64_t seed) {
    if (xr_status st = require(cfg != nullptr, "xr_config_override: NULL config")) return st;
    return guarded([&] {
        std::optional<std::string> dir;
        if (out_dir) dir = std::string(out_dir);
        std::optional<std::uint64_t> sd;
        if (has_seed) sd = seed;
        xreid::apply_overrides(cfg->cfg, dir, sd);
    });
}

xr_status xr_config_render(const xr_config* cfg, char** out) {
    if (xr_status st = require(cfg && out, "xr_config_render: NULL argument")) return st;
    *out = nullptr;
    return guarded([&] {
        xreid::ExperimentConfig resolved = cfg->cfg;
        xreid::resolve_config(resolved);
        *out = dup_string(xreid::render_resolved(resolved));
        if (!*out) xreid::fail(xreid::Errc::io, "out of memory");
    });
}

xr_status xr_config_hash(const xr_config* cfg, char** out) {
    if (xr_status st = require(cfg && out, "xr_config_hash: NULL argument")) return st;
    *out = nullptr;
    return guarded([&] {
        xreid::ExperimentConfig resolved = cfg->cfg;
        xreid::resolve_config(resolved);
        *out = dup_string(xreid::config_hash(resolved));
        if (!*out) xreid::fail(xreid::Errc::io, "out of memory");
    });
}

xr_status xr_run_synth(const xr_config* cfg) {
    if (xr_status st = require(cfg != nullptr, "xr_run_synth: NULL config")) return st;
    return guarded([&] { xreid::cmd_synth(cfg->cfg); });
}

xr_status xr_run_train_style(const xr_config* cfg) {
    if (xr_status st = require(cfg != nullptr, "xr_run_train_style: NULL config")) return st;
    return guarded([&] { xreid::cmd_train_style(cfg->cfg); });
}

xr_status xr_run_generate(const xr_config* cfg) {
    if (xr_status st = require(cfg != nullptr, "xr_run_generate: NULL config")) return st;
    return guarded([&] { xreid::cmd_generate(cfg->cfg); });
}

xr_status xr_run_train(const xr_config* cfg) {
    if (xr_status st = require(cfg != nullptr, "xr_run_train: NULL config")) return st;
    return guarded([&] { xreid::cmd_train(cfg->cfg); });
}

xr_status xr_run_eval(const xr_config* cfg, xr_ranking* result) {
    if (xr_status st = require(cfg != nullptr, "xr_run_eval: NULL config")) return st;
    return guarded([&] { fill_ranking(xreid::cmd_eval(cfg->cfg), result); });
}

xr_status xr_run_oracle(const xr_config* cfg, xr_ranking* result) {
    if (xr_status st = require(cfg != nullptr, "xr_run_oracle: NULL config")) return st;
    return guarded([&] { fill_ranking(xreid::cmd_oracle(cfg->cfg), result); });
}

xr_status xr_run_gradcheck(const xr_config* cfg, int64_t n_params, double eps,
                           double* max_rel_err) {
    if (xr_status st = require(cfg != nullptr, "xr_run_gradcheck: NULL config")) return st;
    return guarded([&] {
        double v = xreid::cmd_gradcheck(cfg->cfg, static_cast<long>(n_params), eps);
        if (max_rel_err) *max_rel_err = v;
    });
}

double xr_lr_at(int64_t epoch, double base_lr, int64_t decay_period) {
    if (decay_period <= 0) decay_period = 40;
    return xreid::lr_at(static_cast<long>(epoch), base_lr, static_cast<long>(decay_period));
}

}  // extern "C"
