#include "romx.h"

#include <cstring>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "attribution.hpp"
#include "common.hpp"
#include "kshap.hpp"
#include "lbm.hpp"
#include "lstm_model.hpp"
#include "patient_matrix.hpp"
#include "pipeline.hpp"

struct romx_model {
    romx::ModelParams params;
};

struct romx_matrix {
    romx::MatrixArchive archive;
};

struct romx_attribution {
    romx::AttributionMatrix value;
};

namespace {

thread_local std::string g_last_error;

int fail(const std::exception& e, int code) {
    g_last_error = e.what();
    return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        return ROMX_OK;
    } catch (const romx::Error& e) {
        return fail(e, e.kind() == romx::ErrorKind::usage ? ROMX_ERR_USAGE : ROMX_ERR_RUNTIME);
    } catch (const nlohmann::json::exception& e) {
        return fail(e, ROMX_ERR_USAGE);
    } catch (const std::exception& e) {
        return fail(e, ROMX_ERR_RUNTIME);
    }
}

nlohmann::json parse_options(const char* options_json) {
    if (options_json == nullptr || std::strlen(options_json) == 0)
        return nlohmann::json::object();
    return nlohmann::json::parse(options_json);
}

int run_stage_c(const char* stage, const char* options_json) {
    return guarded([&] {
        if (stage == nullptr) throw romx::Error("stage name is null", romx::ErrorKind::usage);
        romx::pipeline::run_stage(stage, parse_options(options_json));
    });
}

}  // namespace

extern "C" {

const char* romx_version(void) { return "0.1.0"; }

const char* romx_last_error(void) { return g_last_error.c_str(); }

int romx_run_stage(const char* stage, const char* options_json) {
    return run_stage_c(stage, options_json);
}
int romx_synth(const char* o) { return run_stage_c("synth", o); }
int romx_preprocess(const char* o) { return run_stage_c("preprocess", o); }
int romx_train(const char* o) { return run_stage_c("train", o); }
int romx_evaluate(const char* o) { return run_stage_c("evaluate", o); }
int romx_explain_stage(const char* o) { return run_stage_c("explain", o); }
int romx_aggregate(const char* o) { return run_stage_c("aggregate", o); }
int romx_report(const char* o) { return run_stage_c("report", o); }
int romx_timing(const char* o) { return run_stage_c("timing", o); }

int romx_model_open(const char* manifest_path, romx_model** out) {
    return guarded([&] {
        if (!manifest_path || !out)
            throw romx::Error("model_open: null argument", romx::ErrorKind::usage);
        auto handle = std::make_unique<romx_model>();
        handle->params = romx::load_model_archive(manifest_path);
        *out = handle.release();
    });
}

void romx_model_close(romx_model* model) { delete model; }

int romx_model_input_size(const romx_model* model, int32_t* out) {
    return guarded([&] {
        if (!model || !out)
            throw romx::Error("model_input_size: null argument", romx::ErrorKind::usage);
        *out = model->params.config.input_size;
    });
}

int romx_matrix_open(const char* manifest_path, romx_matrix** out) {
    return guarded([&] {
        if (!manifest_path || !out)
            throw romx::Error("matrix_open: null argument", romx::ErrorKind::usage);
        auto handle = std::make_unique<romx_matrix>();
        handle->archive = romx::load_matrix_archive(manifest_path);
        *out = handle.release();
    });
}

void romx_matrix_close(romx_matrix* matrix) { delete matrix; }

int romx_matrix_dims(const romx_matrix* matrix, int32_t* n_features, int32_t* t_hours) {
    return guarded([&] {
        if (!matrix || !n_features || !t_hours)
            throw romx::Error("matrix_dims: null argument", romx::ErrorKind::usage);
        *n_features = static_cast<int32_t>(matrix->archive.values.rows());
        *t_hours = static_cast<int32_t>(matrix->archive.values.cols());
    });
}

int romx_predict(const romx_model* model, const romx_matrix* matrix, double* trajectory,
                 size_t len) {
    return guarded([&] {
        if (!model || !matrix || !trajectory)
            throw romx::Error("predict: null argument", romx::ErrorKind::usage);
        if (len < static_cast<size_t>(matrix->archive.values.cols()))
            throw romx::Error("predict: trajectory buffer too small", romx::ErrorKind::usage);
        Eigen::VectorXd y =
            romx::forward(model->params, matrix->archive.values, romx::RunMode::eval);
        std::memcpy(trajectory, y.data(), sizeof(double) * static_cast<size_t>(y.size()));
    });
}

int romx_explain(const romx_model* model, const romx_matrix* matrix, const char* method,
                 const char* config_json, romx_attribution** out) {
    return guarded([&] {
        if (!model || !matrix || !method || !out)
            throw romx::Error("explain: null argument", romx::ErrorKind::usage);
        romx::DtPatientMatrix dt;
        dt.encounter_id = matrix->archive.encounter_id;
        dt.label = matrix->archive.label;
        dt.values = matrix->archive.values;
        nlohmann::json cfg = parse_options(config_json);

        auto handle = std::make_unique<romx_attribution>();
        std::string m = method;
        if (m == "lbm") {
            handle->value = romx::explain_lbm(model->params, dt, romx::LbmConfig::from_json(cfg),
                                              matrix->archive.feature_order);
        } else if (m == "kshap") {
            handle->value = romx::explain_kshap(model->params, dt,
                                                romx::KshapConfig::from_json(cfg),
                                                matrix->archive.feature_order);
        } else {
            throw romx::Error("explain: method must be 'lbm' or 'kshap'",
                              romx::ErrorKind::usage);
        }
        *out = handle.release();
    });
}

void romx_attribution_close(romx_attribution* attribution) { delete attribution; }

int romx_attribution_dims(const romx_attribution* attribution, int32_t* n_features,
                          int32_t* t_hours) {
    return guarded([&] {
        if (!attribution || !n_features || !t_hours)
            throw romx::Error("attribution_dims: null argument", romx::ErrorKind::usage);
        *n_features = attribution->value.n_features();
        *t_hours = attribution->value.t_hours();
    });
}

int romx_attribution_values(const romx_attribution* attribution, double* buf, size_t len) {
    return guarded([&] {
        if (!attribution || !buf)
            throw romx::Error("attribution_values: null argument", romx::ErrorKind::usage);
        const auto& m = attribution->value.values;
        size_t need = static_cast<size_t>(m.rows()) * static_cast<size_t>(m.cols());
        if (len < need)
            throw romx::Error("attribution_values: buffer too small", romx::ErrorKind::usage);
        size_t k = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = m(r, c);
    });
}

int romx_attribution_converged(const romx_attribution* attribution, int32_t* out) {
    return guarded([&] {
        if (!attribution || !out)
            throw romx::Error("attribution_converged: null argument", romx::ErrorKind::usage);
        *out = attribution->value.converged ? 1 : 0;
    });
}

int romx_attribution_save(const romx_attribution* attribution, const char* manifest_path) {
    return guarded([&] {
        if (!attribution || !manifest_path)
            throw romx::Error("attribution_save: null argument", romx::ErrorKind::usage);
        romx::save_attribution_archive(manifest_path, attribution->value);
    });
}

}  // extern "C"
