// romx command line: thin flag parsing over the C API. All pipeline work
// happens behind romx.h; this translates subcommand flags into the stage
// option documents and reports errors on one stderr line.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "romx.h"

namespace {

using nlohmann::json;

int run_stage(const char* stage, const json& opts) {
    int rc = romx_run_stage(stage, opts.dump().c_str());
    if (rc != ROMX_OK) std::fprintf(stderr, "error: %s\n", romx_last_error());
    return rc;
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos <= csv.size()) {
        size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        out.push_back(std::stoi(csv.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

std::vector<std::string> parse_str_list(const std::string& csv) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= csv.size()) {
        size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        out.push_back(csv.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"train, explain and aggregate recurrent ICU risk predictions"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(romx_version()));

    uint64_t seed = 0;
    std::string config;
    app.add_option("--seed", seed, "root seed; stages derive their own sub-seeds");
    app.add_option("--config", config, "JSON overlay file (sections: synth/model/train/lbm/kshap)");

    auto with_common = [&](json& opts) {
        opts["seed"] = seed;
        if (!config.empty()) opts["config"] = config;
    };

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    std::string synth_out;
    int synth_n = -1;
    synth->add_option("--out-dir", synth_out, "output directory")->required();
    synth->add_option("-n,--encounters", synth_n, "number of encounters");

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "events csv -> dt matrix archives");
    std::string pre_events, pre_spec, pre_labels, pre_splits, pre_out;
    bool pre_debug = false;
    pre->add_option("--events", pre_events)->required();
    pre->add_option("--spec", pre_spec)->required();
    pre->add_option("--labels", pre_labels, "labels json (or ground truth file)")->required();
    pre->add_option("--splits", pre_splits)->required();
    pre->add_option("--out-dir", pre_out)->required();
    pre->add_flag("--debug-csv", pre_debug, "also emit wide csv per encounter");

    // train
    auto* train = app.add_subcommand("train", "fit the risk model");
    std::string train_matrices, train_splits, train_out, train_profile = "desk";
    int train_epochs = -1, train_batch = -1;
    double train_lr = -1.0;
    train->add_option("--matrices", train_matrices)->required();
    train->add_option("--splits", train_splits)->required();
    train->add_option("--out", train_out, "model manifest path")->required();
    train->add_option("--profile", train_profile, "desk | paper optimizer profile");
    train->add_option("--max-epochs", train_epochs);
    train->add_option("--batch-size", train_batch);
    train->add_option("--lr", train_lr, "initial learning rate");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "per-hour AUC table");
    std::string eval_matrices, eval_splits, eval_model, eval_out, eval_split = "test";
    std::string eval_hours = "1,3,6,9,12,-12,-9,-6,-3,-1";
    eval->add_option("--matrices", eval_matrices)->required();
    eval->add_option("--splits", eval_splits)->required();
    eval->add_option("--model", eval_model)->required();
    eval->add_option("--out", eval_out)->required();
    eval->add_option("--split", eval_split, "train | val | test");
    eval->add_option("--hours", eval_hours, "comma list; negative = hours before end");

    // explain
    auto* explain = app.add_subcommand("explain", "attribution archives per encounter");
    std::string ex_matrices, ex_model, ex_out, ex_method = "both", ex_split, ex_splits,
                ex_preset;
    std::vector<std::string> ex_encounters;
    int ex_jobs = 0;
    int64_t ex_budget = -2;
    explain->add_option("--matrices", ex_matrices)->required();
    explain->add_option("--model", ex_model)->required();
    explain->add_option("--out-dir", ex_out)->required();
    explain->add_option("--method", ex_method, "lbm | kshap | both");
    explain->add_option("--encounter", ex_encounters, "explain these encounters only");
    explain->add_option("--split", ex_split, "explain a whole split (needs --splits)");
    explain->add_option("--splits", ex_splits);
    explain->add_option("--jobs", ex_jobs, "worker pool size (default: cores)");
    explain->add_option("--preset", ex_preset, "lbm preset: default | appendix_b");
    explain->add_option("--budget", ex_budget, "kshap total evaluation budget");

    // aggregate
    auto* agg = app.add_subcommand("aggregate", "population / cohort / window vectors");
    std::string agg_attribs, agg_out, agg_cohorts, agg_methods = "lbm,kshap", agg_window;
    agg->add_option("--attribs", agg_attribs)->required();
    agg->add_option("--out-dir", agg_out)->required();
    agg->add_option("--cohorts", agg_cohorts, "cohort json (name -> encounter ids)");
    agg->add_option("--methods", agg_methods, "comma list");
    agg->add_option("--window", agg_window, "ENCOUNTER:T_I:T_F individual window average");

    // report
    auto* report = app.add_subcommand("report", "ranked tables + bar charts");
    std::vector<std::string> rep_inputs;
    std::string rep_spec, rep_out, rep_name = "report";
    int rep_top = 20;
    report->add_option("--inputs", rep_inputs, "aggregate vector json files")->required();
    report->add_option("--spec", rep_spec)->required();
    report->add_option("--out-dir", rep_out)->required();
    report->add_option("--name", rep_name);
    report->add_option("--top", rep_top, "rows per method");

    // timing
    auto* timing = app.add_subcommand("timing", "wall-clock per encounter and method");
    std::string tm_matrices, tm_model, tm_out, tm_methods = "predict,kshap,lbm", tm_split,
                tm_splits;
    std::vector<std::string> tm_encounters;
    timing->add_option("--matrices", tm_matrices)->required();
    timing->add_option("--model", tm_model)->required();
    timing->add_option("--out-dir", tm_out)->required();
    timing->add_option("--methods", tm_methods, "comma list of predict|kshap|lbm");
    timing->add_option("--encounter", tm_encounters);
    timing->add_option("--split", tm_split);
    timing->add_option("--splits", tm_splits);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return ROMX_ERR_USAGE;
    }

    json opts;
    with_common(opts);

    if (synth->parsed()) {
        opts["out_dir"] = synth_out;
        if (synth_n > 0) opts["synth"] = json{{"n_encounters", synth_n}};
        return run_stage("synth", opts);
    }
    if (pre->parsed()) {
        opts["events"] = pre_events;
        opts["spec"] = pre_spec;
        opts["labels"] = pre_labels;
        opts["splits"] = pre_splits;
        opts["out_dir"] = pre_out;
        opts["debug_csv"] = pre_debug;
        return run_stage("preprocess", opts);
    }
    if (train->parsed()) {
        opts["matrices"] = train_matrices;
        opts["splits"] = train_splits;
        opts["out"] = train_out;
        opts["profile"] = train_profile;
        json overlay = json::object();
        if (train_epochs > 0) overlay["max_epochs"] = train_epochs;
        if (train_batch > 0) overlay["batch_size"] = train_batch;
        if (train_lr > 0) overlay["learning_rate"] = train_lr;
        if (!overlay.empty()) opts["train"] = overlay;
        return run_stage("train", opts);
    }
    if (eval->parsed()) {
        opts["matrices"] = eval_matrices;
        opts["splits"] = eval_splits;
        opts["model"] = eval_model;
        opts["out"] = eval_out;
        opts["split"] = eval_split;
        try {
            opts["hours"] = parse_int_list(eval_hours);
        } catch (const std::exception&) {
            std::fprintf(stderr, "error: --hours expects a comma-separated integer list\n");
            return ROMX_ERR_USAGE;
        }
        return run_stage("evaluate", opts);
    }
    if (explain->parsed()) {
        opts["matrices"] = ex_matrices;
        opts["model"] = ex_model;
        opts["out_dir"] = ex_out;
        opts["method"] = ex_method;
        opts["jobs"] = ex_jobs;
        if (!ex_encounters.empty()) opts["encounters"] = ex_encounters;
        if (!ex_split.empty()) {
            opts["split"] = ex_split;
            opts["splits"] = ex_splits;
        }
        if (!ex_preset.empty()) opts["lbm"] = json{{"preset", ex_preset}};
        if (ex_budget >= -1) opts["kshap"] = json{{"total_budget", ex_budget}};
        return run_stage("explain", opts);
    }
    if (agg->parsed()) {
        opts["attribs"] = agg_attribs;
        opts["out_dir"] = agg_out;
        if (!agg_cohorts.empty()) opts["cohorts"] = agg_cohorts;
        opts["methods"] = parse_str_list(agg_methods);
        if (!agg_window.empty()) {
            // ENCOUNTER:T_I:T_F
            size_t a = agg_window.find(':');
            size_t b = agg_window.rfind(':');
            if (a == std::string::npos || b == a) {
                std::fprintf(stderr, "error: --window expects ENCOUNTER:T_I:T_F\n");
                return ROMX_ERR_USAGE;
            }
            try {
                opts["window"] = json{{"encounter", agg_window.substr(0, a)},
                                      {"t_i", std::stoi(agg_window.substr(a + 1, b - a - 1))},
                                      {"t_f", std::stoi(agg_window.substr(b + 1))}};
            } catch (const std::exception&) {
                std::fprintf(stderr, "error: --window expects ENCOUNTER:T_I:T_F\n");
                return ROMX_ERR_USAGE;
            }
        }
        return run_stage("aggregate", opts);
    }
    if (report->parsed()) {
        opts["inputs"] = rep_inputs;
        opts["spec"] = rep_spec;
        opts["out_dir"] = rep_out;
        opts["name"] = rep_name;
        opts["top"] = rep_top;
        return run_stage("report", opts);
    }
    if (timing->parsed()) {
        opts["matrices"] = tm_matrices;
        opts["model"] = tm_model;
        opts["out_dir"] = tm_out;
        opts["methods"] = parse_str_list(tm_methods);
        if (!tm_encounters.empty()) opts["encounters"] = tm_encounters;
        if (!tm_split.empty()) {
            opts["split"] = tm_split;
            opts["splits"] = tm_splits;
        }
        return run_stage("timing", opts);
    }
    std::fprintf(stderr, "error: no subcommand given\n");
    return ROMX_ERR_USAGE;
}
