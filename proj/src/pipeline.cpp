#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "aggregate.hpp"
#include "attribution.hpp"
#include "common.hpp"
#include "csv.hpp"
#include "events.hpp"
#include "kshap.hpp"
#include "lbm.hpp"
#include "lstm_model.hpp"
#include "metrics.hpp"
#include "normalization.hpp"
#include "patient_matrix.hpp"
#include "synth.hpp"
#include "timing.hpp"
#include "training.hpp"

namespace romx::pipeline {

namespace fs = std::filesystem;

namespace {

std::string require_str(const nlohmann::json& opts, const char* key) {
    if (!opts.contains(key))
        throw Error(std::string("missing required option '") + key + "'", ErrorKind::usage);
    return opts.at(key).get<std::string>();
}

uint64_t opt_seed(const nlohmann::json& opts) { return opts.value("seed", uint64_t{0}); }

// defaults < config-file section < inline section
nlohmann::json section(const nlohmann::json& opts, const char* key) {
    nlohmann::json merged = nlohmann::json::object();
    if (opts.contains("config")) {
        std::ifstream in(opts.at("config").get<std::string>());
        if (!in)
            throw Error("cannot read config overlay: " + opts.at("config").get<std::string>(),
                        ErrorKind::usage);
        nlohmann::json file;
        in >> file;
        if (file.contains(key)) merged.update(file.at(key));
    }
    if (opts.contains(key) && opts.at(key).is_object()) merged.update(opts.at(key));
    return merged;
}

nlohmann::json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    nlohmann::json j;
    in >> j;
    return j;
}

std::map<std::string, bool> load_labels(const fs::path& path) {
    nlohmann::json j = load_json_file(path);
    const nlohmann::json& m = j.contains("labels") ? j.at("labels") : j;
    std::map<std::string, bool> labels;
    for (auto it = m.begin(); it != m.end(); ++it) labels[it.key()] = it.value().get<bool>();
    if (labels.empty()) throw Error("labels file has no entries: " + path.string());
    return labels;
}

std::vector<std::string> archive_ids_in(const fs::path& dir, const std::string& suffix) {
    std::vector<std::string> ids;
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string name = e.path().filename().string();
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

DtPatientMatrix load_dt(const fs::path& dir, const std::string& id,
                        std::vector<std::string>* feature_order = nullptr) {
    MatrixArchive a = load_matrix_archive(dir / (id + ".json"));
    if (a.kind != "dt_patient_matrix")
        throw Error("expected a dt_patient_matrix archive for " + id + ", got " + a.kind);
    if (feature_order) *feature_order = a.feature_order;
    DtPatientMatrix dt;
    dt.encounter_id = a.encounter_id;
    dt.label = a.label;
    dt.values = std::move(a.values);
    return dt;
}

std::vector<DtPatientMatrix> load_dt_set(const fs::path& dir,
                                         const std::vector<std::string>& ids) {
    std::vector<DtPatientMatrix> out;
    out.reserve(ids.size());
    std::vector<std::string> order, first_order;
    for (const auto& id : ids) {
        out.push_back(load_dt(dir, id, &order));
        if (first_order.empty())
            first_order = order;
        else if (order != first_order)
            throw Error("inconsistent feature order across matrix archives");
    }
    return out;
}

// ids for explain/timing: explicit list > named split > every archive present
std::vector<std::string> resolve_ids(const nlohmann::json& opts, const fs::path& matrices) {
    if (opts.contains("encounters"))
        return opts.at("encounters").get<std::vector<std::string>>();
    if (opts.contains("split")) {
        auto splits = SplitAssignment::load(require_str(opts, "splits"));
        std::string which = opts.at("split").get<std::string>();
        if (which == "train") return splits.train;
        if (which == "val") return splits.val;
        if (which == "test") return splits.test;
        throw Error("unknown split '" + which + "'", ErrorKind::usage);
    }
    return archive_ids_in(matrices, ".json");
}

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
    if (jobs < 1) jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs < 1) jobs = 1;
    jobs = static_cast<int>(std::min<size_t>(static_cast<size_t>(jobs), n));
    if (jobs <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

ModelConfig model_config_from(const nlohmann::json& overlay, int input_size, uint64_t seed) {
    std::string scale = overlay.value("scale", "desk");
    ModelConfig cfg = scale == "paper" ? ModelConfig::paper_scale(input_size, seed)
                                       : ModelConfig::desk_scale(input_size, seed);
    if (overlay.contains("hidden_sizes"))
        cfg.hidden_sizes = overlay.at("hidden_sizes").get<std::vector<int>>();
    cfg.dropout = overlay.value("dropout", cfg.dropout);
    cfg.l2 = overlay.value("l2", cfg.l2);
    if (overlay.contains("seed")) cfg.seed = overlay.at("seed").get<uint64_t>();
    cfg.validate();
    return cfg;
}

TrainConfig train_config_from(const nlohmann::json& overlay, const std::string& profile) {
    TrainConfig base = profile == "paper" ? TrainConfig::paper() : TrainConfig::desk();
    nlohmann::json merged = base.to_json();
    merged.update(overlay);
    return TrainConfig::from_json(merged);
}

}  // namespace

void run_synth(const nlohmann::json& opts) {
    fs::path out_dir = require_str(opts, "out_dir");
    fs::create_directories(out_dir);

    nlohmann::json overlay = section(opts, "synth");
    if (!overlay.contains("seed")) overlay["seed"] = derive_seed(opt_seed(opts), "synth");
    SynthConfig cfg = overlay.empty() ? SynthConfig::defaults() : SynthConfig::from_json(overlay);
    if (!overlay.contains("seed")) cfg.seed = derive_seed(opt_seed(opts), "synth");

    SynthResult result = generate_cohort(cfg);
    write_events_csv(out_dir / "events.csv", result.events);
    result.spec.save(out_dir / "feature_spec.json");
    result.truth.save(out_dir / "ground_truth.json", result.spec);
    {
        std::ofstream out(out_dir / "synth_config.json");
        out << cfg.to_json().dump(2) << '\n';
    }

    std::vector<std::pair<std::string, bool>> labeled;
    for (const auto& e : result.truth.encounters) labeled.emplace_back(e.encounter_id, e.died);
    auto fracs = opts.value("split_fractions", std::vector<double>{0.6, 0.2, 0.2});
    if (fracs.size() != 3) throw Error("split_fractions needs 3 values", ErrorKind::usage);
    SplitAssignment splits =
        split_cohort(labeled, fracs[0], fracs[1], fracs[2], derive_seed(opt_seed(opts), "split"));
    splits.save(out_dir / "splits.json");

    size_t died = 0;
    for (const auto& e : result.truth.encounters) died += e.died ? 1 : 0;
    std::cerr << "synth: " << result.truth.encounters.size() << " encounters, " << died
              << " deaths, " << result.events.size() << " events -> " << out_dir.string() << "\n";
}

void run_preprocess(const nlohmann::json& opts) {
    fs::path events_path = require_str(opts, "events");
    fs::path spec_path = require_str(opts, "spec");
    fs::path labels_path = require_str(opts, "labels");
    fs::path splits_path = require_str(opts, "splits");
    fs::path out_dir = require_str(opts, "out_dir");
    bool debug_csv = opts.value("debug_csv", false);

    FeatureSpec spec = FeatureSpec::load(spec_path);
    auto labels = load_labels(labels_path);
    auto splits = SplitAssignment::load(splits_path);
    auto events = read_events_csv(events_path);

    std::map<std::string, std::vector<RawEvent>> by_encounter;
    for (auto& e : events) by_encounter[e.encounter_id].push_back(std::move(e));

    // normalization statistics come from the training split only
    std::vector<RawEvent> train_events;
    for (const auto& id : splits.train) {
        auto it = by_encounter.find(id);
        if (it == by_encounter.end()) throw Error("split references unknown encounter " + id);
        train_events.insert(train_events.end(), it->second.begin(), it->second.end());
    }
    FitCounters fit_counters;
    NormalizationStats stats = fit_normalization(train_events, spec, &fit_counters);
    fs::create_directories(out_dir);
    stats.save(out_dir / "normalization_stats.json", spec);

    fs::path dt_dir = out_dir / "dt";
    fs::create_directories(dt_dir);
    if (debug_csv) fs::create_directories(out_dir / "debug");

    BuildCounters totals;
    auto order = spec.names();
    for (const auto& [id, enc_events] : by_encounter) {
        auto label_it = labels.find(id);
        if (label_it == labels.end()) throw Error("no label for encounter " + id);
        BuildCounters bc;
        PatientMatrix pm = build_patient_matrix(enc_events, stats, spec, label_it->second, &bc);
        totals.used += bc.used;
        totals.out_of_bounds += bc.out_of_bounds;
        totals.unknown_variable += bc.unknown_variable;
        DtPatientMatrix dt = to_dt_matrix(pm);
        MatrixArchive a{id, "dt_patient_matrix", order, pm.label, dt.values};
        save_matrix_archive(dt_dir / (id + ".json"), a);
        if (debug_csv) write_matrix_debug_csv(out_dir / "debug" / (id + ".csv"), dt.values, order);
    }
    std::cerr << "preprocess: " << by_encounter.size() << " encounters, " << totals.used
              << " events used, " << totals.out_of_bounds << " out-of-bounds dropped, "
              << totals.unknown_variable << " unknown-variable dropped\n";
}

void run_train(const nlohmann::json& opts) {
    fs::path matrices = require_str(opts, "matrices");
    fs::path out = require_str(opts, "out");
    auto splits = SplitAssignment::load(require_str(opts, "splits"));
    uint64_t seed = opt_seed(opts);

    auto train_set = load_dt_set(matrices, splits.train);
    auto val_set = load_dt_set(matrices, splits.val);
    if (train_set.empty() || val_set.empty())
        throw Error("train: empty train or validation split", ErrorKind::usage);

    int input_size = train_set.front().n_features();
    ModelConfig mcfg = model_config_from(section(opts, "model"), input_size,
                                         derive_seed(seed, "model-init"));
    TrainConfig tcfg = train_config_from(section(opts, "train"), opts.value("profile", "desk"));

    ModelParams params = init_model(mcfg);
    TrainResult result = train(params, train_set, val_set, tcfg, seed);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    save_model_archive(out, result.params, result.summary_json());

    const auto& best = result.history[static_cast<size_t>(result.best_epoch)];
    std::cerr << "train: " << result.history.size() << " epochs, best epoch "
              << result.best_epoch << " val_bce " << best.val_bce << " val_auc " << best.val_auc
              << " (" << result.stopped_reason << ") -> " << out.string() << "\n";
}

void run_evaluate(const nlohmann::json& opts) {
    fs::path matrices = require_str(opts, "matrices");
    ModelParams model = load_model_archive(require_str(opts, "model"));
    fs::path out = require_str(opts, "out");
    auto splits = SplitAssignment::load(require_str(opts, "splits"));
    std::string which = opts.value("split", "test");
    const auto& ids = which == "train" ? splits.train : (which == "val" ? splits.val : splits.test);

    auto hours = opts.value("hours", std::vector<int>{1, 3, 6, 9, 12, -12, -9, -6, -3, -1});
    auto dataset = load_dt_set(matrices, ids);
    auto rows = evaluate_at_hours(model, dataset, hours);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_hour_auc_csv(out, rows);
    for (const auto& r : rows)
        std::cerr << "evaluate: hour " << r.hour << " auc " << r.auc << " (n=" << r.n_encounters
                  << ")\n";
}

void run_explain(const nlohmann::json& opts) {
    fs::path matrices = require_str(opts, "matrices");
    fs::path out_dir = require_str(opts, "out_dir");
    ModelParams model = load_model_archive(require_str(opts, "model"));
    std::string method = opts.value("method", "both");
    if (method != "lbm" && method != "kshap" && method != "both")
        throw Error("method must be lbm, kshap or both", ErrorKind::usage);
    int jobs = opts.value("jobs", 0);

    LbmConfig lbm_cfg = LbmConfig::from_json(section(opts, "lbm"));
    nlohmann::json kshap_overlay = section(opts, "kshap");
    if (!kshap_overlay.contains("seed"))
        kshap_overlay["seed"] = derive_seed(opt_seed(opts), "kshap");
    KshapConfig kshap_cfg = KshapConfig::from_json(kshap_overlay);

    auto ids = resolve_ids(opts, matrices);
    if (ids.empty()) throw Error("explain: no encounters selected", ErrorKind::usage);
    fs::create_directories(out_dir);

    struct IndexRow {
        std::string id, method;
        bool converged;
        int n, t;
    };
    std::vector<IndexRow> index;
    std::mutex index_mutex;

    parallel_for(ids.size(), jobs, [&](size_t i) {
        const std::string& id = ids[i];
        std::vector<std::string> order;
        DtPatientMatrix dt = load_dt(matrices, id, &order);
        if (dt.n_features() != model.config.input_size)
            throw Error("encounter " + id + " feature count does not match model");
        std::vector<AttributionMatrix> results;
        if (method == "lbm" || method == "both")
            results.push_back(explain_lbm(model, dt, lbm_cfg, order));
        if (method == "kshap" || method == "both")
            results.push_back(explain_kshap(model, dt, kshap_cfg, order));
        for (const auto& a : results) {
            save_attribution_archive(out_dir / (id + "." + a.method + ".json"), a);
            std::lock_guard lock(index_mutex);
            index.push_back({id, a.method, a.converged, a.n_features(), a.t_hours()});
        }
    });

    std::sort(index.begin(), index.end(), [](const IndexRow& a, const IndexRow& b) {
        return std::tie(a.id, a.method) < std::tie(b.id, b.method);
    });
    std::ofstream out(out_dir / "index.csv");
    if (!out) throw Error("cannot write explain index");
    out << "encounter_id,method,converged,n_features,t_hours\n";
    size_t n_converged = 0;
    for (const auto& r : index) {
        out << csv_escape(r.id) << ',' << r.method << ',' << (r.converged ? 1 : 0) << ',' << r.n
            << ',' << r.t << '\n';
        n_converged += r.converged ? 1 : 0;
    }
    std::cerr << "explain: " << index.size() << " attributions (" << n_converged
              << " converged) -> " << out_dir.string() << "\n";
}

void run_aggregate(const nlohmann::json& opts) {
    fs::path attribs = require_str(opts, "attribs");
    fs::path out_dir = require_str(opts, "out_dir");
    auto methods = opts.value("methods", std::vector<std::string>{"lbm", "kshap"});
    fs::create_directories(out_dir);

    std::map<std::string, std::vector<std::string>> cohorts;
    if (opts.contains("cohorts")) {
        nlohmann::json cj = load_json_file(opts.at("cohorts").get<std::string>());
        const nlohmann::json& m = cj.contains("cohorts") ? cj.at("cohorts") : cj;
        for (auto it = m.begin(); it != m.end(); ++it)
            cohorts[it.key()] = it.value().get<std::vector<std::string>>();
    }

    for (const auto& method : methods) {
        auto ids = archive_ids_in(attribs, "." + method + ".json");
        if (ids.empty()) {
            std::cerr << "aggregate: no ." << method << " archives found, skipped\n";
            continue;
        }
        std::vector<AttributionMatrix> all;
        all.reserve(ids.size());
        for (const auto& id : ids)
            all.push_back(load_attribution_archive(attribs / (id + "." + method + ".json")));
        const auto& order = all.front().feature_order;

        std::vector<const AttributionMatrix*> everyone;
        for (const auto& a : all) everyone.push_back(&a);

        AggregateVector pop = population_importance(everyone);
        pop.save(out_dir / ("population_" + method + ".json"), order);

        for (const auto& [name, member_ids] : cohorts) {
            std::vector<const AttributionMatrix*> in_set, out_set;
            std::set<std::string> members(member_ids.begin(), member_ids.end());
            for (const auto& a : all)
                (members.count(a.encounter_id) ? in_set : out_set).push_back(&a);
            if (in_set.empty() || out_set.empty()) {
                std::cerr << "aggregate: cohort '" << name
                          << "' empty or exhaustive among explained encounters, skipped\n";
                continue;
            }
            AggregateVector raf = relative_attribution(in_set, out_set);
            raf.save(out_dir / ("raf_" + name + "_" + method + ".json"), order);
        }

        if (opts.contains("window")) {
            const auto& w = opts.at("window");
            std::string id = w.at("encounter").get<std::string>();
            WindowSpec ws{w.at("t_i").get<int>(), w.at("t_f").get<int>()};
            bool normalize = w.value("normalize", true);
            const AttributionMatrix* target = nullptr;
            for (const auto& a : all)
                if (a.encounter_id == id) target = &a;
            if (!target) throw Error("window: encounter " + id + " has no " + method + " archive");
            AggregateVector wv = window_average(*target, ws, normalize);
            wv.save(out_dir / ("window_" + id + "_" + std::to_string(ws.t_i) + "_" +
                               std::to_string(ws.t_f) + "_" + method + ".json"),
                    order);
        }
        std::cerr << "aggregate: " << method << " over " << all.size() << " encounters -> "
                  << out_dir.string() << "\n";
    }
}

void run_report(const nlohmann::json& opts) {
    FeatureSpec spec = FeatureSpec::load(require_str(opts, "spec"));
    fs::path out_dir = require_str(opts, "out_dir");
    std::string name = opts.value("name", "report");
    int top_k = opts.value("top", 20);
    auto inputs = opts.at("inputs").get<std::vector<std::string>>();
    if (inputs.empty()) throw Error("report: no input vectors", ErrorKind::usage);
    fs::create_directories(out_dir);

    std::vector<std::pair<std::string, AggregateVector>> methods;
    std::vector<std::pair<std::string, std::vector<RankedRow>>> blocks;
    for (const auto& path : inputs) {
        std::vector<std::string> order;
        AggregateVector v = AggregateVector::load(path, &order);
        if (order != spec.names())
            throw Error("report: vector feature order does not match spec: " + path);
        blocks.emplace_back(v.method, top_k_report(v, top_k, spec));
        methods.emplace_back(v.method, std::move(v));
    }
    write_report_csv(out_dir / ("report_" + name + ".csv"), blocks);
    write_bar_chart_svg(out_dir / (name + ".svg"), name, methods, spec, top_k);
    std::cerr << "report: " << inputs.size() << " vectors -> "
              << (out_dir / ("report_" + name + ".csv")).string() << "\n";
}

void run_timing(const nlohmann::json& opts) {
    fs::path matrices = require_str(opts, "matrices");
    fs::path out_dir = require_str(opts, "out_dir");
    ModelParams model = load_model_archive(require_str(opts, "model"));
    auto methods = opts.value("methods", std::vector<std::string>{"predict", "kshap", "lbm"});
    for (const auto& m : methods)
        if (m != "predict" && m != "kshap" && m != "lbm")
            throw Error("timing: unknown method '" + m + "'", ErrorKind::usage);

    LbmConfig lbm_cfg = LbmConfig::from_json(section(opts, "lbm"));
    nlohmann::json kshap_overlay = section(opts, "kshap");
    if (!kshap_overlay.contains("seed"))
        kshap_overlay["seed"] = derive_seed(opt_seed(opts), "kshap");
    KshapConfig kshap_cfg = KshapConfig::from_json(kshap_overlay);

    auto ids = resolve_ids(opts, matrices);
    if (ids.empty()) throw Error("timing: no encounters selected", ErrorKind::usage);
    fs::create_directories(out_dir);

    std::vector<TimingRecord> records;
    for (const auto& id : ids) {
        std::vector<std::string> order;
        DtPatientMatrix dt = load_dt(matrices, id, &order);
        for (const auto& method : methods) {
            TimingRecord rec;
            rec.encounter_id = id;
            rec.method = method;
            rec.t_hours = dt.t_hours();
            rec.n_features = dt.n_features();
            if (method == "predict") {
                auto t0 = std::chrono::steady_clock::now();
                LstmRunner runner(model);
                volatile double sink = runner.forward(dt.values).sum();
                (void)sink;
                rec.seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            } else if (method == "kshap") {
                auto a = explain_kshap(model, dt, kshap_cfg, order);
                rec.seconds = a.wall_clock_seconds;
            } else {
                auto a = explain_lbm(model, dt, lbm_cfg, order);
                rec.seconds = a.wall_clock_seconds;
                rec.converged = a.converged;
            }
            records.push_back(std::move(rec));
        }
    }

    auto summary = timing_summary(records, methods);
    write_timing_records_csv(out_dir / "timing_records.csv", records);
    write_timing_summary_csv(out_dir / "timing_summary.csv", summary);
    write_timing_boxplot_svg(out_dir / "timing_box.svg", summary);
    for (const auto& m : summary)
        std::cerr << "timing: " << m.method << " median " << m.median << "s iqr " << m.iqr
                  << "s over " << m.n << " encounters\n";
}

void run_stage(const std::string& name, const nlohmann::json& opts) {
    if (name == "synth") return run_synth(opts);
    if (name == "preprocess") return run_preprocess(opts);
    if (name == "train") return run_train(opts);
    if (name == "evaluate") return run_evaluate(opts);
    if (name == "explain") return run_explain(opts);
    if (name == "aggregate") return run_aggregate(opts);
    if (name == "report") return run_report(opts);
    if (name == "timing") return run_timing(opts);
    throw Error("unknown stage '" + name + "'", ErrorKind::usage);
}

}  // namespace romx::pipeline
