#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "constrdyn/evaluation.hpp"
#include "constrdyn/models.hpp"
#include "constrdyn/physics.hpp"
#include "constrdyn/training.hpp"

namespace constrdyn::io {

using nlohmann::json;

// 17 significant digits: enough to round-trip any 64-bit float
inline std::string fmt17(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// --- dataset (NDJSON, one trajectory per line) --------------------------------

inline void append_array17(std::string& out, std::span<const double> v) {
    out += '[';
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += fmt17(v[i]);
    }
    out += ']';
}

inline std::string trajectory_line(const Trajectory& t) {
    std::string line;
    line += "{\"seed\":" + std::to_string(t.seed) + ",\"t\":";
    append_array17(line, t.times);
    line += ",\"s\":[";
    for (size_t i = 0; i < t.states.size(); ++i) {
        if (i) line += ',';
        append_array17(line, t.states[i]);
    }
    line += "],\"sdot\":[";
    for (size_t i = 0; i < t.derivs.size(); ++i) {
        if (i) line += ',';
        append_array17(line, t.derivs[i]);
    }
    line += "]}";
    return line;
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const Trajectory& t : ds.trajectories) out << trajectory_line(t) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path, Task task) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    Dataset ds;
    ds.task = task;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Trajectory t;
        t.seed = j.at("seed").get<uint64_t>();
        t.times = j.at("t").get<std::vector<double>>();
        t.states = j.at("s").get<std::vector<std::vector<double>>>();
        t.derivs = j.at("sdot").get<std::vector<std::vector<double>>>();
        if (t.states.size() != t.times.size() || t.derivs.size() != t.times.size())
            throw std::runtime_error("dataset line with inconsistent lengths: " + path);
        ds.trajectories.push_back(std::move(t));
    }
    if (ds.trajectories.empty()) throw std::runtime_error("dataset is empty: " + path);
    ds.protocol.n_traj = uint32_t(ds.trajectories.size());
    ds.protocol.n_samples = uint32_t(ds.trajectories[0].times.size());
    ds.protocol.t_begin = ds.trajectories[0].times.front();
    ds.protocol.t_end = ds.trajectories[0].times.back();
    return ds;
}

// --- model checkpoints ---------------------------------------------------------

inline json mlp_config_to_json(const MlpConfig& c) {
    return {{"input_dim", c.input_dim},
            {"hidden_layers", c.hidden_layers},
            {"hidden_units", c.hidden_units},
            {"activation", to_string(c.activation)},
            {"output_dim", c.output_dim}};
}

inline MlpConfig mlp_config_from_json(const json& j) {
    MlpConfig c;
    c.input_dim = j.at("input_dim").get<uint32_t>();
    c.hidden_layers = j.at("hidden_layers").get<uint32_t>();
    c.hidden_units = j.at("hidden_units").get<uint32_t>();
    const std::string act = j.at("activation").get<std::string>();
    if (act == "softplus") c.activation = Activation::softplus;
    else if (act == "tanh") c.activation = Activation::tanh;
    else if (act == "relu") c.activation = Activation::relu;
    else throw std::runtime_error("unknown activation: " + act);
    c.output_dim = j.at("output_dim").get<uint32_t>();
    return c;
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "node") return ModelKind::node;
    if (s == "hnn") return ModelKind::hnn;
    if (s == "transformed_node") return ModelKind::transformed_node;
    throw std::runtime_error("unknown model kind: " + s);
}

inline json checkpoint_to_json(const DynamicsModel& m) {
    json config = {{"state_dim", m.state_dim}, {"mlp", mlp_config_to_json(m.mlp)}};
    if (m.coupling)
        config["coupling"] = {{"blocks", m.coupling->blocks},
                              {"subnet_layers", m.coupling->subnet_layers},
                              {"subnet_units", m.coupling->subnet_units}};
    return {{"kind", to_string(m.kind)},
            {"config", config},
            {"parameters", m.parameters},
            {"seed", m.seed},
            {"epoch", m.epoch}};
}

inline void write_checkpoint(const std::string& path, const DynamicsModel& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << checkpoint_to_json(m).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline DynamicsModel checkpoint_from_json(const json& j) {
    DynamicsModel m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    const json& config = j.at("config");
    m.state_dim = config.at("state_dim").get<uint32_t>();
    m.mlp = mlp_config_from_json(config.at("mlp"));
    if (config.contains("coupling")) {
        CouplingConfig c;
        c.blocks = config["coupling"].at("blocks").get<uint32_t>();
        c.subnet_layers = config["coupling"].at("subnet_layers").get<uint32_t>();
        c.subnet_units = config["coupling"].at("subnet_units").get<uint32_t>();
        m.coupling = c;
    }
    m.parameters = j.at("parameters").get<std::vector<double>>();
    m.seed = j.at("seed").get<uint64_t>();
    m.epoch = j.at("epoch").get<int64_t>();
    if (m.parameters.size() != m.param_count())
        throw std::runtime_error("checkpoint parameter count does not match its config");
    return m;
}

inline DynamicsModel read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    json j;
    in >> j;
    return checkpoint_from_json(j);
}

// --- evaluation reports ----------------------------------------------------------

// JSON has no infinity literal: overflow entries are stored as null.
inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline double null_as_inf(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline json report_to_json(const EvalReport& r) {
    json rmse = json::array();
    for (double x : r.per_trajectory_rmse) rmse.push_back(finite_or_null(x));
    return {{"task", r.task},
            {"model", r.model_label},
            {"n_test", r.n_test},
            {"rmse", rmse},
            {"median", finite_or_null(r.median)},
            {"p2_5", finite_or_null(r.p2_5)},
            {"p97_5", finite_or_null(r.p97_5)},
            {"overflow_count", r.overflow_count}};
}

inline void write_report(const std::string& path, const EvalReport& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << report_to_json(r).dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline EvalReport read_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open report: " + path);
    json j;
    in >> j;
    EvalReport r;
    r.task = j.at("task").get<std::string>();
    r.model_label = j.at("model").get<std::string>();
    r.n_test = j.at("n_test").get<uint32_t>();
    for (const json& x : j.at("rmse")) r.per_trajectory_rmse.push_back(null_as_inf(x));
    r.median = null_as_inf(j.at("median"));
    r.p2_5 = null_as_inf(j.at("p2_5"));
    r.p97_5 = null_as_inf(j.at("p97_5"));
    r.overflow_count = j.at("overflow_count").get<uint32_t>();
    return r;
}

inline void write_energy_series_csv(const std::string& path, const std::vector<EnergySeries>& series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "traj,t,e_model,e_true\n";
    for (size_t k = 0; k < series.size(); ++k)
        for (size_t i = 0; i < series[k].t.size(); ++i)
            out << k << ',' << fmt17(series[k].t[i]) << ',' << fmt17(series[k].model_energy[i]) << ','
                << fmt17(series[k].true_energy[i]) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

// --- training metrics ------------------------------------------------------------

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "epoch,mse,penalty,total,wall_ms\n";
    for (const MetricsRow& r : rows)
        out << r.epoch << ',' << fmt17(r.mse) << ',' << fmt17(r.penalty) << ',' << fmt17(r.total) << ','
            << fmt17(r.wall_ms) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

// --- summary table (methods x tasks, median with percentile offsets) -------------

inline std::string format_cell(const EvalReport& r) {
    if (!std::isfinite(r.median)) return "inf";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.4g (+%.4g/-%.4g)", r.median,
                  std::isfinite(r.p97_5) ? r.p97_5 - r.median : std::numeric_limits<double>::infinity(),
                  r.median - r.p2_5);
    return buf;
}

inline void write_summary_csv(const std::string& path, const std::vector<EvalReport>& reports) {
    std::vector<std::string> tasks, labels;
    for (const EvalReport& r : reports) {
        if (std::find(tasks.begin(), tasks.end(), r.task) == tasks.end()) tasks.push_back(r.task);
        if (std::find(labels.begin(), labels.end(), r.model_label) == labels.end())
            labels.push_back(r.model_label);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "method";
    for (const std::string& t : tasks) out << ',' << t;
    out << '\n';
    for (const std::string& label : labels) {
        out << label;
        for (const std::string& t : tasks) {
            out << ',';
            for (const EvalReport& r : reports)
                if (r.model_label == label && r.task == t) {
                    out << '"' << format_cell(r) << '"';
                    break;
                }
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// --- run configuration ------------------------------------------------------------

struct RunConfig {
    TrainConfig train;
    std::string dataset_path;
    std::string out_dir;
};

inline void require_keys(const json& j, std::initializer_list<const char*> required,
                         std::initializer_list<const char*> optional, const std::string& ctx) {
    if (!j.is_object()) throw std::runtime_error(ctx + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : required) known = known || it.key() == k;
        for (const char* k : optional) known = known || it.key() == k;
        if (!known) throw std::runtime_error(ctx + ": unknown key '" + it.key() + "'");
    }
    for (const char* k : required)
        if (!j.contains(k)) throw std::runtime_error(ctx + ": missing key '" + k + "'");
}

inline double default_constraint_weight(Task t) {
    switch (t) {
        case Task::mass_spring: return 1e5;
        case Task::single_pendulum: return 1e4;
        case Task::double_pendulum: return 1e3;
        case Task::damped_pendulum_xy: return 1e2;
    }
    return 0.0;
}

inline RunConfig parse_run_config(const json& j) {
    require_keys(j,
                 {"task", "model_kind", "constraint", "dataset", "out_dir"},
                 {"lr", "epochs", "batch_size", "seed", "checkpoint_every", "jobs", "mlp", "coupling"},
                 "config");
    RunConfig rc;
    rc.train.task = task_from_string(j.at("task").get<std::string>());
    rc.train.model_kind = model_kind_from_string(j.at("model_kind").get<std::string>());

    const json& cj = j.at("constraint");
    require_keys(cj, {"kind"}, {"weight", "bounds"}, "config.constraint");
    const std::string ck = cj.at("kind").get<std::string>();
    if (ck == "none") rc.train.constraint.kind = ConstraintKind::none;
    else if (ck == "hamiltonian") rc.train.constraint.kind = ConstraintKind::hamiltonian;
    else if (ck == "transformed_hamiltonian") rc.train.constraint.kind = ConstraintKind::transformed_hamiltonian;
    else if (ck == "dissipative") rc.train.constraint.kind = ConstraintKind::dissipative;
    else throw std::runtime_error("config.constraint: unknown kind '" + ck + "'");
    rc.train.constraint.weight = cj.contains("weight") ? cj["weight"].get<double>()
                                 : rc.train.constraint.kind == ConstraintKind::none
                                     ? 0.0
                                     : default_constraint_weight(rc.train.task);
    if (cj.contains("bounds")) rc.train.constraint.bounds = cj["bounds"].get<std::vector<double>>();
    else if (rc.train.constraint.kind == ConstraintKind::dissipative)
        rc.train.constraint.bounds.assign(system(rc.train.task).state_dim, 0.0);

    rc.train.lr = j.value("lr", 1e-4);
    rc.train.epochs = j.value("epochs", int64_t(1000));
    rc.train.batch_size = j.value("batch_size", rc.train.task == Task::double_pendulum ? 1280u : 32u);
    rc.train.seed = j.value("seed", uint64_t(0));
    rc.train.checkpoint_every = j.value("checkpoint_every", int64_t(0));
    rc.train.jobs = j.value("jobs", 1u);

    if (j.contains("mlp")) {
        require_keys(j["mlp"], {}, {"hidden_layers", "hidden_units", "activation"}, "config.mlp");
        MlpConfig m = default_mlp_config(rc.train.model_kind, system(rc.train.task).state_dim);
        m.hidden_layers = j["mlp"].value("hidden_layers", m.hidden_layers);
        m.hidden_units = j["mlp"].value("hidden_units", m.hidden_units);
        if (j["mlp"].contains("activation")) {
            const std::string a = j["mlp"]["activation"].get<std::string>();
            m.activation = a == "softplus" ? Activation::softplus
                           : a == "tanh"   ? Activation::tanh
                           : a == "relu"   ? Activation::relu
                                           : throw std::runtime_error("config.mlp: unknown activation " + a);
        }
        rc.train.mlp = m;
    }
    if (j.contains("coupling")) {
        require_keys(j["coupling"], {}, {"blocks", "subnet_layers", "subnet_units"}, "config.coupling");
        CouplingConfig c;
        c.blocks = j["coupling"].value("blocks", c.blocks);
        c.subnet_layers = j["coupling"].value("subnet_layers", c.subnet_layers);
        c.subnet_units = j["coupling"].value("subnet_units", c.subnet_units);
        rc.train.coupling = c;
    }

    rc.dataset_path = j.at("dataset").get<std::string>();
    rc.out_dir = j.at("out_dir").get<std::string>();
    rc.train.validate();
    return rc;
}

inline RunConfig read_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json j;
    in >> j;
    RunConfig rc = parse_run_config(j);
    // resolve paths relative to the config file before any work starts
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&base](const std::string& p) {
        std::filesystem::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).lexically_normal().string();
    };
    rc.dataset_path = resolve(rc.dataset_path);
    rc.out_dir = resolve(rc.out_dir);
    if (!std::filesystem::exists(rc.dataset_path))
        throw std::runtime_error("config: dataset not found: " + rc.dataset_path);
    return rc;
}

}  // namespace constrdyn::io
