#pragma once

// Library-level command implementations behind the command-line tool, so the
// pipeline is testable without spawning processes.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "constrdyn/io.hpp"

namespace constrdyn::cli {

struct GenArgs {
    Task task = Task::mass_spring;
    std::string out;
    uint64_t seed = 0;
    std::optional<uint32_t> n_traj, n_samples;
    std::optional<double> sigma;
    Sampler sampler = Sampler::normal;
    uint32_t jobs = 1;
};

inline int cmd_gen(const GenArgs& args) {
    DataProtocol protocol = default_protocol(args.task);
    if (args.n_traj) protocol.n_traj = *args.n_traj;
    if (args.n_samples) protocol.n_samples = *args.n_samples;
    const double sigma = args.sigma.value_or(default_noise_sigma(args.task));

    Dataset ds = generate_dataset(args.task, protocol, sigma, args.seed, args.sampler, args.jobs);
    io::write_dataset(args.out, ds);
    if (!std::filesystem::exists(args.out) || std::filesystem::file_size(args.out) == 0)
        throw std::runtime_error("gen: output was not written: " + args.out);

    std::cout << "wrote " << args.out << ": task=" << to_string(args.task) << " n_traj=" << protocol.n_traj
              << " n_samples=" << protocol.n_samples << " sigma=" << sigma << " seed=" << args.seed
              << " sampler=" << to_string(args.sampler) << "\n";
    return 0;
}

struct TrainArgs {
    std::string config_path;
    std::optional<uint64_t> seed_override;  // flag > CONSTRDYN_SEED > config
    std::optional<uint32_t> jobs_override;
};

inline int cmd_train(const TrainArgs& args) {
    io::RunConfig rc = io::read_run_config(args.config_path);
    if (args.seed_override) rc.train.seed = *args.seed_override;
    if (args.jobs_override) rc.train.jobs = *args.jobs_override;

    std::filesystem::create_directories(rc.out_dir);
    const std::filesystem::path out_dir(rc.out_dir);

    Dataset data = io::read_dataset(rc.dataset_path, rc.train.task);
    auto sink = [&](const DynamicsModel& m, int64_t epoch) {
        io::write_checkpoint((out_dir / ("checkpoint_epoch" + std::to_string(epoch) + ".json")).string(), m);
    };
    TrainResult result = train(rc.train, data, sink);

    io::write_metrics_csv((out_dir / "metrics.csv").string(), result.metrics);
    const std::string final_path = (out_dir / "checkpoint_final.json").string();
    io::write_checkpoint(final_path, result.model);
    // validate the declared outputs before reporting success
    DynamicsModel reread = io::read_checkpoint(final_path);
    if (reread.parameters != result.model.parameters)
        throw std::runtime_error("train: checkpoint validation failed");

    if (result.aborted) {
        std::cerr << "train aborted: " << result.abort_reason << " (last good checkpoint written)\n";
        return 1;
    }
    std::cout << "trained " << to_string(rc.train.model_kind) << " on " << to_string(rc.train.task) << ": epochs="
              << rc.train.epochs << " final_mse="
              << (result.metrics.empty() ? 0.0 : result.metrics.back().mse) << " out=" << rc.out_dir << "\n";
    return 0;
}

struct EvalArgs {
    std::string model;  // checkpoint path, or "oracle" for the true dynamics
    Task task = Task::mass_spring;
    uint32_t n_test = 100;
    double t_end = 100.0;
    double dt = 0.1;
    uint64_t seed = 0;
    Sampler sampler = Sampler::normal;
    uint32_t jobs = 1;
    std::string report_path;
    std::string series_csv;  // optional energy-vs-time series
    std::string label;       // row label in summary tables
};

inline int cmd_eval(const EvalArgs& args) {
    EvalOptions opt;
    opt.n_test = args.n_test;
    opt.t_end = args.t_end;
    opt.dt = args.dt;
    opt.seed = args.seed;
    opt.sampler = args.sampler;
    opt.jobs = args.jobs;

    std::function<RhsFn()> make_rhs;
    std::string label = args.label;
    if (args.model == "oracle") {
        const SystemDef& def = system(args.task);
        make_rhs = [&def]() -> RhsFn { return [&def](const std::vector<double>& s) { return def.rhs(s); }; };
        if (label.empty()) label = "oracle";
    } else {
        DynamicsModel model = io::read_checkpoint(args.model);
        if (model.state_dim != system(args.task).state_dim)
            throw std::runtime_error("eval: model state dimension does not match the task");
        make_rhs = [model]() -> RhsFn { return ModelRhs(model); };
        if (label.empty()) label = to_string(model.kind);
    }

    std::vector<EnergySeries> series;
    EvalReport report = aggregate(make_rhs, args.task, opt, args.series_csv.empty() ? nullptr : &series);
    report.model_label = label;
    io::write_report(args.report_path, report);
    if (io::read_report(args.report_path).per_trajectory_rmse != report.per_trajectory_rmse)
        throw std::runtime_error("eval: report validation failed");
    if (!args.series_csv.empty()) io::write_energy_series_csv(args.series_csv, series);

    std::cout << "evaluated " << label << " on " << to_string(args.task) << ": n_test=" << report.n_test
              << " median=" << report.median << " p2.5=" << report.p2_5 << " p97.5=" << report.p97_5
              << " overflows=" << report.overflow_count << "\n";
    return 0;
}

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string csv;
};

inline int cmd_report(const ReportArgs& args) {
    if (args.inputs.empty()) throw std::runtime_error("report: no input reports given");
    std::vector<EvalReport> reports;
    for (const std::string& path : args.inputs) reports.push_back(io::read_report(path));
    io::write_summary_csv(args.csv, reports);
    std::cout << "wrote " << args.csv << " from " << reports.size() << " report(s)\n";
    return 0;
}

}  // namespace constrdyn::cli
