#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "constrdyn/cli.hpp"

namespace {

std::optional<uint64_t> env_seed() {
    const char* v = std::getenv("CONSTRDYN_SEED");
    if (!v || !*v) return std::nullopt;
    try {
        return std::stoull(v);
    } catch (...) {
        throw std::runtime_error("CONSTRDYN_SEED is not a valid integer");
    }
}

}  // namespace

int main(int argc, char** argv) {
    using namespace constrdyn;

    CLI::App app{"learning ODE dynamics with physics constraints in the loss"};
    app.require_subcommand(1);

    // gen
    cli::GenArgs gen;
    std::string gen_task = "mass_spring", gen_sampler = "normal";
    uint32_t gen_n_traj = 0, gen_n_samples = 0;
    double gen_sigma = -1.0;
    CLI::App* cgen = app.add_subcommand("gen", "generate a trajectory dataset (NDJSON)");
    cgen->add_option("--task", gen_task, "mass_spring|single_pendulum|double_pendulum|damped_pendulum_xy")
        ->required();
    cgen->add_option("--out", gen.out, "output dataset path")->required();
    auto* gen_seed_opt = cgen->add_option("--seed", gen.seed, "dataset seed");
    auto* gen_ntraj_opt = cgen->add_option("--n-traj", gen_n_traj, "trajectory count (task default otherwise)");
    auto* gen_nsamp_opt = cgen->add_option("--n-samples", gen_n_samples, "samples per trajectory");
    auto* gen_sigma_opt = cgen->add_option("--sigma", gen_sigma, "state noise sigma (task default otherwise)");
    cgen->add_option("--sampler", gen_sampler, "normal|uniform initial-state sampler");
    cgen->add_option("--jobs", gen.jobs, "worker threads");

    // train
    cli::TrainArgs tr;
    uint64_t train_seed = 0;
    uint32_t train_jobs = 0;
    CLI::App* ctrain = app.add_subcommand("train", "train a model from a JSON run config");
    ctrain->add_option("--config", tr.config_path, "run config JSON")->required();
    auto* train_seed_opt = ctrain->add_option("--seed", train_seed, "override the config seed");
    auto* train_jobs_opt = ctrain->add_option("--jobs", train_jobs, "override worker threads");

    // eval
    cli::EvalArgs ev;
    std::string eval_task = "mass_spring", eval_sampler = "normal";
    CLI::App* ceval = app.add_subcommand("eval", "evaluate energy-deviation RMSE over test rollouts");
    ceval->add_option("--model", ev.model, "checkpoint path, or 'oracle' for the true dynamics")->required();
    ceval->add_option("--task", eval_task, "task name")->required();
    ceval->add_option("--n-test", ev.n_test, "number of test trajectories");
    ceval->add_option("--t-end", ev.t_end, "rollout horizon");
    ceval->add_option("--dt", ev.dt, "rollout step");
    auto* eval_seed_opt = ceval->add_option("--seed", ev.seed, "test-set seed");
    ceval->add_option("--sampler", eval_sampler, "normal|uniform initial-state sampler");
    ceval->add_option("--report", ev.report_path, "output report JSON")->required();
    ceval->add_option("--series-csv", ev.series_csv, "also write energy-vs-time CSV");
    ceval->add_option("--label", ev.label, "method label for summary tables");
    ceval->add_option("--jobs", ev.jobs, "worker threads");

    // report
    cli::ReportArgs rp;
    CLI::App* creport = app.add_subcommand("report", "combine eval reports into a methods-by-tasks CSV");
    creport->add_option("--inputs", rp.inputs, "eval report JSON files")->required()->expected(-1);
    creport->add_option("--csv", rp.csv, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const std::optional<uint64_t> env = env_seed();
        if (cgen->parsed()) {
            gen.task = task_from_string(gen_task);
            gen.sampler = sampler_from_string(gen_sampler);
            if (gen_ntraj_opt->count()) gen.n_traj = gen_n_traj;
            if (gen_nsamp_opt->count()) gen.n_samples = gen_n_samples;
            if (gen_sigma_opt->count()) gen.sigma = gen_sigma;
            if (!gen_seed_opt->count() && env) gen.seed = *env;  // flag > env > default
            return cli::cmd_gen(gen);
        }
        if (ctrain->parsed()) {
            if (train_seed_opt->count()) tr.seed_override = train_seed;
            else if (env) tr.seed_override = *env;
            if (train_jobs_opt->count()) tr.jobs_override = train_jobs;
            return cli::cmd_train(tr);
        }
        if (ceval->parsed()) {
            ev.task = task_from_string(eval_task);
            ev.sampler = sampler_from_string(eval_sampler);
            if (!eval_seed_opt->count() && env) ev.seed = *env;
            return cli::cmd_eval(ev);
        }
        if (creport->parsed()) return cli::cmd_report(rp);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
