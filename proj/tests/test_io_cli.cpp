#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "constrdyn/cli.hpp"
#include "constrdyn/io.hpp"

using namespace constrdyn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("constrdyn_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CONSTRDYN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("dataset NDJSON round trip preserves every bit", "[io]") {
    TempDir tmp;
    DataProtocol protocol{4, 9, 0.0, 6.2831853071795862};
    Dataset ds = generate_dataset(Task::single_pendulum, protocol, 0.1, 77, Sampler::normal);
    const std::string path = tmp.file("d.ndjson");
    io::write_dataset(path, ds);

    Dataset back = io::read_dataset(path, Task::single_pendulum);
    REQUIRE(back.trajectories.size() == ds.trajectories.size());
    for (size_t i = 0; i < ds.trajectories.size(); ++i) {
        REQUIRE(back.trajectories[i].seed == ds.trajectories[i].seed);
        REQUIRE(back.trajectories[i].times == ds.trajectories[i].times);
        REQUIRE(back.trajectories[i].states == ds.trajectories[i].states);
        REQUIRE(back.trajectories[i].derivs == ds.trajectories[i].derivs);
    }
    // rewriting the parsed dataset reproduces the file bytes
    const std::string path2 = tmp.file("d2.ndjson");
    io::write_dataset(path2, back);
    REQUIRE(slurp(path) == slurp(path2));
}

TEST_CASE("checkpoint reload reproduces forward outputs bitwise", "[io]") {
    TempDir tmp;
    for (ModelKind kind : {ModelKind::node, ModelKind::hnn, ModelKind::transformed_node}) {
        DynamicsModel m = make_model(kind, 2, 99,
                                     MlpConfig{2, 2, 12, Activation::softplus,
                                               kind == ModelKind::hnn ? 1u : 2u},
                                     kind == ModelKind::transformed_node
                                         ? std::optional<CouplingConfig>({2, 1, 6})
                                         : std::nullopt);
        if (kind == ModelKind::transformed_node) {
            Rng wrng(1);
            for (size_t i = 0; i < coupling_param_count(*m.coupling, 2); ++i)
                m.parameters[i] = wrng.uniform(-0.3, 0.3);
        }
        m.epoch = 17;
        const std::string path = tmp.file("ckpt.json");
        io::write_checkpoint(path, m);
        DynamicsModel back = io::read_checkpoint(path);
        REQUIRE(back.parameters == m.parameters);
        REQUIRE(back.kind == m.kind);
        REQUIRE(back.seed == m.seed);
        REQUIRE(back.epoch == m.epoch);
        const std::vector<double> probe{0.37, -0.81};
        REQUIRE(model_forward(back, probe) == model_forward(m, probe));
    }
}

TEST_CASE("corrupt checkpoints are rejected", "[io]") {
    TempDir tmp;
    DynamicsModel m = make_model(ModelKind::node, 2, 1, MlpConfig{2, 1, 4, Activation::softplus, 2});
    io::json j = io::checkpoint_to_json(m);
    j["parameters"].erase(0);  // parameter count no longer matches the config
    const std::string path = tmp.file("bad.json");
    std::ofstream(path) << j.dump();
    REQUIRE_THROWS_AS(io::read_checkpoint(path), std::runtime_error);
}

TEST_CASE("eval report JSON round trip, with overflow as null", "[io]") {
    TempDir tmp;
    EvalReport r;
    r.task = "mass_spring";
    r.model_label = "node";
    r.n_test = 3;
    r.per_trajectory_rmse = {0.5, std::numeric_limits<double>::infinity(), 0.25};
    r.median = 0.5;
    r.p2_5 = 0.25;
    r.p97_5 = std::numeric_limits<double>::infinity();
    r.overflow_count = 1;
    const std::string path = tmp.file("r.json");
    io::write_report(path, r);
    REQUIRE(slurp(path).find("null") != std::string::npos);

    EvalReport back = io::read_report(path);
    REQUIRE(back.per_trajectory_rmse == r.per_trajectory_rmse);
    REQUIRE(back.p97_5 == r.p97_5);
    REQUIRE(back.overflow_count == 1);
    REQUIRE(back.model_label == "node");
}

TEST_CASE("summary csv arranges methods by tasks", "[io]") {
    TempDir tmp;
    EvalReport a;
    a.task = "mass_spring";
    a.model_label = "node";
    a.median = 0.086;
    a.p2_5 = 0.009;
    a.p97_5 = 0.181;
    EvalReport b = a;
    b.model_label = "hamiltonian";
    b.median = 0.0017;
    b.p2_5 = 0.0005;
    b.p97_5 = 0.0086;
    const std::string path = tmp.file("table.csv");
    io::write_summary_csv(path, {a, b});
    const std::string text = slurp(path);
    REQUIRE(text.find("method,mass_spring\n") == 0);
    REQUIRE(text.find("node,") != std::string::npos);
    REQUIRE(text.find("hamiltonian,") != std::string::npos);
    // two data rows plus header
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("run config validation is strict", "[io]") {
    TempDir tmp;
    const std::string data = tmp.file("d.ndjson");
    {
        DataProtocol protocol{2, 5, 0.0, 6.28};
        io::write_dataset(data, generate_dataset(Task::mass_spring, protocol, 0.0, 1, Sampler::normal));
    }
    io::json good = {
        {"task", "mass_spring"}, {"model_kind", "node"},
        {"constraint", {{"kind", "hamiltonian"}, {"weight", 1e5}}},
        {"dataset", data},       {"out_dir", tmp.file("out")},
        {"epochs", 3},           {"batch_size", 8},
    };
    REQUIRE_NOTHROW(io::parse_run_config(good));

    io::json unknown = good;
    unknown["learning_rate"] = 1e-3;  // must be "lr"
    REQUIRE_THROWS_WITH(io::parse_run_config(unknown), Catch::Matchers::ContainsSubstring("unknown key"));

    io::json bad_nested = good;
    bad_nested["constraint"]["wc"] = 1.0;
    REQUIRE_THROWS_WITH(io::parse_run_config(bad_nested), Catch::Matchers::ContainsSubstring("unknown key"));

    io::json missing = good;
    missing.erase("dataset");
    REQUIRE_THROWS_WITH(io::parse_run_config(missing), Catch::Matchers::ContainsSubstring("missing key"));

    // default constraint weights follow the task when unspecified
    io::json defaulted = good;
    defaulted["constraint"] = {{"kind", "hamiltonian"}};
    REQUIRE(io::parse_run_config(defaulted).train.constraint.weight == 1e5);
    defaulted["task"] = "damped_pendulum_xy";
    defaulted["constraint"] = {{"kind", "dissipative"}};
    io::RunConfig rc = io::parse_run_config(defaulted);
    REQUIRE(rc.train.constraint.weight == 1e2);
    REQUIRE(rc.train.constraint.bounds == std::vector<double>(4, 0.0));
}

TEST_CASE("library-level pipeline: gen, train, eval, report", "[io]") {
    TempDir tmp;

    cli::GenArgs gen;
    gen.task = Task::mass_spring;
    gen.out = tmp.file("train.ndjson");
    gen.seed = 7;
    gen.n_traj = 6;
    gen.n_samples = 10;
    REQUIRE(cli::cmd_gen(gen) == 0);
    {
        std::ifstream in(gen.out);
        std::string line;
        int lines = 0;
        while (std::getline(in, line)) ++lines;
        REQUIRE(lines == 6);
    }

    io::json cfg = {
        {"task", "mass_spring"},
        {"model_kind", "node"},
        {"constraint", {{"kind", "none"}}},
        {"dataset", gen.out},
        {"out_dir", tmp.file("run")},
        {"epochs", 2},
        {"batch_size", 16},
        {"mlp", {{"hidden_layers", 1}, {"hidden_units", 8}}},
        {"checkpoint_every", 1},
    };
    const std::string cfg_path = tmp.file("cfg.json");
    std::ofstream(cfg_path) << cfg.dump(2);
    REQUIRE(cli::cmd_train({cfg_path, std::nullopt, std::nullopt}) == 0);
    REQUIRE(fs::exists(tmp.file("run/metrics.csv")));
    REQUIRE(fs::exists(tmp.file("run/checkpoint_final.json")));
    REQUIRE(fs::exists(tmp.file("run/checkpoint_epoch1.json")));
    {
        std::string metrics = slurp(tmp.file("run/metrics.csv"));
        REQUIRE(metrics.rfind("epoch,mse,penalty,total,wall_ms\n", 0) == 0);
        REQUIRE(std::count(metrics.begin(), metrics.end(), '\n') == 3);
    }

    cli::EvalArgs ev;
    ev.model = tmp.file("run/checkpoint_final.json");
    ev.task = Task::mass_spring;
    ev.n_test = 4;
    ev.t_end = 10.0;
    ev.seed = 3;
    ev.report_path = tmp.file("node.json");
    ev.series_csv = tmp.file("series.csv");
    REQUIRE(cli::cmd_eval(ev) == 0);
    REQUIRE(fs::exists(ev.report_path));
    {
        std::string series = slurp(ev.series_csv);
        REQUIRE(series.rfind("traj,t,e_model,e_true\n", 0) == 0);
    }

    cli::EvalArgs oracle = ev;
    oracle.model = "oracle";
    oracle.report_path = tmp.file("oracle.json");
    oracle.series_csv.clear();
    oracle.n_test = 5;
    oracle.t_end = 100.0;
    REQUIRE(cli::cmd_eval(oracle) == 0);
    EvalReport oracle_report = io::read_report(oracle.report_path);
    REQUIRE(oracle_report.median < 1e-4);  // the true dynamics agree with themselves

    cli::ReportArgs rp;
    rp.inputs = {ev.report_path, oracle.report_path};
    rp.csv = tmp.file("table.csv");
    REQUIRE(cli::cmd_report(rp) == 0);
    const std::string table = slurp(rp.csv);
    REQUIRE(table.find("method,mass_spring") == 0);
    REQUIRE(std::count(table.begin(), table.end(), '\n') == 3);
}

TEST_CASE("command line binary: determinism and seed precedence", "[io]") {
    TempDir tmp;
    const std::string a = tmp.file("a.ndjson"), b = tmp.file("b.ndjson"), c = tmp.file("c.ndjson");

    REQUIRE(run_cli("gen --task mass_spring --seed 7 --n-traj 4 --n-samples 6 --out " + a) == 0);
    REQUIRE(run_cli("gen --task mass_spring --seed 7 --n-traj 4 --n-samples 6 --out " + b) == 0);
    REQUIRE(slurp(a) == slurp(b));  // same seed, identical bytes

    // CONSTRDYN_SEED applies when the flag is absent, and the flag wins over it
    const std::string env_cmd = std::string("CONSTRDYN_SEED=7 ") + CONSTRDYN_CLI_PATH +
                                " gen --task mass_spring --n-traj 4 --n-samples 6 --out " + c +
                                " > /dev/null 2>&1";
    REQUIRE(std::system(env_cmd.c_str()) == 0);
    REQUIRE(slurp(a) == slurp(c));

    const std::string env_flag_cmd = std::string("CONSTRDYN_SEED=99 ") + CONSTRDYN_CLI_PATH +
                                     " gen --task mass_spring --seed 7 --n-traj 4 --n-samples 6 --out " + c +
                                     " > /dev/null 2>&1";
    REQUIRE(std::system(env_flag_cmd.c_str()) == 0);
    REQUIRE(slurp(a) == slurp(c));

    // bad arguments exit nonzero
    REQUIRE(run_cli("gen --task not_a_task --out " + tmp.file("x.ndjson")) != 0);
    REQUIRE(run_cli("eval --model missing.json --task mass_spring --report " + tmp.file("r.json")) != 0);
}
