#include <catch2/catch_amalgamated.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = RATIOFLOW_CLI_PATH;

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "ratioflow_test_cli";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    const auto out_path = work_dir() / "stdout.txt";
    const auto err_path = work_dir() / "stderr.txt";
    const std::string cmd = env_prefix + kCli + " " + args + " >" + out_path.string() + " 2>" +
                            err_path.string();
    const int status = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WEXITSTATUS(status);
    res.out = slurp(out_path);
    res.err = slurp(err_path);
    return res;
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

const char* kTinyConfig = R"({
  "seed": 7,
  "schedule": {"kind": "linear-floor", "sigma_min": 0.1},
  "model": {"latent_width": 24, "encoder_layers": 2, "time_embed_dim": 8,
            "time_feature_width": 8, "cond_embed_dim": 4, "head_width": 12, "head_layers": 2},
  "train": {"steps": 300, "batch_size": 32, "learning_rate": 0.001,
            "dropout_beta": 0.3, "seed": 3},
  "solver": {"method": "rk4", "steps": 32, "t_eps": 0.001}
})";

}  // namespace

TEST_CASE("generate is deterministic and writes the declared layout") {
    const auto dir = work_dir();
    const auto a = dir / "gen_a.csv";
    const auto b = dir / "gen_b.csv";
    REQUIRE(run_cli("generate gaussians --s 1 --d 2 --n 100 --seed 7 --out " + a.string())
                .exit_code == 0);
    REQUIRE(run_cli("generate gaussians --s 1 --d 2 --n 100 --seed 7 --out " + b.string())
                .exit_code == 0);
    const std::string ta = slurp(a);
    CHECK(ta == slurp(b));
    CHECK(ta.rfind("x0,x1,cond\n", 0) == 0);
    CHECK(count_lines(ta) == 201);  // header + n per condition x 2
}

TEST_CASE("train and estimate round-trip through the CLI") {
    const auto dir = work_dir();
    const auto data = dir / "train.csv";
    const auto cfg = dir / "cfg.json";
    const auto ckpt = dir / "model.ckpt";
    write_file(cfg, kTinyConfig);
    REQUIRE(run_cli("generate gaussians --s 1 --d 2 --n 300 --seed 5 --out " + data.string())
                .exit_code == 0);

    const auto tr = run_cli("train --data " + data.string() + " --config " + cfg.string() +
                            " --out-checkpoint " + ckpt.string());
    REQUIRE(tr.exit_code == 0);
    CHECK(fs::exists(ckpt));
    // loss trace row count equals the step count
    CHECK(count_lines(slurp(dir / "model.ckpt.loss.csv")) == 301);

    // training is deterministic: a second run reproduces the checkpoint bytes
    const auto ckpt2 = dir / "model2.ckpt";
    REQUIRE(run_cli("train --data " + data.string() + " --config " + cfg.string() +
                    " --out-checkpoint " + ckpt2.string())
                .exit_code == 0);
    CHECK(slurp(ckpt) == slurp(ckpt2));

    const auto est = dir / "est.csv";
    const auto r1 = run_cli("estimate --checkpoint " + ckpt.string() + " --data " + data.string() +
                            " --num-cond 1 --den-cond 0 --solver-steps 24 --out " + est.string());
    REQUIRE(r1.exit_code == 0);
    const std::string csv = slurp(est);
    CHECK(csv.rfind("index,log_ratio,converged\n", 0) == 0);
    CHECK(count_lines(csv) == 601);
    CHECK(fs::exists(dir / "est.csv.summary.json"));

    // estimates are reproducible byte for byte
    const auto est2 = dir / "est2.csv";
    REQUIRE(run_cli("estimate --checkpoint " + ckpt.string() + " --data " + data.string() +
                    " --num-cond 1 --den-cond 0 --solver-steps 24 --out " + est2.string())
                .exit_code == 0);
    CHECK(csv == slurp(est2));

    // identical conditions are rejected up front
    CHECK(run_cli("estimate --checkpoint " + ckpt.string() + " --data " + data.string() +
                  " --num-cond 1 --den-cond 1 --out " + (dir / "no.csv").string())
              .exit_code == 1);

    // unknown tokens name the variable and its vocabulary
    const auto bad = run_cli("estimate --checkpoint " + ckpt.string() + " --data " +
                             data.string() + " --num-cond 9 --den-cond 0 --out " +
                             (dir / "no.csv").string());
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.find("valid: 0..1") != std::string::npos);

    // s2 on a dropout-trained checkpoint runs without the warning
    const auto s2 = run_cli("estimate --checkpoint " + ckpt.string() + " --data " + data.string() +
                            " --num-cond 1 --den-cond 0 --variant s2 --solver-steps 16 --out " +
                            (dir / "s2.csv").string());
    CHECK(s2.exit_code == 0);
    CHECK(s2.err.find("warning") == std::string::npos);
}

TEST_CASE("estimate warns when s2 lacks a dropout-trained empty token") {
    const auto dir = work_dir();
    const auto data = dir / "nodrop.csv";
    const auto cfg = dir / "nodrop.json";
    const auto ckpt = dir / "nodrop.ckpt";
    REQUIRE(run_cli("generate gaussians --s 1 --d 1 --n 100 --seed 2 --out " + data.string())
                .exit_code == 0);
    write_file(cfg, R"({"model": {"latent_width": 8, "encoder_layers": 1, "time_embed_dim": 4,
                        "time_feature_width": 4, "cond_embed_dim": 2, "head_width": 8,
                        "head_layers": 1},
                        "train": {"steps": 40, "batch_size": 16, "dropout_beta": 0.0}})");
    REQUIRE(run_cli("train --data " + data.string() + " --config " + cfg.string() +
                    " --out-checkpoint " + ckpt.string())
                .exit_code == 0);
    const auto r = run_cli("estimate --checkpoint " + ckpt.string() + " --data " + data.string() +
                           " --num-cond 1 --den-cond 0 --variant s2 --solver-steps 8 --out " +
                           (dir / "w.csv").string());
    CHECK(r.exit_code == 0);
    CHECK(r.err.find("warning") != std::string::npos);
}

TEST_CASE("resuming from a checkpoint validates the data dimension") {
    const auto dir = work_dir();
    const auto d1 = dir / "resume_d1.csv";
    const auto d2 = dir / "resume_d2.csv";
    const auto cfg = dir / "resume.json";
    const auto ckpt = dir / "resume.ckpt";
    write_file(cfg, R"({"train": {"steps": 30, "batch_size": 16},
                        "model": {"latent_width": 8, "encoder_layers": 1, "time_embed_dim": 4,
                                  "time_feature_width": 4, "cond_embed_dim": 2,
                                  "head_width": 8, "head_layers": 1}})");
    REQUIRE(run_cli("generate gaussians --s 1 --d 1 --n 60 --seed 2 --out " + d1.string())
                .exit_code == 0);
    REQUIRE(run_cli("generate gaussians --s 1 --d 3 --n 60 --seed 2 --out " + d2.string())
                .exit_code == 0);
    REQUIRE(run_cli("train --data " + d1.string() + " --config " + cfg.string() +
                    " --out-checkpoint " + ckpt.string())
                .exit_code == 0);
    // resuming against the matching data works; a different dimension is refused
    CHECK(run_cli("train --data " + d1.string() + " --config " + cfg.string() +
                  " --init-checkpoint " + ckpt.string() + " --out-checkpoint " +
                  (dir / "resume2.ckpt").string())
              .exit_code == 0);
    const auto bad = run_cli("train --data " + d2.string() + " --config " + cfg.string() +
                             " --init-checkpoint " + ckpt.string() + " --out-checkpoint " +
                             (dir / "resume3.ckpt").string());
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.find("data_dim") != std::string::npos);
}

TEST_CASE("config validation") {
    const auto dir = work_dir();
    const auto defaults = run_cli("config print-defaults --kind da");
    REQUIRE(defaults.exit_code == 0);
    const auto parsed = nlohmann::json::parse(defaults.out);
    CHECK(parsed.contains("train"));
    CHECK(parsed["benchmark"]["kind"] == "da");

    const auto cfg = dir / "unknown.json";
    write_file(cfg, R"({"train": {"steps": 10}, "no_such_section": 1})");
    const auto data = dir / "cfg_data.csv";
    REQUIRE(run_cli("generate gaussians --d 1 --n 30 --seed 1 --out " + data.string()).exit_code ==
            0);
    const auto r = run_cli("train --data " + data.string() + " --config " + cfg.string() +
                           " --out-checkpoint " + (dir / "x.ckpt").string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("no_such_section") != std::string::npos);
}

TEST_CASE("benchmark dry-run, reports, determinism, and assertion exits") {
    const auto dir = work_dir();
    const auto cfg = dir / "bench.json";
    write_file(cfg, R"({
      "seed": 7,
      "schedule": {"kind": "linear-floor", "sigma_min": 0.1},
      "model": {"latent_width": 16, "encoder_layers": 2, "time_embed_dim": 8,
                "time_feature_width": 8, "cond_embed_dim": 4, "head_width": 8, "head_layers": 1},
      "train": {"steps": 120, "batch_size": 32, "learning_rate": 0.001, "dropout_beta": 0.2,
                "seed": 3},
      "solver": {"method": "rk4", "steps": 24, "t_eps": 0.001},
      "benchmark": {"kind": "gaussians", "s": 1.0, "d": 2, "n_train": 200, "n_test": 60},
      "assert": [{"name": "oracle_field.mse", "max": 1e-5}]
    })");

    CHECK(run_cli("benchmark gaussians --config " + cfg.string() + " --dry-run --out " +
                  (dir / "ignored.json").string())
              .exit_code == 0);

    const auto rep1 = dir / "rep1.json";
    const auto rep2 = dir / "rep2.json";
    const auto r1 = run_cli("benchmark gaussians --config " + cfg.string() + " --out " +
                            rep1.string() + " --timing-out " + (dir / "t1.json").string());
    REQUIRE(r1.exit_code == 0);
    REQUIRE(run_cli("benchmark gaussians --config " + cfg.string() + " --out " + rep2.string())
                .exit_code == 0);
    CHECK(slurp(rep1) == slurp(rep2));  // canonical reports carry no wall-clock data

    const auto rep = nlohmann::json::parse(slurp(rep1));
    CHECK(rep["schema"] == 1);
    CHECK(rep.contains("spec_hash"));
    bool found_runtime_field = false;
    for (const auto& rec : rep["records"])
        if (rec["name"].get<std::string>().find("runtime") != std::string::npos)
            found_runtime_field = true;
    CHECK_FALSE(found_runtime_field);
    const auto timing = nlohmann::json::parse(slurp(dir / "t1.json"));
    CHECK(timing["timing"].size() >= 3);

    // an unsatisfiable threshold exits with the assertion code
    write_file(cfg, R"({
      "seed": 7,
      "model": {"latent_width": 16, "encoder_layers": 2, "time_embed_dim": 8,
                "time_feature_width": 8, "cond_embed_dim": 4, "head_width": 8, "head_layers": 1},
      "train": {"steps": 60, "batch_size": 32, "seed": 3},
      "solver": {"steps": 16},
      "benchmark": {"kind": "gaussians", "n_train": 100, "n_test": 40},
      "assert": [{"name": "scratio.mse", "max": 1e-12}]
    })");
    CHECK(run_cli("benchmark gaussians --config " + cfg.string() + " --out " +
                  (dir / "rep3.json").string())
              .exit_code == 3);
}

TEST_CASE("oracle-check exit codes") {
    CHECK(run_cli("oracle-check --d 2 --s 1 --n 100").exit_code == 0);
    // degraded solver: errors stay finite but exceed the threshold
    const auto r = run_cli("oracle-check --d 2 --s 1 --n 100 --solver-method euler "
                           "--solver-steps 10");
    CHECK(r.exit_code == 3);
    const auto parsed = nlohmann::json::parse(r.out);
    CHECK(parsed["max_err_s1"].get<double>() > 1e-3);
    CHECK(std::isfinite(parsed["max_err_s1"].get<double>()));
}

TEST_CASE("RATIOFLOW_THREADS is validated and honored") {
    CHECK(run_cli("oracle-check --d 2 --n 50", "RATIOFLOW_THREADS=2 ").exit_code == 0);
    CHECK(run_cli("oracle-check --d 2 --n 50", "RATIOFLOW_THREADS=zero ").exit_code == 1);
}
