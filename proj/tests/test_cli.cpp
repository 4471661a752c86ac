#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const fs::path base = fs::temp_directory_path() / ("markovlab_cli_" + std::to_string(counter++));
    const fs::path out_file = base.string() + ".out";
    const fs::path err_file = base.string() + ".err";
    const std::string cmd = env + (env.empty() ? "" : " ") + MARKOVLAB_CLI_PATH + " " + args +
                            " >" + out_file.string() + " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    fs::remove(out_file);
    fs::remove(err_file);
    return r;
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("markovlab_cli_dir_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("solve runs and is deterministic") {
    const std::string args = "solve --n 5 --seed 11 --method direct --target kernel";
    const auto a = run_cli(args);
    const auto b = run_cli(args);
    CHECK(a.exit_code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.find("pi:") != std::string::npos);
    CHECK(a.out.find("method: direct") != std::string::npos);
}

TEST_CASE("solve rejects missing or contradictory inputs") {
    const auto missing = run_cli("solve --method direct");
    CHECK(missing.exit_code == 1);
    CHECK(missing.err.find("--n") != std::string::npos);

    const auto unknown = run_cli("solve --n 4 --frobnicate");
    CHECK(unknown.exit_code == 1);

    const auto bad_law = run_cli("solve --n 4 --law nope:1");
    CHECK(bad_law.exit_code == 1);
    CHECK(bad_law.err.find("nope") != std::string::npos);

    const auto bad_combo = run_cli("solve --n 4 --target generator --method power");
    CHECK(bad_combo.exit_code == 1);

    const auto no_sub = run_cli("");
    CHECK(no_sub.exit_code == 1);

    const auto help = run_cli("--help");
    CHECK(help.exit_code == 0);
    CHECK(help.out.find("solve") != std::string::npos);
}

TEST_CASE("gen then solve from the dump file") {
    const auto dir = fresh_dir("gen");
    const auto gen = run_cli("gen --n 6 --seed 3 --out-dir " + dir.string());
    CHECK(gen.exit_code == 0);
    CHECK(fs::exists(dir / "matrix.txt"));
    CHECK(gen.out.find("primitive") != std::string::npos);

    const auto solve = run_cli("solve --in " + (dir / "matrix.txt").string() +
                               " --method tree-cofactor --target generator");
    CHECK(solve.exit_code == 0);
    CHECK(solve.out.find("pi:") != std::string::npos);

    const auto direct = run_cli("solve --in " + (dir / "matrix.txt").string() +
                                " --method direct --target generator --precision 12");
    const auto pi_line = [](const std::string& s) {
        return s.substr(s.find("pi:"));
    };
    const auto tree12 = run_cli("solve --in " + (dir / "matrix.txt").string() +
                                " --method tree-cofactor --target generator --precision 12");
    CHECK(pi_line(direct.out) == pi_line(tree12.out));
}

TEST_CASE("experiment outputs are reproducible") {
    const auto dir1 = fresh_dir("fig1a");
    const auto dir2 = fresh_dir("fig1b");
    const std::string flags = "fig1 --n-grid 12,16 --trials 2 --panel-n 10 --seed 4 --out-dir ";
    CHECK(run_cli(flags + dir1.string()).exit_code == 0);
    CHECK(run_cli(flags + dir2.string()).exit_code == 0);
    for (const char* name : {"fig1_a.csv", "fig1_b.csv", "fig1_c.csv"})
        CHECK(slurp(dir1 / name) == slurp(dir2 / name));
    CHECK(slurp(dir1 / "fig1_c.csv").rfind("experiment,n,alpha,trial,metric,value,std\n", 0) == 0);
}

TEST_CASE("config files load with flag precedence") {
    const auto dir = fresh_dir("cfg");
    const auto cfg_path = dir / "run.cfg";
    {
        std::ofstream out(cfg_path);
        out << "# comment\n";
        out << "trials = 3\n";
        out << "n_grid = 12,16\n";
        out << "panel_n = 10\n";
    }
    const auto run = run_cli("fig1 --config " + cfg_path.string() + " --trials 2 --seed 4 --out-dir " +
                             dir.string());
    CHECK(run.exit_code == 0);
    const auto manifest = slurp(dir / "fig1_manifest.json");
    CHECK(manifest.find("\"trials\": \"2\"") != std::string::npos);
    CHECK(manifest.find("\"n_grid\": \"12,16\"") != std::string::npos);

    {
        std::ofstream out(cfg_path);
        out << "trials = 2\nnot a key value\n";
    }
    const auto bad = run_cli("fig1 --config " + cfg_path.string());
    CHECK(bad.exit_code == 1);
    CHECK(bad.err.find(":2:") != std::string::npos);

    {
        std::ofstream out(cfg_path);
        out << "bogus = 1\n";
    }
    const auto unknown = run_cli("fig1 --config " + cfg_path.string());
    CHECK(unknown.exit_code == 1);
    CHECK(unknown.err.find("bogus") != std::string::npos);
}

TEST_CASE("manifest files are accepted as configs") {
    const auto dir1 = fresh_dir("man1");
    const auto dir2 = fresh_dir("man2");
    const std::string flags = "fig1 --n-grid 12,16 --trials 2 --panel-n 10 --seed 8 --out-dir ";
    CHECK(run_cli(flags + dir1.string()).exit_code == 0);
    const auto rerun = run_cli("fig1 --config " + (dir1 / "fig1_manifest.json").string() +
                               " --out-dir " + dir2.string());
    CHECK(rerun.exit_code == 0);
    for (const char* name : {"fig1_a.csv", "fig1_b.csv", "fig1_c.csv"})
        CHECK(slurp(dir1 / name) == slurp(dir2 / name));
}

TEST_CASE("environment seed applies when no flag is given") {
    const auto with_env = run_cli("solve --n 5 --method direct --target kernel",
                                  "MARKOVLAB_SEED=99");
    const auto with_flag = run_cli("solve --n 5 --seed 99 --method direct --target kernel");
    CHECK(with_env.exit_code == 0);
    CHECK(with_env.out == with_flag.out);

    const auto bad_env = run_cli("solve --n 5", "MARKOVLAB_SEED=abc");
    CHECK(bad_env.exit_code == 1);
}

TEST_CASE("lemma suite exits zero on the degenerate fixture") {
    const auto dir = fresh_dir("lemma");
    const auto run = run_cli(
        "lemmas --law const:1 --allow-degenerate --n-grid 10,20 --trials 3 --mc-trials 50 "
        "--seed 5 --out-dir " +
        dir.string());
    CHECK(run.exit_code == 0);
    CHECK(run.out.find("lemma suite: all checks passed") != std::string::npos);
    CHECK(fs::exists(dir / "lemmas_verdicts.csv"));
}
