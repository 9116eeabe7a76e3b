#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "windlab/cosim.hpp"
#include "windlab/env.hpp"
#include "windlab/marl.hpp"

using namespace windlab;
namespace fs = std::filesystem;

namespace {

const std::string kCli = WINDLAB_CLI_PATH;

std::string work_dir() {
  static const std::string dir = [] {
    const std::string d = (fs::temp_directory_path() / "windlab_cli_test").string();
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI, captures stdout+stderr, returns the exit code.
int run_cli(const std::string& args, std::string* output = nullptr) {
  static int counter = 0;
  const std::string log = work_dir() + "/cmd_" + std::to_string(counter++) + ".log";
  const int status = std::system((kCli + " " + args + " >" + log + " 2>&1").c_str());
  if (output) {
    std::ifstream in(log);
    std::ostringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// Emitted CSVs parse back losslessly: re-serializing the parse reproduces the
// exact bytes.
void check_csv_roundtrip(const std::string& path) {
  CHECK(csv::to_string(csv::read(path)) == slurp(path));
}

}  // namespace

TEST_CASE("version flag and unknown-command handling") {
  std::string out;
  CHECK(run_cli("--version", &out) == 0);
  CHECK(out.find(kVersionStamp) != std::string::npos);
  CHECK(run_cli("frobnicate", &out) != 0);
  CHECK(run_cli("", &out) != 0);  // a subcommand is required
}

TEST_CASE("train: smoke run, determinism, and the resume guard") {
  const std::string cfg = work_dir() + "/alpha0.cfg";
  write_text(cfg, "alpha = 0\n");
  const std::string base = " train --env Dec_Turb2_Row1_Static --algo ippo --steps 2048"
                           " --seeds 0 --config " + cfg;

  std::string out;
  REQUIRE(run_cli(base + " --out " + work_dir() + "/runA", &out) == 0);
  const std::string dirA = work_dir() + "/runA/Dec_Turb2_Row1_Static_ippo_seed0";
  REQUIRE(fs::exists(dirA + "/metrics.csv"));
  CHECK(fs::exists(dirA + "/params.bin"));
  CHECK(fs::exists(dirA + "/manifest.txt"));
  CHECK(fs::exists(dirA + "/run.txt"));
  CHECK(slurp(dirA + "/run.txt").find(kVersionStamp) != std::string::npos);

  // 2048 steps at 2048 steps/update: exactly one update, two evaluation rows.
  const auto rows = marl::metrics_from_csv(slurp(dirA + "/metrics.csv"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].update == 0);
  CHECK(rows[1].update == 1);
  CHECK(rows[1].step == 2048);

  // Identical seed and config: byte-identical metrics.
  REQUIRE(run_cli(base + " --out " + work_dir() + "/runB", &out) == 0);
  const std::string dirB = work_dir() + "/runB/Dec_Turb2_Row1_Static_ippo_seed0";
  CHECK(slurp(dirA + "/metrics.csv") == slurp(dirB + "/metrics.csv"));
  CHECK(slurp(dirA + "/params.bin") == slurp(dirB + "/params.bin"));

  // Rerunning into the same directory is refused without --force.
  CHECK(run_cli(base + " --out " + work_dir() + "/runA", &out) != 0);
  CHECK(out.find("--force") != std::string::npos);
  CHECK(run_cli(base + " --out " + work_dir() + "/runA --force", &out) == 0);

  // MAPPO path produces a shared-critic checkpoint.
  REQUIRE(run_cli(" train --env Dec_Turb2_Row1_Static --algo mappo --steps 2048 --seeds 0"
                  " --config " + cfg + " --out " + work_dir() + "/runM", &out) == 0);
  const marl::TrainedAgents mappo =
      marl::load_agents(work_dir() + "/runM/Dec_Turb2_Row1_Static_mappo_seed0");
  CHECK(mappo.shared_critic);

  // Bad inputs fail cleanly.
  CHECK(run_cli(" train --env Turb2_Row1_Static --steps 64 --out " + work_dir(), &out) != 0);
  CHECK(run_cli(" train --env Dec_Turb2_Row1_Static --seeds , --out " + work_dir(), &out) != 0);
}

TEST_CASE("evaluate: per-seed episodes with a parseable CSV") {
  const std::string ckpt = work_dir() + "/runA/Dec_Turb2_Row1_Static_ippo_seed0";
  REQUIRE(fs::exists(ckpt + "/params.bin"));  // from the train test above

  std::string out;
  REQUIRE(run_cli(" evaluate --env Dec_Turb2_Row1_Static --steps 25 --seeds 0,1 --out " +
                      work_dir() + "/ev " + ckpt, &out) == 0);
  const std::string path = work_dir() + "/ev/evaluate.csv";
  check_csv_roundtrip(path);
  const csv::Table t = csv::read(path);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.header == std::vector<std::string>{"seed", "episode_return", "power_sum_w",
                                             "load_sum"});
  // Scenario I static evaluation is seed-independent for a deterministic policy.
  CHECK(t.rows[0][1] == t.rows[1][1]);
  CHECK(parse_double(t.rows[0][2]) > 0.0);
  CHECK(out.find("return mean") != std::string::npos);

  CHECK(run_cli(" evaluate --env Dec_Turb2_Row1_Static --out " + work_dir() + "/ev " +
                    work_dir() + "/no_such_ckpt", &out) != 0);
}

TEST_CASE("score: weighted report with re-aggregation and gap marking") {
  const std::string ckpt = work_dir() + "/runA/Dec_Turb2_Row1_Static_ippo_seed0";
  REQUIRE(fs::exists(ckpt + "/params.bin"));
  const std::string cfg = work_dir() + "/alpha0.cfg";

  std::string out;
  REQUIRE(run_cli(" score --env Dec_Turb2_Row1_Static --steps 20 --config " + cfg + " --out " +
                      work_dir() + "/sc " + ckpt + " " + work_dir() + "/gone", &out) == 0);
  const csv::Table detail = csv::read(work_dir() + "/sc/score.csv");
  const csv::Table summary = csv::read(work_dir() + "/sc/score_summary.csv");
  check_csv_roundtrip(work_dir() + "/sc/score.csv");
  check_csv_roundtrip(work_dir() + "/sc/score_summary.csv");

  // The weights are echoed into the report header.
  bool weight_comment = false;
  for (const std::string& c : detail.comments)
    if (c.rfind("weight ", 0) == 0) weight_comment = true;
  CHECK(weight_comment);

  // Totals equal an independent re-summation of the per-condition rows.
  const std::size_t rho_col = detail.col("rho"), ret_col = detail.col("episode_return");
  double resum = 0.0, rho_sum = 0.0;
  for (const auto& row : detail.rows) {
    if (row[detail.col("checkpoint")] != ckpt) continue;
    resum += parse_double(row[rho_col]) * parse_double(row[ret_col]);
    rho_sum += parse_double(row[rho_col]);
  }
  CHECK(rho_sum == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(summary.rows.size() >= 3);  // checkpoint, missing, mean, std
  CHECK(parse_double(summary.rows[0][summary.col("score")]) ==
        doctest::Approx(resum).epsilon(1e-9));

  // The missing checkpoint is listed and marked, not fatal.
  CHECK(out.find("missing checkpoint: " + work_dir() + "/gone") != std::string::npos);
  bool gap = false;
  for (const auto& row : summary.rows)
    if (row[0] == work_dir() + "/gone" && row[1] == "missing") gap = true;
  CHECK(gap);
  // One seed: the std row reports zero spread.
  for (const auto& row : summary.rows)
    if (row[0] == "std") CHECK(parse_double(row[1]) == 0.0);
}

TEST_CASE("oracle: gain rows, trivial optima, and the exhaustive refusal") {
  std::string out;
  REQUIRE(run_cli(" oracle --env Turb3_Row1_Static --out " + work_dir() + "/or3", &out) == 0);
  const csv::Table t = csv::read(work_dir() + "/or3/oracle.csv");
  check_csv_roundtrip(work_dir() + "/or3/oracle.csv");
  REQUIRE(t.rows.size() == 1);
  CHECK(parse_double(t.rows[0][t.col("gain")]) >= 0.10);
  CHECK(t.rows[0][t.col("exhaustive")] == "1");

  // M = 1: no wake to steer away from, gain exactly 0.
  REQUIRE(run_cli(" oracle --env Turb1_Row1_Static --out " + work_dir() + "/or1", &out) == 0);
  const csv::Table t1 = csv::read(work_dir() + "/or1/oracle.csv");
  CHECK(parse_double(t1.rows[0][t1.col("gain")]) == 0.0);
  CHECK(t1.rows[0][t1.col("yaws_deg")] == "0");

  // Perpendicular wind: all-zero yaws win.
  const std::string perp = work_dir() + "/perp.cfg";
  write_text(perp, "phi_inf = 0\n");
  REQUIRE(run_cli(" oracle --env Turb3_Row1_Static --config " + perp + " --out " +
                      work_dir() + "/orp", &out) == 0);
  const csv::Table tp = csv::read(work_dir() + "/orp/oracle.csv");
  CHECK(tp.rows[0][tp.col("yaws_deg")] == "0;0;0");

  // Forced exhaustive search on a large farm is refused with advice.
  CHECK(run_cli(" oracle --env HornsRev1_Static --mode exhaustive --out " + work_dir() +
                    "/orh", &out) != 0);
  CHECK(out.find("coordinate descent") != std::string::npos);

  // Dynamic ids are rejected.
  CHECK(run_cli(" oracle --env Turb3_Row1_Dynamic --out " + work_dir() + "/ord", &out) != 0);
}

TEST_CASE("transfer: zero-shot report, fine-tune metrics and checkpoint") {
  const std::string ckpt = work_dir() + "/runA/Dec_Turb2_Row1_Static_ippo_seed0";
  REQUIRE(fs::exists(ckpt + "/params.bin"));
  const std::string cfg = work_dir() + "/alpha0.cfg";

  std::string out;
  REQUIRE(run_cli(" transfer --env Dec_Turb2_Row1_Dynamic --steps 1600 --seeds 5 --config " +
                      cfg + " --out " + work_dir() + "/tr " + ckpt, &out) == 0);
  const std::string dir = work_dir() + "/tr/transfer_Dec_Turb2_Row1_Dynamic_seed5";
  check_csv_roundtrip(dir + "/zero_shot.csv");
  const csv::Table zs = csv::read(dir + "/zero_shot.csv");
  REQUIRE(zs.rows.size() == 1);
  CHECK(parse_double(zs.rows[0][zs.col("greedy_power_sum_w")]) > 0.0);
  CHECK(std::isfinite(parse_double(zs.rows[0][zs.col("power_gain")])));
  const auto rows = marl::metrics_from_csv(slurp(dir + "/transfer_metrics.csv"));
  CHECK(rows.size() >= 2);
  CHECK(rows.back().step == 1600);
  const marl::TrainedAgents tuned = marl::load_agents(dir);
  CHECK(tuned.kind == SimulatorKind::kStatic);  // networks keep their static shapes
  CHECK(out.find("median") != std::string::npos);

  // A static target environment is rejected.
  CHECK(run_cli(" transfer --env Dec_Turb2_Row1_Static --out " + work_dir() + "/trb " + ckpt,
                &out) != 0);
}

TEST_CASE("serve-bridge: a bridged episode over TCP matches the direct env bit for bit") {
  const std::string bdir = work_dir() + "/bridge";
  fs::create_directories(bdir);
  const int spawn = std::system((kCli + " serve-bridge --env Turb2_Row1_Dynamic --seeds 55"
                                 " --max-sessions 1 --out " + bdir + " >" + bdir +
                                 "/server.log 2>&1 &")
                                    .c_str());
  REQUIRE(spawn == 0);

  // Wait for the server to publish its endpoint.
  std::string endpoint_text;
  for (int tries = 0; tries < 100 && endpoint_text.empty(); ++tries) {
    if (fs::exists(bdir + "/endpoint.txt")) {
      endpoint_text = slurp(bdir + "/endpoint.txt");
      while (!endpoint_text.empty() && std::isspace(endpoint_text.back()))
        endpoint_text.pop_back();
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }
  REQUIRE(!endpoint_text.empty());

  EnvConfig cfg;
  cfg.layout_id = "Turb2_Row1";
  cfg.simulator = SimulatorKind::kDynamic;
  cfg.horizon = 10;

  FarmEnv direct(cfg);
  auto dobs = direct.reset(55);
  std::vector<EnvStepResult> trace;
  Rng action_rng(77);
  auto actions = [&](Rng& rng) {
    std::vector<std::vector<double>> acts(2);
    for (auto& a : acts)
      a = {rng.uniform(-5.0, 5.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.05, 0.05)};
    return acts;
  };
  for (int k = 0; k < 10; ++k) trace.push_back(direct.step(actions(action_rng)));

  {
    FarmEnv bridged(cfg, std::make_shared<RemoteSession>(tcp_connect(parse_endpoint(endpoint_text))));
    auto bobs = bridged.reset(55);
    CHECK(bobs == dobs);
    Rng rng_b(77);
    for (int k = 0; k < 10; ++k) {
      const EnvStepResult res = bridged.step(actions(rng_b));
      CHECK(res.observations == trace[k].observations);
      CHECK(res.rewards == trace[k].rewards);
      CHECK(res.info == trace[k].info);
    }
  }

  // The server finishes its single session and reports the step count.
  std::string log;
  for (int tries = 0; tries < 100; ++tries) {
    log = slurp(bdir + "/server.log");
    if (log.find("served") != std::string::npos) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  CHECK(log.find("session 0: served") != std::string::npos);
}
