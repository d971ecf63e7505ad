#include <doctest.h>

#include <fstream>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "adaptest/calibration.hpp"
#include "adaptest/eval_models.hpp"
#include "adaptest/item_bank.hpp"
#include "adaptest/response_matrix.hpp"
#include "adaptest/transcript.hpp"
#include "test_util.hpp"

using nlohmann::json;
using testutil::run;

namespace {

const std::string kCli = ADAPTEST_CLI_PATH;

struct Workdir {
  std::filesystem::path dir = testutil::temp_dir("cli");
  ~Workdir() { std::filesystem::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

testutil::RunResult cli(const std::string& args) { return run(kCli + " " + args + " 2>/dev/null"); }

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> out(n);
  for (auto& x : out) x = z(rng);
  return out;
}

const char* kShortMcmc = " --chains 2 --iterations 600 --warmup 300 --thin 1";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 64") {
  CHECK(cli("").exit_code == 64);
  CHECK(cli("nonsense").exit_code == 64);
  CHECK(cli("bank").exit_code == 64);
  CHECK(cli("bank synth --seed notanumber").exit_code == 64);
  CHECK(cli("simulate sweep").exit_code == 64);
  CHECK(cli("simulate sweep --bank x.json --baseline middle --seed 1").exit_code == 64);
  CHECK(cli("--format xml bank synth --seed 1").exit_code == 64);
  CHECK(cli("--help").exit_code == 0);
}

TEST_CASE("bank synth and validate") {
  Workdir w;
  const auto made = cli("bank synth --family calvi --seed 4 --out " + (w / "calvi.json"));
  REQUIRE(made.exit_code == 0);
  CHECK(made.out.empty());
  const auto bank = adaptest::load_bank(w / "calvi.json");
  CHECK(bank.items.size() == 60);
  CHECK(bank.scored_count() == 45);

  const auto v = cli("bank validate " + (w / "calvi.json"));
  CHECK(v.exit_code == 0);
  CHECK(json::parse(v.out).at("valid") == true);

  // Same flags, same bytes; global flags may come before or after the subcommand.
  const auto a = cli("--seed 9 bank synth --family vlat");
  const auto b = cli("bank synth --family vlat --seed 9");
  CHECK(a.exit_code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != cli("bank synth --family vlat --seed 10").out);
  CHECK(json::parse(a.out).at("items").size() == 53);
  const auto custom = cli("bank synth --family vlat --seed 9 --n-scored 30 --n-unscored 2");
  CHECK(json::parse(custom.out).at("items").size() == 32);

  CHECK(cli("bank synth --family vlat").exit_code == 2);
  CHECK(cli("bank synth --family other --seed 1").exit_code == 2);
  CHECK(cli("bank synth --family vlat --seed 1 --n-scored 3").exit_code == 2);
  CHECK(cli("bank synth --seed 1 --format csv").exit_code == 2);

  {
    std::ofstream out(w / "broken.json");
    out << R"({"bank_id": "x", "items": []})";
  }
  const auto broken = cli("bank validate " + (w / "broken.json"));
  CHECK(broken.exit_code == 2);
  CHECK(json::parse(broken.out).at("valid") == false);
  CHECK(cli("bank validate " + (w / "missing.json")).exit_code == 1);
  CHECK(cli("--out " + (w / "no/such/dir/x.json") + " bank synth --seed 1").exit_code == 1);
}

TEST_CASE("simulate sweep and recovery") {
  Workdir w;
  REQUIRE(cli("bank synth --family calvi --seed 2 --out " + (w / "calvi.json")).exit_code == 0);
  const std::string head = "simulate sweep --bank " + (w / "calvi.json") + " --persons 6 --seed 5";
  const std::string base = head + " --lengths 11,15";
  const auto csv = cli(base + " --baseline static_reference --summary " + (w / "s.json"));
  REQUIRE(csv.exit_code == 0);
  CHECK(csv.out.rfind("length,person,rel_se_diff\n", 0) == 0);
  CHECK(std::count(csv.out.begin(), csv.out.end(), '\n') == 13);
  const json summary = json::parse(testutil::read_file(w / "s.json"));
  CHECK(summary.at("baseline") == "static_reference");
  CHECK(cli(base + " --baseline static_reference").out == csv.out);
  const auto as_json = cli(base + " --format json");
  CHECK(json::parse(as_json.out).at("lengths").size() == 2);
  CHECK(cli(head + " --lengths 3").exit_code == 2);
  CHECK(cli(head + " --lengths 9:8").exit_code == 2);

  const std::string rec = "simulate recovery --bank " + (w / "calvi.json") + " --persons 20 --seed 5";
  const auto r = cli(rec);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.rfind("person,mistake_step,recovery_length,censored\n", 0) == 0);
  CHECK(cli(rec).out == r.out);
  const json rj = json::parse(cli(rec + " --rule previous --format json").out);
  CHECK(rj.at("rule") == "previous");
  CHECK(rj.at("n_persons") == 20);
}

TEST_CASE("calibrate and correlations") {
  Workdir w;
  REQUIRE(cli("bank synth --family calvi --seed 6 --out " + (w / "calvi.json")).exit_code == 0);
  const auto bank = adaptest::load_bank(w / "calvi.json");
  const auto m = adaptest::simulate_response_matrix(bank, normals(80, 7), 8);
  adaptest::save_response_matrix(m, w / "m.csv");

  const std::string cal = "calibrate --responses " + (w / "m.csv") + " --bank " + (w / "calvi.json") + kShortMcmc;
  const auto r = cli(cal + " --seed 3");
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("items").size() == 45);
  CHECK(j.at("excluded_items").size() == 15);
  CHECK(j.at("persons").size() == 80);
  CHECK(j.at("diagnostics").at("acceptance_rates").size() == 2);
  CHECK(cli(cal + " --seed 3").out == r.out);
  const json frag = json::parse(cli(cal + " --seed 3 --fragment").out);
  CHECK(frag.at("items").size() == 60);
  CHECK(cli(cal).exit_code == 2);
  CHECK(cli("calibrate --responses " + (w / "none.csv") + " --seed 1").exit_code == 1);

  const std::string corr = "correlations --responses " + (w / "m.csv") + " --bank " + (w / "calvi.json") +
                           " --seed 4" + kShortMcmc;
  const auto c = cli(corr + " --dimension misleader");
  REQUIRE(c.exit_code == 0);
  const json cj = json::parse(c.out);
  CHECK(cj.at("features").size() == cj.at("median").size());
  CHECK(cj.at("features").size() >= 2);
  CHECK(cli(corr + " --dimension nope").exit_code == 2);
}

TEST_CASE("eval icc, validity and samplesize") {
  Workdir w;
  adaptest::write_paired_scores(adaptest::simulate_retest({80, 0.0, 1.0, 0.33, 0.2}, 1), w / "retest.csv");
  adaptest::write_paired_scores(adaptest::simulate_validity({80, 0.2, 1.0, 1.0, 0.8, 0.15, 0.15}, 2), w / "valid.csv");

  const std::string icc = "eval icc --data " + (w / "retest.csv") + " --seed 1" + kShortMcmc;
  const auto r = cli(icc);
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("model") == "icc");
  CHECK(j.at("parameters").contains("icc"));
  CHECK(j.at("parameters").at("icc").at("ci95").size() == 2);
  CHECK(cli(icc).out == r.out);
  CHECK(json::parse(cli(icc + " --family calvi").out).at("model") == "icc");
  CHECK(cli(icc + " --family unknown").exit_code == 2);
  const json naive = json::parse(cli(icc + " --ignore-se").out);
  CHECK(naive.at("parameters").at("icc").at("median") < j.at("parameters").at("icc").at("median"));

  const auto v = cli("eval validity --data " + (w / "valid.csv") + " --seed 1" + kShortMcmc);
  REQUIRE(v.exit_code == 0);
  const json vj = json::parse(v.out);
  CHECK(vj.at("model") == "validity");
  CHECK(vj.at("parameters").contains("rho"));
  CHECK(vj.contains("centering_offset"));

  {
    std::ofstream out(w / "bad.csv");
    out << "person,theta_1,se_1,theta_2,se_2\n";
  }
  CHECK(cli("eval validity --data " + (w / "bad.csv") + " --seed 1").exit_code == 2);

  const auto s = cli("eval samplesize --target rho --ns 20,40 --replicates 2 --seed 3" + std::string(kShortMcmc));
  REQUIRE(s.exit_code == 0);
  const json sj = json::parse(s.out);
  CHECK(sj.at("target") == "rho");
  CHECK(sj.at("rows").size() == 2);
  CHECK(cli("eval samplesize --ns 1 --replicates 2 --seed 3" + std::string(kShortMcmc)).exit_code == 2);
}

TEST_CASE("serve and replay") {
  Workdir w;
  REQUIRE(cli("bank synth --family vlat --seed 5 --out " + (w / "vlat.json")).exit_code == 0);
  const auto bank = adaptest::load_bank(w / "vlat.json");
  std::string session_id;
  {
    testutil::Child server({kCli, "serve", "--port", "0", "--data-dir", w / "data", "--bank", w / "vlat.json"},
                           w / "serve.log");
    const int port = server.wait_for_port();
    REQUIRE(port > 0);
    httplib::Client client("127.0.0.1", port);
    auto created = client.Post("/api/v1/sessions", json{{"bank_id", bank.bank_id}}.dump(), "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 201);
    json body = json::parse(created->body);
    session_id = body.at("session_id");
    json item = body.at("item");
    while (!item.is_null()) {
      auto r = client.Post("/api/v1/sessions/" + session_id + "/answers",
                           json{{"item_id", item.at("item_id")}, {"selected_index", 1}}.dump(), "application/json");
      REQUIRE(r);
      REQUIRE(r->status == 200);
      item = json::parse(r->body).value("next_item", json(nullptr));
    }
    // Admin endpoints stay closed without a configured token.
    CHECK(client.Get("/api/v1/banks", {{"X-Admin-Token", ""}})->status == 401);
    const int status = server.kill(SIGTERM);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
  }

  const std::string log = w / ("data/sessions/" + session_id + ".jsonl");
  const auto r = cli("replay --transcript " + log + " --bank " + (w / "vlat.json"));
  REQUIRE(r.exit_code == 0);
  const json j = json::parse(r.out);
  CHECK(j.at("consistent") == true);
  CHECK(j.at("status") == "completed");
  CHECK(j.at("score").contains("theta_mean"));

  // A tampered transcript is rejected.
  auto events = adaptest::read_jsonl(log);
  for (auto& e : events) {
    if (e.at("event") == "item_served") {
      e["item_id"] = "nope";
      break;
    }
  }
  {
    std::ofstream out(w / "tampered.jsonl");
    for (const auto& e : events) out << e.dump() << '\n';
  }
  CHECK(cli("replay --transcript " + (w / "tampered.jsonl") + " --bank " + (w / "vlat.json")).exit_code != 0);
  CHECK(cli("serve --port 0").exit_code == 2);
}

}  // TEST_SUITE
