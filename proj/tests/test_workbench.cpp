#include <doctest.h>

#include <unistd.h>

#include <clocale>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ppl/error.hpp"
#include "pplw/cli.hpp"
#include "pplw/commands.hpp"

namespace fs = std::filesystem;
using namespace pplw;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("pplw-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "pplw");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

RunConfig config(std::map<std::string, std::string> values) { return parse_config(values); }

const std::string kTrain = "a=1.5,b=-2,sigma=0.5,n=200,seed=11";
const std::string kHeldOut = "a=1.5,b=-2,sigma=0.5,n=500,seed=12";

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_prediction(const Prediction& a, const Prediction& b) {
  if (a.draws.size() != b.draws.size()) return false;
  for (std::size_t i = 0; i < a.draws.size(); ++i)
    if (!same_bits(a.draws[i], b.draws[i])) return false;
  return same_bits(a.mean, b.mean) && same_bits(a.sd, b.sd) && same_bits(a.lower, b.lower) &&
         same_bits(a.upper, b.upper) && same_bits(a.p1, b.p1);
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig d = config({});
  CHECK(d.model == "linreg");
  CHECK(d.method == "vi");
  CHECK(d.level == 0.9);

  const RunConfig c = config({{"model", "hetreg"}, {"lr", "0.5"}, {"steps", "12"}, {"synthetic", "default"}});
  CHECK(c.model == "hetreg");
  CHECK(c.lr == 0.5);
  CHECK(c.steps == 12);

  CHECK_THROWS_AS(config({{"colour", "red"}}), ConfigError);
  CHECK_THROWS_AS(config({{"lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(config({{"lr", "-0.1"}}), ConfigError);
  CHECK_THROWS_AS(config({{"steps", "1.5"}}), ConfigError);
  CHECK_THROWS_AS(config({{"method", "hmc"}}), ConfigError);
  CHECK_THROWS_AS(config({{"level", "1.5"}}), ConfigError);
  CHECK_THROWS_AS(config({{"posterior", "Gamma"}}), ConfigError);
  CHECK_THROWS_AS(config({{"data", "x.csv"}, {"synthetic", "default"}}), ConfigError);
  CHECK_THROWS_AS(parse_synthetic("a=1,b"), ConfigError);
  CHECK(parse_synthetic("a=1,b=-2") == std::map<std::string, double>{{"a", 1.0}, {"b", -2.0}});
}

TEST_CASE("config hash ignores the seed and paths") {
  const RunConfig a = config({{"synthetic", "default"}});
  const RunConfig b = config({{"synthetic", "default"}, {"seed", "9"}, {"out", "elsewhere"}});
  const RunConfig c = config({{"synthetic", "default"}, {"steps", "10"}});
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
}

TEST_CASE("config files") {
  TempDir dir;
  write_file(dir / "run.cfg", "# comment\nmodel = hetreg\nburn-in=10   # trailing\n\n");
  const auto values = read_config_file(dir / "run.cfg");
  CHECK(values.at("model") == "hetreg");
  CHECK(values.at("burn_in") == "10");
  write_file(dir / "bad.cfg", "model hetreg\n");
  CHECK_THROWS_AS(read_config_file(dir / "bad.cfg"), ConfigError);
  CHECK_THROWS_AS(read_config_file(dir / "missing.cfg"), ConfigError);
}

TEST_CASE("CSV reading") {
  TempDir dir;
  write_file(dir / "ok.csv", "# generated\nx,y,extra\n1.5,2,0\n-3e-1,4.25,1\n");
  const Table t = read_csv(dir / "ok.csv", {"x", "y"});
  CHECK(t.rows() == 2);
  CHECK(t.column("x") == std::vector<double>{1.5, -0.3});
  CHECK(t.has("extra"));

  write_file(dir / "short.csv", "x,y\n1,2\n3\n");
  try {
    read_csv(dir / "short.csv", {"x", "y"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("short.csv:3") != std::string::npos);
  }

  write_file(dir / "word.csv", "x,y\n1,2\n3,4\nfive,6\n");
  try {
    read_csv(dir / "word.csv", {"x", "y"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("word.csv:4") != std::string::npos);
  }

  write_file(dir / "nan.csv", "x,y\nnan,2\n");
  CHECK_THROWS_AS(read_csv(dir / "nan.csv", {"x", "y"}), DataError);

  write_file(dir / "cols.csv", "x,z\n1,2\n");
  try {
    read_csv(dir / "cols.csv", {"x", "y"});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("y") != std::string::npos);
  }
  CHECK_THROWS_AS(read_csv(dir / "absent.csv", {"x"}), DataError);
}

TEST_CASE("CSV numbers ignore the process locale") {
  TempDir dir;
  write_file(dir / "ok.csv", "x,y\n1.5,2.25\n");
  const std::string saved = std::setlocale(LC_NUMERIC, nullptr);
  const bool switched = std::setlocale(LC_NUMERIC, "de_DE.UTF-8") || std::setlocale(LC_NUMERIC, "fr_FR.UTF-8");
  const Table t = read_csv(dir / "ok.csv", {"x", "y"});
  std::setlocale(LC_NUMERIC, saved.c_str());
  CHECK(t.column("x")[0] == 1.5);
  CHECK(t.column("y")[0] == 2.25);
  if (!switched) MESSAGE("no comma-decimal locale installed; checked under the default locale only");
}

TEST_CASE("synthetic data is reproducible") {
  const auto a = synthetic_table("linreg", parse_synthetic(kTrain), 0);
  const auto b = synthetic_table("linreg", parse_synthetic(kTrain), 5);
  CHECK(a.rows() == 200);
  CHECK(a.column("x") == b.column("x"));
  CHECK(a.column("y") == b.column("y"));
  const auto c = synthetic_table("linreg", {}, 1), d = synthetic_table("linreg", {}, 2);
  CHECK(c.column("x") != d.column("x"));
  for (double x : a.column("x")) CHECK((x >= -3.0 && x <= 3.0));
  const auto blobs = synthetic_table("blobs", {{"n", 10}}, 0);
  CHECK(blobs.columns == std::vector<std::string>{"x1", "x2", "label"});
}

TEST_CASE("fit, save, load and predict match predicting in process") {
  for (const std::string method : {"vi", "map", "mcmc"}) {
    CAPTURE(method);
    TempDir dir;
    const RunConfig cfg = config({{"method", method},
                                  {"synthetic", kTrain},
                                  {"steps", "400"},
                                  {"mcmc_steps", "3000"},
                                  {"burn_in", "500"},
                                  {"seed", "4"},
                                  {"out", dir / "fit"}});
    FitOutcome outcome = fit_model(cfg);
    const Table held = synthetic_table("linreg", parse_synthetic(kHeldOut), 0);
    const ppl::Tensor x = outcome.model.inputs(held);
    const Prediction direct = predict(outcome.model, outcome.mcmc, x, 50, 0.9, 8);
    write_fit(outcome);
    LoadedModel loaded = load_model(dir / "fit");
    const Prediction reloaded = predict(loaded.model, loaded.mcmc, x, 50, 0.9, 8);
    CHECK(same_prediction(direct, reloaded));
    CHECK(loaded.manifest.config_hash == cfg.hash());
  }
}

TEST_CASE("classifier round trip") {
  for (const std::string model : {"mlp-classifier", "lifted-mlp"}) {
    CAPTURE(model);
    TempDir dir;
    const RunConfig cfg = config({{"model", model},
                                  {"synthetic", "n=100,seed=3"},
                                  {"steps", "200"},
                                  {"pretrain_steps", "200"},
                                  {"seed", "5"},
                                  {"out", dir / "fit"}});
    FitOutcome outcome = fit_model(cfg);
    const Table held = synthetic_table("blobs", {{"n", 40}, {"seed", 4}}, 0);
    const ppl::Tensor x = outcome.model.inputs(held);
    const Prediction direct = predict(outcome.model, outcome.mcmc, x, 20, 0.9, 2);
    write_fit(outcome);
    LoadedModel loaded = load_model(dir / "fit");
    const Prediction reloaded = predict(loaded.model, loaded.mcmc, x, 20, 0.9, 2);
    CHECK(direct.classification);
    CHECK(same_prediction(direct, reloaded));
    for (double p : direct.p1) CHECK((p >= 0.0 && p <= 1.0));
  }
}

TEST_CASE("predictive intervals") {
  const RunConfig cfg = config({{"synthetic", kTrain}, {"seed", "1"}});
  FitOutcome outcome = fit_model(cfg);
  const Table held = synthetic_table("linreg", parse_synthetic(kHeldOut), 0);
  const ppl::Tensor x = outcome.model.inputs(held);
  const auto truth = outcome.model.targets(held).to_vector();

  SUBCASE("well specified model is calibrated") {
    const json doc = diagnose(predict(outcome.model, outcome.mcmc, x, 400, 0.9, 3), truth);
    CHECK(std::abs(doc["coverage"].get<double>() - 0.9) < 0.05);
    CHECK(doc["reliability"].size() == 9);
  }
  SUBCASE("a single draw collapses the interval") {
    const Prediction p = predict(outcome.model, outcome.mcmc, x, 1, 0.9, 3);
    for (std::size_t i = 0; i < p.rows; ++i) {
      CHECK(p.lower[i] == p.upper[i]);
      CHECK(p.sd[i] == 0.0);
    }
  }
  SUBCASE("level one covers everything") {
    const Prediction p = predict(outcome.model, outcome.mcmc, x, 20, 1.0, 3);
    CHECK(diagnose(p, truth)["coverage"].get<double>() == 1.0);
  }
  SUBCASE("mean at zero") {
    const Prediction p = predict(outcome.model, outcome.mcmc, ppl::Tensor::vector({0.0}), 2000, 0.9, 3);
    CHECK(std::abs(p.mean[0] - 1.5) < 0.25);
    CHECK(std::abs(p.aleatoric_sd[0] - 0.5) < 0.1);
    CHECK(p.epistemic_sd[0] < p.aleatoric_sd[0]);
  }
}

TEST_CASE("an overconfident posterior undercovers") {
  const RunConfig cfg = config({{"synthetic", kTrain}, {"seed", "1"}, {"freeze_scale", "1e-4"}});
  FitOutcome outcome = fit_model(cfg);
  const Table held = synthetic_table("linreg", parse_synthetic(kHeldOut), 0);
  const Prediction p = predict(outcome.model, outcome.mcmc, outcome.model.inputs(held), 200, 0.9, 3);
  CHECK(diagnose(p, outcome.model.targets(held).to_vector())["coverage"].get<double>() < 0.5);
}

TEST_CASE("heteroscedastic noise grows with |x|") {
  const RunConfig cfg = config({{"model", "hetreg"}, {"synthetic", "n=400,seed=21"}, {"seed", "2"}});
  FitOutcome outcome = fit_model(cfg);
  const Prediction p = predict(outcome.model, outcome.mcmc, ppl::Tensor::vector({0.0, 2.0}), 1000, 0.9, 3);
  CHECK(p.aleatoric_sd[1] > p.aleatoric_sd[0]);
  CHECK(std::abs(p.aleatoric_sd[1] / 1.1 - 1.0) < 0.2);
}

TEST_CASE("MCMC fits switch to PointMass guides and say so") {
  const RunConfig cfg =
      config({{"method", "mcmc"}, {"synthetic", kTrain}, {"mcmc_steps", "2000"}, {"burn_in", "200"}});
  const FitOutcome outcome = fit_model(cfg);
  bool mentioned = false;
  for (const auto& line : outcome.log) mentioned = mentioned || line.find("PointMass") != std::string::npos;
  CHECK(mentioned);
  REQUIRE(outcome.mcmc.has_value());
  CHECK(outcome.mcmc->samples.size() == 1800);
}

TEST_CASE("branching demo") {
  const json doc = demo_branching(config({{"model", "branching"}, {"passes", "2000"}, {"seed", "3"}}));
  CHECK(doc["ledger_ok"].get<bool>());
  CHECK(doc["guide_count"].get<std::size_t>() == 2);
  double total = 0.0;
  for (const auto& b : doc["branches"]) total += b["frequency"].get<double>();
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("command line exit codes") {
  TempDir dir;
  const std::string fit_dir = dir / "fit";
  const std::vector<std::string> quick = {"--synthetic", "n=50,seed=1", "--steps", "50"};
  auto fit = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"fit", "--out", fit_dir};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };

  std::vector<std::string> ok = quick;
  CHECK(fit(ok).code == kOk);
  CHECK(fs::exists(fs::path(fit_dir) / "manifest.json"));
  CHECK(fs::exists(fs::path(fit_dir) / "fit_report.json"));
  CHECK(fs::exists(fs::path(fit_dir) / "run.log"));

  CHECK(run({"predict", "--manifest", fit_dir, "--synthetic", "n=10,seed=2", "--out", dir / "pred"}).code == kOk);
  const std::string csv = slurp(fs::path(dir / "pred") / "predictions.csv");
  CHECK(csv.rfind("# pplw seed=", 0) == 0);
  CHECK(run({"diagnose", "--manifest", fit_dir, "--synthetic", "n=10,seed=2", "--out", dir / "diag"}).code == kOk);
  CHECK(fs::exists(fs::path(dir / "diag") / "diagnose.json"));

  CHECK(fit({"--lr", "-1", "--synthetic", "default"}).code == kConfigError);
  CHECK(fit({"--no-such-flag", "1"}).code == kConfigError);
  CHECK(run({}).code == kConfigError);
  CHECK(run({"predict", "--synthetic", "default"}).code == kConfigError);

  const CliResult missing = run({"fit", "--data", dir / "nope.csv", "--out", dir / "never"});
  CHECK(missing.code == kDataError);
  CHECK_FALSE(fs::exists(dir / "never"));
  write_file(dir / "bad.csv", "x,y\n1,2\n3,oops\n");
  const CliResult bad = run({"fit", "--data", dir / "bad.csv", "--out", dir / "never"});
  CHECK(bad.code == kDataError);
  CHECK(bad.err.find(":3") != std::string::npos);

  fs::create_directories(dir / "broken");
  write_file(dir / "broken/manifest.json", "{ not json");
  CHECK(run({"predict", "--manifest", dir / "broken", "--synthetic", "default", "--out", dir / "p2"}).code ==
        kDataError);

  const CliResult diverged = run({"fit", "--synthetic", "n=50,seed=1", "--lr", "1e6", "--out", dir / "diverged"});
  CHECK(diverged.code == kNumericalError);
  CHECK_FALSE(fs::exists(fs::path(dir / "diverged") / "manifest.json"));
}

TEST_CASE("reruns reproduce every artifact") {
  TempDir dir;
  const std::vector<std::string> names = {"manifest.json", "tensors.bin", "fit_report.json", "run.log"};
  std::map<std::string, std::string> first;
  for (int round = 0; round < 2; ++round) {
    REQUIRE(run({"fit", "--synthetic", "n=80,seed=5", "--steps", "200", "--seed", "6", "--out", dir / "fit"}).code ==
            kOk);
    REQUIRE(run({"predict", "--manifest", dir / "fit", "--synthetic", "n=20,seed=7", "--out", dir / "pred"}).code ==
            kOk);
    for (const auto& n : names) {
      const std::string bytes = slurp(fs::path(dir / "fit") / n);
      if (round == 0) first[n] = bytes;
      else CHECK_MESSAGE(bytes == first[n], n);
    }
    for (const std::string n : {"predictions.csv", "predictions.json"}) {
      const std::string bytes = slurp(fs::path(dir / "pred") / n);
      if (round == 0) first[n] = bytes;
      else CHECK_MESSAGE(bytes == first[n], n);
    }
  }
}
