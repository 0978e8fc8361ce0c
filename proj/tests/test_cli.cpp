#include "phreg/cli.hpp"
#include "phreg/error.hpp"
#include "phreg/io.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace phreg;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run call(const std::vector<std::string>& argv) {
  std::vector<const char*> raw{"phreg"};
  for (const auto& a : argv) raw.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(raw.size()), raw.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("phreg-test-" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

ModelDocument sample_document() {
  Vector pi(3);
  pi << 0.2, 0.3, 0.5;
  Matrix T(3, 3);
  T << -1.0 / 3.0, 0.1, 0.0, 0.0, -2.718281828459045, 1e-17, 0.0, 0.0, -0.123456789012345678;
  Vector beta(2);
  beta << -1.0390000000000001, 0.1 + 0.2;
  ModelDocument doc{RegressionModel{PhaseTypeLaw(pi, T, {StructureKind::GeneralizedCoxian, 3}),
                                    Transform::pareto(1149.5700000000001), beta, Link::softplus()},
                    {"age", "dose"}, "claim", FitMetadata{1000, -3042.123, 8, 6100.246, 6139.5, 417, true, 99}};
  return doc;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("model files round-trip exactly") {
    const ModelDocument doc = sample_document();
    const ModelDocument back = parse_model(serialize(doc));
    CHECK(back.model.law.pi() == doc.model.law.pi());
    CHECK(back.model.law.T() == doc.model.law.T());
    CHECK(back.model.law.structure().kind == StructureKind::GeneralizedCoxian);
    CHECK(back.model.transform.family() == TransformFamily::Pareto);
    CHECK(back.model.transform.parameter() == doc.model.transform.parameter());
    CHECK(back.model.beta == doc.model.beta);
    CHECK(back.model.link.kind() == Link::Kind::Softplus);
    CHECK(back.covariates == doc.covariates);
    CHECK(back.response == "claim");
    REQUIRE(back.fit.has_value());
    CHECK(back.fit->loglik == doc.fit->loglik);
    CHECK(back.fit->seed == 99);
    CHECK(serialize(back) == serialize(doc));

    TempDir dir;
    save_model(dir.file("m.json"), doc);
    CHECK(serialize(load_model(dir.file("m.json"))) == serialize(doc));
  }

  TEST_CASE("malformed model files") {
    auto j = to_json(sample_document());
    j["schema"] = "phreg-model/0";
    CHECK_THROWS_AS(model_from_json(j), InputError);
    CHECK_THROWS_AS(parse_model("{ not json"), InputError);
    auto k = to_json(sample_document());
    k["T"][0][2] = 0.5;  // breaks the declared zero pattern
    CHECK_THROWS(model_from_json(k));
    auto custom = sample_document();
    custom.model.link = Link::custom("c", [](double v) { return v * v + 1; });
    CHECK_THROWS_AS(serialize(custom), UnsupportedError);

    TempDir dir;
    std::ofstream(dir.file("bad.json")) << j.dump();
    std::ofstream(dir.file("x.csv")) << "age,dose\n0.1,0.2\n";
    CHECK(call({"predict", "--model", dir.file("bad.json"), dir.file("x.csv")}).code == cli::kExitUsage);
  }

  TEST_CASE("CSV reading reports the offending cell") {
    std::istringstream in("\xEF\xBB\xBF\"y\",x\n1.5,2\n2.5,abc\n");
    try {
      read_csv(in, "data.csv");
      FAIL("expected InputError");
    } catch (const InputError& e) {
      const std::string what = e.what();
      CHECK(what.find("data.csv") != std::string::npos);
      CHECK(what.find("3") != std::string::npos);
    }
    std::istringstream ok("\"y\",x\n1.5,2\n");
    const CsvTable t = read_csv(ok);
    CHECK(t.header == std::vector<std::string>{"y", "x"});
    CHECK(t.values("x")(0) == 2.0);
    CHECK_THROWS_AS(t.column("z"), InputError);
  }

  TEST_CASE("exit-code contract") {
    TempDir dir;
    const std::string data = dir.file("data.csv");
    REQUIRE(call({"simulate", "--synthetic", "--n", "150", "--seed", "3", "--out", data}).code == cli::kExitOk);
    const std::string model = dir.file("model.json");

    CHECK(call({}).code == cli::kExitUsage);
    CHECK(call({"frobnicate"}).code == cli::kExitUsage);
    CHECK(call({"fit", data}).code == cli::kExitUsage);  // --out missing
    CHECK(call({"fit", dir.file("missing.csv"), "--out", model}).code == cli::kExitUsage);
    CHECK(call({"fit", data, "--covariates", "X9", "--out", model}).code == cli::kExitUsage);
    CHECK(call({"fit", data, "--structure", "banana", "--out", model}).code == cli::kExitUsage);
    CHECK(call({"fit", data, "--structure", "exponential", "--phases", "2", "--out", model}).code == cli::kExitUsage);

    const Run short_fit = call({"fit", data, "--covariates", "X1", "--max-iter", "2", "--out", model});
    CHECK(short_fit.code == cli::kExitNotConverged);
    CHECK(fs::exists(model));
    CHECK(fs::exists(model + ".report.json"));

    CHECK(call({"predict", "--model", model, data, "--quantiles", "0.5,1.5"}).code == cli::kExitUsage);
    CHECK(call({"predict", "--model", model, data, "--quantiles", "0.5,0.9"}).code == cli::kExitOk);
    CHECK(call({"gof", "--model", model, data}).code == cli::kExitOk);
    CHECK(call({"simulate", "--model", model, "--synthetic"}).code == cli::kExitUsage);
    CHECK(call({"simulate", "--model", model}).code == cli::kExitUsage);  // covariates needed
    CHECK(call({"fit", "--help"}).code == cli::kExitOk);
  }

  TEST_CASE("seeded runs are byte-identical") {
    TempDir dir;
    REQUIRE(call({"simulate", "--synthetic", "--seed", "7", "--out", dir.file("a.csv")}).code == 0);
    REQUIRE(call({"simulate", "--synthetic", "--seed", "7", "--out", dir.file("b.csv")}).code == 0);
    CHECK(slurp(dir.file("a.csv")) == slurp(dir.file("b.csv")));
    REQUIRE(call({"simulate", "--synthetic", "--seed", "8", "--out", dir.file("c.csv")}).code == 0);
    CHECK(slurp(dir.file("a.csv")) != slurp(dir.file("c.csv")));

    const std::string data = dir.file("a.csv");
    for (const char* name : {"m1.json", "m2.json"})
      call({"fit", data, "--covariates", "X1", "--max-iter", "5", "--seed", "4", "--out", dir.file(name)});
    CHECK(slurp(dir.file("m1.json")) == slurp(dir.file("m2.json")));
    auto r1 = nlohmann::ordered_json::parse(slurp(dir.file("m1.json.report.json")));
    auto r2 = nlohmann::ordered_json::parse(slurp(dir.file("m2.json.report.json")));
    r1.erase("model_file");
    r2.erase("model_file");
    CHECK(r1.dump() == r2.dump());
  }

  TEST_CASE("format closure across structures and families") {
    TempDir dir;
    const std::string data = dir.file("data.csv");
    REQUIRE(call({"simulate", "--synthetic", "--n", "120", "--seed", "5", "--out", data}).code == 0);
    const std::string covs = dir.file("covs.csv");
    {
      const CsvTable t = read_csv_file(data);
      CsvTable c;
      c.header = {"X1"};
      for (const auto& row : t.rows) c.rows.push_back({row[t.column("X1")]});
      std::ofstream out(covs);
      write_csv(out, c);
    }
    const char* structures[] = {"exponential", "erlang", "hyperexp", "coxian", "gcoxian", "general"};
    const char* families[] = {"identity", "pareto", "weibull", "lognormal", "gompertz"};
    for (const char* s : structures) {
      for (const char* f : families) {
        CAPTURE(s);
        CAPTURE(f);
        const std::string model = dir.file(std::string(s) + "-" + f + ".json");
        const std::string phases = std::string(s) == "exponential" ? "1" : "2";
        const Run fitted = call({"fit", data, "--covariates", "X1", "--structure", s, "--phases", phases, "--family",
                                 f, "--max-iter", "3", "--out", model});
        CHECK((fitted.code == cli::kExitOk || fitted.code == cli::kExitNotConverged));
        const ModelDocument doc = load_model(model);
        CHECK(doc.model.law.structure().kind == parse_structure_kind(s));

        const Run pred = call({"predict", "--model", model, covs, "--quantiles", "0.1,0.5", "--out",
                               dir.file("pred.csv")});
        CHECK(pred.code == cli::kExitOk);
        CHECK(pred.err.find("warning") == std::string::npos);
        const std::string table = slurp(dir.file("pred.csv"));
        CHECK(table.rfind("row,mean,q_0.1,q_0.5\n", 0) == 0);
        CHECK(std::count(table.begin(), table.end(), '\n') == 121);

        const Run gof = call({"gof", "--model", model, data, "--out", dir.file("pp.csv")});
        CHECK(gof.code == cli::kExitOk);
        CHECK(gof.err.find("warning") == std::string::npos);

        const Run sim = call({"simulate", "--model", model, "--covariates-file", covs, "--seed", "2", "--out",
                              dir.file("sim.csv")});
        CHECK(sim.code == cli::kExitOk);
        CHECK(sim.err.find("warning") == std::string::npos);
        const CsvTable simulated = read_csv_file(dir.file("sim.csv"));
        CHECK(simulated.rows.size() == 120);
        for (const auto& row : simulated.rows) CHECK(row[simulated.column("y")] > 0.0);
      }
    }
  }
}
