#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

struct Invocation {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("kamstark_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  Invocation run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + KAMSTARK_CLI_PATH + "' " + args + " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    Invocation inv;
    inv.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    inv.out = slurp(dir / "stdout.txt");
    inv.err = slurp(dir / "stderr.txt");
    return inv;
  }
};

}  // namespace

TEST_CASE("missing subcommand prints usage and exits 2") {
  const Sandbox box;
  const Invocation inv = box.run("");
  CHECK(inv.exit_code == 2);
  CHECK(inv.err.find("usage: kamstark") != std::string::npos);
  CHECK(box.run("--help").exit_code == 0);
  CHECK(box.run("--version").out.find("0.1.0") != std::string::npos);
}

TEST_CASE("malformed input names the offending field") {
  const Sandbox box;
  Invocation inv = box.run("diagonalize --window 3-5");
  CHECK(inv.exit_code == 2);
  CHECK(inv.err.find("window") != std::string::npos);
  inv = box.run("diagonalize --delta abc");
  CHECK(inv.exit_code == 2);
  CHECK(inv.err.find("delta") != std::string::npos);
  inv = box.run("diagonalize --no-such-flag 1");
  CHECK(inv.exit_code == 2);
  inv = box.run("hamiltonian --from missing.json");
  CHECK(inv.exit_code == 2);
  CHECK(inv.err.find("missing.json") != std::string::npos);
  std::ofstream(box.path("cfg.json")) << R"({"windw": "-8:8"})";
  inv = box.run("diagonalize --config cfg.json");
  CHECK(inv.exit_code == 2);
  CHECK(inv.err.find("windw") != std::string::npos);
}

TEST_CASE("pipeline from diagonalization to report") {
  const Sandbox box;
  Invocation inv = box.run("diagonalize --window=-24:24 --active=-1,0 --out d.json");
  REQUIRE(inv.exit_code == 0);
  const Json diag = Json::parse(slurp(box.path("d.json")));
  CHECK(diag["kind"] == "diagonalize");
  CHECK(diag["config"]["window"] == "-24:24");

  inv = box.run("hamiltonian --from d.json --sites=0 --eps 1e-6 --out h.json");
  REQUIRE(inv.exit_code == 0);
  inv = box.run("kam --ham h.json --steps 1 --out k.json");
  REQUIRE(inv.exit_code == 0);
  const Json kam = Json::parse(inv.out);
  CHECK(kam["failed"].empty());

  inv = box.run("evolve --init torus:k.json --T 20 --dt 1e-2 --scheme exprk4 --defect-points 10 --out t.csv");
  REQUIRE(inv.exit_code == 0);
  const Json ev = Json::parse(inv.out);
  CHECK(ev["defect"].get<double>() <= 1e-10);
  const std::string csv = slurp(box.path("t.csv"));
  CHECK(csv.rfind("# kamstark evolve version ", 0) == 0);
  CHECK(csv.find("t,mass,energy,M_d,edge_mass") != std::string::npos);

  inv = box.run("report --inputs d.json,h.json,k.json,t.json,t.csv --out r.json");
  CHECK(inv.exit_code == 0);
  CHECK(fs::exists(box.path("r.gp")));
  const Json rep = Json::parse(slurp(box.path("r.json")));
  CHECK(rep["all_pass"] == true);
  CHECK(rep["artifacts"].size() == 5);
}

TEST_CASE("identical configurations give byte-identical outputs") {
  const Sandbox box;
  REQUIRE(box.run("evolve --T 50 --dt 1e-2 --eps 1e-3 --out a.csv").exit_code == 0);
  REQUIRE(box.run("evolve --T 50 --dt 1e-2 --eps 1e-3 --out b.csv").exit_code == 0);
  CHECK(slurp(box.path("a.csv")) == slurp(box.path("b.csv")));
  REQUIRE(box.run("evolve --T 50 --dt 1e-2 --eps 2e-3 --out c.csv").exit_code == 0);
  const Json a = Json::parse(slurp(box.path("a.json")));
  const Json c = Json::parse(slurp(box.path("c.json")));
  CHECK(a["config_hash"] != c["config_hash"]);

  // exit 1 is a slope verdict on this small sample; only the bytes matter here
  const std::string measure = "measure --window=-16:16 --eps 1e-6,1e-10 --samples 1000 --levels 1";
  REQUIRE(box.run(measure + " --out m1.csv").exit_code <= 1);
  REQUIRE(box.run(measure + " --out m2.csv").exit_code <= 1);
  CHECK(slurp(box.path("m1.csv")).find("1e-10") != std::string::npos);
  CHECK(slurp(box.path("m1.csv")) == slurp(box.path("m2.csv")));
}

TEST_CASE("output directory from the environment and config file merging") {
  const Sandbox box;
  fs::create_directories(box.dir / "outdir");
  std::ofstream(box.path("cfg.json")) << R"({"window": "-12:12", "seed": 5})";
  const Invocation inv = box.run("diagonalize --config cfg.json --seed 3", "KAMSTARK_OUT_DIR=outdir");
  REQUIRE(inv.exit_code == 0);
  const fs::path written = box.dir / "outdir" / "result.json";
  REQUIRE(fs::exists(written));
  const Json d = Json::parse(slurp(written));
  CHECK(d["config"]["window"] == "-12:12");
  CHECK(d["config"]["seed"] == 3);
}

TEST_CASE("a spreading lattice fails the localization verdict with exit 1") {
  const Sandbox box;
  const Invocation inv = box.run("evolve --no-stark --no-disorder --T 300 --dt 1e-2 --d 2 --factor 4 --out free.csv");
  CHECK(inv.exit_code == 1);
  const Json s = Json::parse(inv.out);
  CHECK(s["localization"]["bounded"] == false);
}
