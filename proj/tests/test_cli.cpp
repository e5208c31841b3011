#include <polysem/cli.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

using polysem::Json;
namespace fs = std::filesystem;

namespace {

const std::string kModels = POLYSEM_MODELS_DIR;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "polysem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = polysem::cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("polysem_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string simulate_to(const TempDir& dir, const std::string& generator, std::size_t n, int seed) {
  const std::string path = dir.file(generator + std::to_string(n) + ".csv");
  const Outcome o = run({"simulate", "--generator", generator, "--n", std::to_string(n), "--seed", std::to_string(seed),
                         "--out", path});
  EXPECT_EQ(o.code, 0) << o.err;
  return path;
}

}  // namespace

TEST(Cli, NoSubcommandIsAnInputError) { EXPECT_EQ(run({}).code, 1); }

TEST(Cli, HelpAndVersionSucceed) {
  const Outcome help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("replicate"), std::string::npos);
  const Outcome version = run({"--version"});
  EXPECT_EQ(version.code, 0);
  EXPECT_EQ(version.out, std::string(polysem::kVersion) + "\n");
}

TEST(Cli, UnknownOptionIsAnInputError) { EXPECT_EQ(run({"fit", "--bogus"}).code, 1); }

TEST(CliValidate, ReportsShapeAndCount) {
  const Outcome o = run({"validate", kModels + "/ganzach.sem"});
  EXPECT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("free parameters: 24"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("6 x, 3 y"), std::string::npos);
}

TEST(CliValidate, BadModelReportsFileLineAndColumn) {
  TempDir dir;
  const std::string path = dir.file("bad.sem");
  std::ofstream(path) << "latent exo xi1\nmanifest x x1\nmeasure x1 = 1 * xi9 + err(free)\n";
  const Outcome o = run({"validate", path});
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find(path + ":3:"), std::string::npos) << o.err;
  EXPECT_NE(o.err.find("xi9"), std::string::npos) << o.err;
}

TEST(CliValidate, MissingModelFile) {
  const Outcome o = run({"validate", "/nonexistent/model.sem"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("/nonexistent/model.sem"), std::string::npos);
}

TEST(CliMoments, SymbolicCovarianceOfFirstIndicator) {
  const Outcome o = run({"moments", "--model", kModels + "/ganzach.sem"});
  ASSERT_EQ(o.code, 0) << o.err;
  std::string entry;
  for (const auto& line : lines_of(o.out))
    if (line.rfind("(x1,x1) = ", 0) == 0) entry = line;
  EXPECT_NE(entry.find("phi11"), std::string::npos) << entry;
  EXPECT_NE(entry.find("theta_x1"), std::string::npos) << entry;
}

TEST(CliMoments, LinearModelHasZeroThirdOrderTensor) {
  const Outcome o = run({"moments", "--model", kModels + "/linear_one_factor.sem", "--order", "3"});
  ASSERT_EQ(o.code, 0) << o.err;
  std::size_t entries = 0;
  for (const auto& line : lines_of(o.out)) {
    if (line.empty() || line[0] == '#') continue;
    ++entries;
    EXPECT_EQ(line.substr(line.size() - 4), " = 0") << line;
  }
  EXPECT_EQ(entries, 10u);  // C(3 + 2, 3)
}

TEST(CliMoments, OrderBelowTwoIsRejected) {
  const Outcome o = run({"moments", "--model", kModels + "/ganzach.sem", "--order", "1"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("order"), std::string::npos);
}

TEST(CliMoments, JsonFormatCarriesTheTensor) {
  const Outcome o = run({"moments", "--model", kModels + "/linear_one_factor.sem", "--format", "json"});
  ASSERT_EQ(o.code, 0) << o.err;
  const Json j = Json::parse(o.out);
  EXPECT_TRUE(j.contains("record"));
  EXPECT_TRUE(j.contains("tensor"));
}

TEST(CliSimulate, WritesCsvAndRecord) {
  TempDir dir;
  const std::string path = simulate_to(dir, "ganzach", 1000, 11);
  const auto rows = lines_of(slurp(path));
  ASSERT_EQ(rows.size(), 1001u);
  EXPECT_EQ(rows.front(), "x1,x2,x3,x4,x5,x6,y1,y2,y3");
  EXPECT_EQ(std::count(rows[1].begin(), rows[1].end(), ','), 8);
  const Json record = Json::parse(slurp(path + ".record.json"));
  EXPECT_EQ(record.at("seed").get<std::uint64_t>(), 11u);
  EXPECT_EQ(record.at("seed_source"), "user");
  EXPECT_EQ(record.at("options").at("n"), 1000);
}

TEST(CliSimulate, SameSeedSameFile) {
  TempDir a, b;
  EXPECT_EQ(slurp(simulate_to(a, "interaction", 50, 4)), slurp(simulate_to(b, "interaction", 50, 4)));
}

TEST(CliSimulate, RandomSeedIsPrintedForReuse) {
  const Outcome o = run({"simulate", "--generator", "ganzach", "--n", "5"});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.err.find("seed: "), std::string::npos) << o.err;
  EXPECT_NE(o.err.find("--seed"), std::string::npos);
}

TEST(CliSimulate, UnknownGeneratorIsAnInputError) {
  EXPECT_EQ(run({"simulate", "--generator", "cubic"}).code, 1);
}

TEST(CliFit, MissingDataFileNamesThePath) {
  const Outcome o = run({"fit", "--model", kModels + "/ganzach.sem", "--data", "/nonexistent/d.csv"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("/nonexistent/d.csv"), std::string::npos) << o.err;
}

TEST(CliFit, WlsWithTooFewCasesIsAnInputError) {
  TempDir dir;
  const std::string data = simulate_to(dir, "ganzach", 40, 2);  // 45 covariances > 40 cases
  const Outcome o = run({"fit", "--model", kModels + "/ganzach.sem", "--data", data, "--method", "wls", "--seed", "1"});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("ULS"), std::string::npos) << o.err;
}

TEST(CliFit, UnknownMethodIsAnInputError) {
  TempDir dir;
  const std::string data = simulate_to(dir, "ganzach", 50, 2);
  EXPECT_EQ(run({"fit", "--model", kModels + "/ganzach.sem", "--data", data, "--method", "ml"}).code, 1);
}

TEST(CliFit, IterationCapGivesExitCodeTwo) {
  TempDir dir;
  const std::string data = simulate_to(dir, "ganzach", 300, 2);
  const Outcome o = run({"fit", "--model", kModels + "/ganzach.sem", "--data", data, "--method", "uls", "--seed", "1",
                         "--max-iterations", "1"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("did not converge"), std::string::npos);
}

TEST(CliFit, TextAndJsonReportTheSameNumbers) {
  TempDir dir;
  const std::string data = simulate_to(dir, "ganzach", 500, 8);
  const std::vector<std::string> base{"fit", "--model", kModels + "/ganzach.sem", "--data", data, "--method",
                                      "uls3", "--seed", "5"};
  auto json_args = base;
  json_args.insert(json_args.end(), {"--format", "json"});
  auto text_args = base;
  text_args.insert(text_args.end(), {"--format", "text"});
  const Outcome js = run(json_args);
  const Outcome tx = run(text_args);
  ASSERT_EQ(js.code, 0) << js.err;
  ASSERT_EQ(tx.code, 0) << tx.err;

  const Json result = Json::parse(js.out).at("result");
  std::map<std::string, std::string> text_values;
  for (const auto& line : lines_of(tx.out)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string name, value;
    fields >> name >> value;
    text_values[name] = value;
  }
  ASSERT_EQ(result.at("estimates").size(), 24u);
  for (const auto& [name, v] : result.at("estimates").items())
    EXPECT_EQ(text_values.at(name), polysem::format_number(v.get<double>())) << name;
  EXPECT_EQ(text_values.at("objective"), polysem::format_number(result.at("objective_value").get<double>()));

  const polysem::FitResult back = polysem::fit_result_from_json(result);
  EXPECT_EQ(polysem::to_json(back), result);
}

TEST(CliFit, OutputFileReceivesTheResult) {
  TempDir dir;
  const std::string data = simulate_to(dir, "ganzach", 300, 3);
  const std::string out = dir.file("fit.json");
  const Outcome o = run({"fit", "--model", kModels + "/ganzach.sem", "--data", data, "--method", "uls", "--seed", "1",
                         "--out", out});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(o.out.empty());
  EXPECT_EQ(Json::parse(slurp(out)).at("record").at("seed"), 1);
}

TEST(CliReplicate, SmallStudyTextAndJson) {
  TempDir dir;
  const std::string json_path = dir.file("table.json");
  const Outcome o = run({"replicate", "--generator", "interaction", "--reps", "2", "--n", "200", "--methods", "uls,uls3",
                         "--restarts", "0", "--seed", "3", "--json", json_path});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("Variable"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("B3"), std::string::npos);
  const Json j = Json::parse(slurp(json_path));
  EXPECT_EQ(j.at("record").at("seed"), 3);
  EXPECT_EQ(j.at("record").at("options").at("reps"), 2);
  EXPECT_TRUE(j.contains("table"));
}

TEST(CliReplicate, RejectsBadArguments) {
  EXPECT_EQ(run({"replicate", "--generator", "ganzach", "--reps", "0", "--seed", "1"}).code, 1);
  EXPECT_EQ(run({"replicate", "--generator", "ganzach", "--n", "5", "--seed", "1"}).code, 1);
  EXPECT_EQ(run({"replicate", "--generator", "ganzach", "--methods", ",", "--seed", "1"}).code, 1);
  EXPECT_EQ(run({"replicate", "--generator", "ganzach", "--moments", "weird", "--seed", "1"}).code, 1);
}
