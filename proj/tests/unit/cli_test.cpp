#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "orientmp/cli.hpp"
#include "orientmp/config.hpp"
#include "orientmp/data.hpp"
#include "orientmp/dataset_file.hpp"

namespace orientmp {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("orientmp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string tiny_config(Task task, const std::string& train) const {
    RunConfig cfg = default_run_config(task);
    cfg.model.backbone.widths = {8};
    cfg.model.backbone.k = 6;
    cfg.model.head_hidden = 8;
    cfg.model.orientation = {1, 6, 3, 6, 1};
    cfg.model.global = {1, 6, 3, 6};
    cfg.optim.epochs = 1;
    cfg.optim.batch_size = 4;
    cfg.train_data = train;
    const std::string p = path(to_string(task) + ".json");
    std::ofstream(p) << to_json(cfg, 2);
    return p;
  }

  fs::path dir_;
};

TEST_F(Cli, HelpOnEveryCommandExitsZero) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
      {"gen-nbody", {"--particles", "--trajectories", "--steps", "--dt", "--seed", "--out"}},
      {"gen-shapes", {"--classes", "--points", "--noise", "--rotation", "--seed", "--out"}},
      {"train", {"--config", "--out"}},
      {"eval", {"--params", "--data", "--task"}},
      {"verify", {"--config", "--seed", "--trials", "--tol"}},
      {"export-orientations", {"--params", "--data", "--out"}},
  };
  for (const auto& [name, flags] : commands) {
    const CliRun r = cli({name, "--help"});
    EXPECT_EQ(r.code, kExitOk) << name;
    for (const auto& f : flags) EXPECT_NE(r.out.find(f), std::string::npos) << name << " " << f;
  }
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
  EXPECT_EQ(cli({}).code, kExitArgument);
  EXPECT_EQ(cli({"bogus"}).code, kExitArgument);
}

TEST_F(Cli, GenNBodyIsDeterministicAndRecordsSeed) {
  const std::vector<std::string> base = {"gen-nbody", "--particles", "3", "--trajectories", "4", "--test-trajectories",
                                         "2",         "--steps",     "20", "--seed",        "9"};
  auto with_out = [&](const std::string& p) {
    auto a = base;
    a.insert(a.end(), {"--out", p});
    return a;
  };
  const CliRun a = cli(with_out(path("a.omp")));
  const CliRun b = cli(with_out(path("b.omp")));
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(path("a.omp")), slurp(path("b.omp")));
  const DatasetFile f = read_dataset(path("a.omp"));
  EXPECT_EQ(f.seed, 9u);
  EXPECT_EQ(nlohmann::json::parse(f.metadata).at("seed"), 9);
}

TEST_F(Cli, GenNBodyArgumentAndIoErrors) {
  EXPECT_EQ(cli({"gen-nbody", "--particles", "1", "--out", path("x.omp")}).code, kExitArgument);
  EXPECT_EQ(cli({"gen-nbody", "--particles", "two", "--out", path("x.omp")}).code, kExitArgument);
  EXPECT_EQ(cli({"gen-nbody"}).code, kExitArgument);
  EXPECT_EQ(cli({"gen-nbody", "--trajectories", "2", "--test-trajectories", "1", "--steps", "5", "--out",
                 path("missing/dir/x.omp")})
                .code,
            kExitIo);
}

TEST_F(Cli, GenShapesValidatesRotationAndWritesUnitNormals) {
  const CliRun bad = cli({"gen-shapes", "--rotation", "xyz", "--out", path("s.omp")});
  EXPECT_EQ(bad.code, kExitArgument);
  for (const char* token : {"none", "z", "so3"}) EXPECT_NE(bad.err.find(token), std::string::npos);

  ASSERT_EQ(cli({"gen-shapes", "--classes", "2", "--points", "16", "--seed", "4", "--out", path("s.omp")}).code,
            kExitOk);
  for (const PointCloud& c : shape_clouds(read_dataset(path("s.omp")))) {
    EXPECT_EQ(c.size(), 16u);
    for (Eigen::Index i = 0; i < c.normals.rows(); ++i) EXPECT_NEAR(c.normals.row(i).norm(), 1.0, 1e-12);
  }
}

TEST_F(Cli, TrainEvalExportFlow) {
  ASSERT_EQ(cli({"gen-shapes", "--classes", "2", "--points", "24", "--seed", "1", "--out", path("none.omp")}).code,
            kExitOk);
  ASSERT_EQ(cli({"gen-shapes", "--classes", "2", "--points", "24", "--seed", "1", "--rotation", "so3", "--out",
                 path("so3.omp")})
                .code,
            kExitOk);
  const std::string cfg = tiny_config(Task::normals, path("none.omp"));

  const CliRun t1 = cli({"train", "--config", cfg, "--out", path("p1.omp")});
  ASSERT_EQ(t1.code, kExitOk) << t1.err;
  const CliRun t2 = cli({"train", "--config", cfg, "--out", path("p2.omp")});
  EXPECT_EQ(t1.out, t2.out);
  EXPECT_EQ(slurp(path("p1.omp")), slurp(path("p2.omp")));
  // The first stdout line echoes the resolved config.
  const auto echoed = nlohmann::json::parse(t1.out.substr(0, t1.out.find('\n')));
  EXPECT_EQ(echoed.at("train_data"), path("none.omp"));

  const CliRun e1 = cli({"eval", "--params", path("p1.omp"), "--data", path("none.omp"), "--task", "normals"});
  ASSERT_EQ(e1.code, kExitOk) << e1.err;
  EXPECT_EQ(e1.out, cli({"eval", "--params", path("p1.omp"), "--data", path("none.omp")}).out);
  const auto metrics = nlohmann::json::parse(e1.out);
  EXPECT_EQ(metrics.at("task"), "normals");
  EXPECT_EQ(metrics.at("examples"), 6);

  EXPECT_EQ(cli({"eval", "--params", path("p1.omp"), "--data", path("none.omp"), "--task", "classify"}).code,
            kExitConfig);
  EXPECT_EQ(cli({"eval", "--params", path("nope.omp"), "--data", path("none.omp")}).code, kExitIo);

  ASSERT_EQ(cli({"export-orientations", "--params", path("p1.omp"), "--data", path("none.omp"), "--out",
                 path("a.csv"), "--index", "3"})
                .code,
            kExitOk);
  ASSERT_EQ(cli({"export-orientations", "--params", path("p1.omp"), "--data", path("so3.omp"), "--out",
                 path("b.csv"), "--index", "3"})
                .code,
            kExitOk);
  EXPECT_EQ(cli({"export-orientations", "--params", path("p1.omp"), "--data", path("none.omp"), "--out",
                 path("c.csv"), "--index", "99"})
                .code,
            kExitArgument);

  auto read_csv = [](const std::string& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,y,z,u1x,u1y,u1z,u2x,u2y,u2z");
    std::vector<std::array<double, 9>> rows;
    while (std::getline(in, line)) {
      std::array<double, 9> r{};
      std::stringstream ss(line);
      for (double& v : r) {
        ss >> v;
        ss.ignore(1);
      }
      rows.push_back(r);
    }
    return rows;
  };
  const auto a = read_csv(path("a.csv"));
  const auto b = read_csv(path("b.csv"));
  ASSERT_EQ(a.size(), 24u);
  ASSERT_EQ(b.size(), 24u);

  // Recover the pose rotation from the point columns, then check u1, u2 co-rotate.
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) cov += Vec3(b[i][0], b[i][1], b[i][2]) * Vec3(a[i][0], a[i][1], a[i][2]).transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 p(a[i][0], a[i][1], a[i][2]);
    EXPECT_LT((r * p - Vec3(b[i][0], b[i][1], b[i][2])).norm(), 1e-9);
    for (int c = 0; c < 2; ++c) {
      const Vec3 u(a[i][3 + 3 * c], a[i][4 + 3 * c], a[i][5 + 3 * c]);
      const Vec3 ru(b[i][3 + 3 * c], b[i][4 + 3 * c], b[i][5 + 3 * c]);
      EXPECT_NEAR(u.norm(), 1.0, 1e-6);
      EXPECT_LT((r * u - ru).norm(), 1e-6);
    }
    EXPECT_NEAR(Vec3(a[i][3], a[i][4], a[i][5]).dot(Vec3(a[i][6], a[i][7], a[i][8])), 0.0, 1e-6);
  }
}

TEST_F(Cli, TrainConfigErrors) {
  std::ofstream(path("bad.json")) << R"({"task": "normals", "model": {"bogus_key": 1}})";
  const CliRun bad = cli({"train", "--config", path("bad.json"), "--out", path("p.omp")});
  EXPECT_EQ(bad.code, kExitConfig);
  EXPECT_NE(bad.err.find("bogus_key"), std::string::npos);

  const std::string cfg = tiny_config(Task::normals, path("absent.omp"));
  EXPECT_EQ(cli({"train", "--config", cfg, "--task", "nbody", "--out", path("p.omp")}).code, kExitConfig);
  EXPECT_EQ(cli({"train", "--config", cfg, "--out", path("p.omp")}).code, kExitIo);
  EXPECT_EQ(cli({"train", "--config", path("absent.json"), "--out", path("p.omp")}).code, kExitIo);
  EXPECT_EQ(cli({"train", "--config", cfg, "--batch-size", "0", "--out", path("p.omp")}).code, kExitArgument);
}

TEST_F(Cli, NBodyTrainAndEvalSplits) {
  ASSERT_EQ(cli({"gen-nbody", "--particles", "5", "--trajectories", "8", "--test-trajectories", "4", "--steps", "10",
                 "--seed", "2", "--out", path("nb.omp")})
                .code,
            kExitOk);
  RunConfig cfg = default_run_config(Task::nbody);
  cfg.model.backbone.widths = {8};
  cfg.model.head_hidden = 8;
  cfg.model.orientation = {1, 6, 3, 4, 1};
  cfg.optim.epochs = 2;
  cfg.train_data = path("nb.omp");
  cfg.metrics = path("metrics.jsonl");
  std::ofstream(path("nb.json")) << to_json(cfg);
  ASSERT_EQ(cli({"train", "--config", path("nb.json"), "--out", path("p.omp")}).code, kExitOk);
  std::istringstream lines(slurp(path("metrics.jsonl")));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    EXPECT_NO_THROW((void)nlohmann::json::parse(line));
    ++n;
  }
  EXPECT_GE(n, 2u);
  const CliRun test = cli({"eval", "--params", path("p.omp"), "--data", path("nb.omp")});
  ASSERT_EQ(test.code, kExitOk) << test.err;
  EXPECT_EQ(nlohmann::json::parse(test.out).at("examples"), 4);
  EXPECT_EQ(nlohmann::json::parse(cli({"eval", "--params", path("p.omp"), "--data", path("nb.omp"), "--split",
                                       "train"})
                                      .out)
                .at("examples"),
            8);
  EXPECT_EQ(cli({"eval", "--params", path("p.omp"), "--data", path("nb.omp"), "--split", "val"}).code, kExitArgument);
}

TEST_F(Cli, VerifyExitCodesAndSchema) {
  EXPECT_EQ(cli({"verify", "--trials", "0"}).code, kExitArgument);
  EXPECT_EQ(cli({"verify", "--tol", "-1"}).code, kExitArgument);

  const CliRun ok = cli({"verify", "--trials", "4", "--points", "40"});
  EXPECT_EQ(ok.code, kExitOk) << ok.out;
  const auto report = nlohmann::json::parse(ok.out);
  ASSERT_TRUE(report.at("checks").is_array());
  EXPECT_TRUE(report.at("pass").get<bool>());
  for (const auto& c : report.at("checks")) {
    EXPECT_TRUE(c.at("name").is_string());
    EXPECT_TRUE(c.at("trials").is_number_unsigned());
    EXPECT_TRUE(c.at("max_dev").is_number());
    EXPECT_TRUE(c.at("tol").is_number());
    EXPECT_TRUE(c.at("pass").is_boolean());
  }
  EXPECT_EQ(ok.out, cli({"verify", "--trials", "4", "--points", "40"}).out);

  const CliRun strict = cli({"verify", "--trials", "4", "--points", "40", "--tol", "1e-300", "--no-mutations"});
  EXPECT_EQ(strict.code, kExitAuditFailed);
  EXPECT_FALSE(nlohmann::json::parse(strict.out).at("pass").get<bool>());
}

TEST_F(Cli, VerifyDefaultConfigPasses) { EXPECT_EQ(cli({"verify"}).code, kExitOk); }

}  // namespace
}  // namespace orientmp
