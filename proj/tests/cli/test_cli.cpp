// Drives the installed command-line binary as a subprocess.
#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <sys/wait.h>

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

struct Proc {
  int status = -1;
  std::string out;
};

Proc sslseg(const std::string& args) {
  const std::string cmd = std::string(SSLSEG_CLI_PATH) + " " + args + " 2>&1";
  Proc r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

// Tiny synthetic setup shared by the pipeline tests.
std::string tiny(const TempDir& dir) {
  const std::string d = dir.path().string();
  return "--data.synthetic_count 40 --data.train_count 24 --data.val_count 8 --data.test_count 8"
         " --model.base_width 4 --model.depth 2 --model.embedding_dim 16 --model.pred_hidden 8"
         " --pretrain.batch_size 8 --pretrain.run_dir " + d + "/pre"
         " --finetune.epochs 1 --finetune.repeats 1 --finetune.batch_size 4"
         " --finetune.results_log " + d + "/results.tsv --report.results_log " + d + "/results.tsv"
         " --report.out_dir " + d + "/report --report.panels_dir " + d + "/panels -q";
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(sslseg("").status, 2);
  EXPECT_EQ(sslseg("frobnicate").status, 2);
  EXPECT_EQ(sslseg("report --no-such-flag 1").status, 2);
  const Proc help = sslseg("--help");
  EXPECT_EQ(help.status, 0);
  EXPECT_NE(help.out.find("export-masks"), std::string::npos);
  EXPECT_NE(help.out.find("--pretrain.method"), std::string::npos);
}

TEST(Cli, BadConfigValueExitsOne) {
  const Proc r = sslseg("report --pretrain.epochs many");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("config error"), std::string::npos);
  EXPECT_EQ(sslseg("report --config /nonexistent.ini").status, 2);
}

TEST(Cli, MissingResultsLogIsIngestionError) {
  TempDir dir("cli_missing");
  const Proc r = sslseg("report --report.results_log " + (dir / "none.tsv").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("ingestion error"), std::string::npos);
}

TEST(Cli, ReportAggregatesLog) {
  TempDir dir("cli_report");
  {
    std::ofstream log(dir / "results.tsv");
    const double moco = 0.585, simclr = 0.6, simsiam = 0.612;
    for (auto [m, v] : {std::pair{"MoCo", moco}, {"SimCLR", simclr}, {"SimSiam", simsiam}}) {
      log << m << "\tCIFAR-10\tresnet50_unet\t32\t1\t0\t" << v << "\n";
    }
  }
  const Proc r = sslseg("report -q --report.results_log " + (dir / "results.tsv").string() + " --report.out_dir " +
                       (dir / "out").string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("0.599"), std::string::npos) << r.out;
}

TEST(Cli, SyntheticPipeline) {
  TempDir dir("cli_pipeline");
  const std::string base = tiny(dir);
  Proc r = sslseg("split " + base);
  ASSERT_EQ(r.status, 0) << r.out;

  r = sslseg("pretrain --pretrain.epochs 0 " + base);
  ASSERT_EQ(r.status, 0) << r.out;
  ASSERT_TRUE(std::filesystem::exists(dir / "pre" / "checkpoint.bin"));

  const std::string model = (dir / "model.bin").string();
  r = sslseg("finetune --finetune.checkpoint " + (dir / "pre" / "checkpoint.bin").string() +
             " --finetune.model_out " + model + " " + base);
  ASSERT_EQ(r.status, 0) << r.out;
  ASSERT_TRUE(std::filesystem::exists(dir / "results.tsv"));

  r = sslseg("evaluate --report.model " + model + " " + base);
  ASSERT_EQ(r.status, 0) << r.out;

  r = sslseg("export-masks --report.model " + model + " " + base);
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(dir / "panels"));
}
