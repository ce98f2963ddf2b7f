#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(MTSNN_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.output.append(buf.data(), n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A few random records per batch in the binary CIFAR-10 layout.
fs::path fake_cifar(const fs::path& root) {
  const fs::path dir = root / "cifar-10-batches-bin";
  fs::create_directories(dir);
  std::uint32_t state = 12345;
  auto write = [&](const std::string& name, std::size_t records) {
    std::ofstream out(dir / name, std::ios::binary);
    for (std::size_t r = 0; r < records; ++r) {
      out.put(static_cast<char>(r % 10));
      for (std::size_t i = 0; i < 3072; ++i) {
        state = state * 1664525u + 1013904223u;
        out.put(static_cast<char>(state >> 24));
      }
    }
  };
  for (int b = 1; b <= 5; ++b) write("data_batch_" + std::to_string(b) + ".bin", 8);
  write("test_batch.bin", 8);
  return root;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    // One directory per test so ctest can run them in parallel.
    const std::string name = ::testing::UnitTest::GetInstance()->current_test_info()->name();
    root_ = fs::temp_directory_path() / ("mtsnn-cli-test-" + name);
    fs::remove_all(root_);
    fake_cifar(root_ / "data");
  }

  static std::string small_run() {
    return "--config " + std::string(MTSNN_SOURCE_DIR) + "/configs/tiny_vgg.cfg --data-root " + (root_ / "data").string() +
           " --set train.epochs=1 --set train.batch_size=8 --set data.train_limit=16 --set data.test_limit=8";
  }

  static fs::path only_run_dir(const fs::path& out) {
    fs::path found;
    for (const auto& e : fs::directory_iterator(out)) {
      if (e.is_directory()) found = e.path();
    }
    return found;
  }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --no-such-flag").code, 2);
}

TEST_F(Cli, UnknownConfigKeyIsNamed) {
  const Result r = run("train --set model.stepz=3 --out " + (root_ / "bad").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("model.stepz"), std::string::npos) << r.output;
}

TEST_F(Cli, MissingDatasetFailsCleanly) {
  const Result r = run("train --data-root " + (root_ / "nowhere").string() + " --out " + (root_ / "none").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("not found"), std::string::npos) << r.output;
}

TEST_F(Cli, TrainVerifyEvaluatePlot) {
  const fs::path out = root_ / "runs";
  const Result train = run("train " + small_run() + " --steps 3 --seed 4 --out " + out.string());
  ASSERT_EQ(train.code, 0) << train.output;
  const fs::path dir = only_run_dir(out);
  ASSERT_FALSE(dir.empty());
  const std::string snapshot = slurp(dir / "config.ini");
  EXPECT_NE(snapshot.find("steps = 3\n"), std::string::npos) << snapshot;
  EXPECT_NE(snapshot.find("seed = 4\n"), std::string::npos) << snapshot;
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));

  const std::string ckpt = (dir / "checkpoints" / "final.ckpt").string();
  const Result verify = run("verify --checkpoint " + ckpt + " --data-root " + (root_ / "data").string() + " --images 2");
  EXPECT_EQ(verify.code, 0) << verify.output;
  EXPECT_TRUE(fs::exists(dir / "verify.json"));
  EXPECT_NE(verify.output.find("\"accumulation_multiplications\": 0"), std::string::npos) << verify.output;

  const Result injected = run("verify --checkpoint " + ckpt + " --data-root " + (root_ / "data").string() +
                              " --images 2 --inject-multiply --out " + (root_ / "injected.json").string());
  EXPECT_EQ(injected.code, 1) << injected.output;

  const Result eval = run("evaluate --checkpoint " + ckpt + " --data-root " + (root_ / "data").string());
  EXPECT_EQ(eval.code, 0) << eval.output;

  EXPECT_EQ(run("plot " + dir.string() + " --out " + (root_ / "p1").string()).code, 0);
  EXPECT_EQ(run("plot " + dir.string() + " --out " + (root_ / "p2").string()).code, 0);
  EXPECT_EQ(slurp(root_ / "p1" / "accuracy_vs_epoch.svg"), slurp(root_ / "p2" / "accuracy_vs_epoch.svg"));
  EXPECT_EQ(run("plot --out " + (root_ / "p3").string()).code, 2);
}

TEST_F(Cli, EmptyCheckpointIsUsageError) {
  const fs::path empty = root_ / "empty.ckpt";
  std::ofstream(empty).close();
  const Result r = run("verify --checkpoint " + empty.string());
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, AblationWritesOneRowPerSetting) {
  const fs::path out = root_ / "ablate";
  const fs::path csv = root_ / "ablate.csv";
  const Result r = run("ablate " + small_run() + " --axis deltas --values 'none;-0.3;0.3;-0.3,0.3' --out " +
                       out.string() + " --csv " + csv.string());
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string text = slurp(csv);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5) << text;
}
