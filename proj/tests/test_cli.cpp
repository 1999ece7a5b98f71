#include "temp_dir.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

using testing_support::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int status = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome run(const TempDir& dir, const std::string& args)
{
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string("'") + QAPARSE_CLI + "' " + args + " >'" + out.string() + "' 2>'" +
                            err.string() + "'";
    const int raw = std::system(cmd.c_str());
    Outcome r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string q(const fs::path& p)
{
    return "'" + p.string() + "'";
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        dir_ = new TempDir("cli");
        const Outcome noisy = run(*dir_, "synth --out " + q(*dir_ / "noisy") +
                                         " --seed 81 --images 6 --boundary-noise 2 --swap-prob 0.1 --erosion 0,2"
                                         " --box-sigma 0.1 --iou-sigma 0.1");
        ASSERT_EQ(noisy.status, 0) << noisy.err;
        const Outcome clean = run(*dir_, "synth --out " + q(*dir_ / "clean") +
                                         " --seed 82 --images 4 --box-margin 0 --box-jitter 0 --floor 0.99");
        ASSERT_EQ(clean.status, 0) << clean.err;
    }
    static void TearDownTestSuite()
    {
        delete dir_;
        dir_ = nullptr;
    }

    static TempDir* dir_;
};

TempDir* Cli::dir_ = nullptr;

} // namespace

TEST_F(Cli, HelpExitsZero)
{
    const Outcome r = run(*dir_, "--help");
    EXPECT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("score"), std::string::npos);
    EXPECT_EQ(run(*dir_, "evaluate --help").status, 0);
}

TEST_F(Cli, UsageErrorsExitTwo)
{
    EXPECT_EQ(run(*dir_, "").status, 2);
    EXPECT_EQ(run(*dir_, "frobnicate").status, 2);
    EXPECT_EQ(run(*dir_, "score --out x.json").status, 2);  // no manifest
    EXPECT_EQ(run(*dir_, "score --manifest m.json --out x.json --bogus").status, 2);
    EXPECT_EQ(run(*dir_, "score --manifest m.json --out x.json --weights 1,2").status, 2);
    EXPECT_EQ(run(*dir_, "score --manifest m.json --out x.json --weights 0,0,0").status, 2);
    EXPECT_EQ(run(*dir_, "score --manifest m.json --out x.json --threshold 1.5").status, 2);
    EXPECT_EQ(run(*dir_, "synth --out x --size 12by4").status, 2);
    EXPECT_EQ(run(*dir_, "-j 0 score --manifest m.json --out x.json").status, 2);
}

TEST_F(Cli, MissingManifestExitsOneAndNamesPath)
{
    const auto missing = *dir_ / "does_not_exist.json";
    const Outcome r = run(*dir_, "score --manifest " + q(missing) + " --out " + q(*dir_ / "s.json"));
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("does_not_exist.json"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(*dir_ / "s.json"));
}

TEST_F(Cli, BoxOnlyWeightsReproduceBoxScores)
{
    const auto manifest = *dir_ / "noisy/manifest.json";
    const auto out = *dir_ / "box_only.json";
    const Outcome r = run(*dir_, "score --manifest " + q(manifest) + " --weights 1,0,0 --out " + q(out));
    ASSERT_EQ(r.status, 0) << r.err;

    std::map<std::string, double> box;
    const json doc = json::parse(slurp(manifest));
    for (const auto& inst : doc.at("instances"))
        box[inst.at("instance_id").get<std::string>()] = inst.at("box_score").get<double>();
    const json scores = json::parse(slurp(out));
    ASSERT_EQ(scores.at("instances").size(), box.size());
    for (const auto& s : scores.at("instances"))
        EXPECT_EQ(s.at("instance_score").get<double>(), box.at(s.at("instance_id").get<std::string>()));
}

TEST_F(Cli, CleanCorpusScoresHighAndEvaluatesPerfectly)
{
    const auto manifest = *dir_ / "clean/manifest.json";
    const auto scores = *dir_ / "clean_scores.json";
    const auto report = *dir_ / "clean_report.json";
    ASSERT_EQ(run(*dir_, "score --manifest " + q(manifest) + " --out " + q(scores)).status, 0);
    const json scored = json::parse(slurp(scores));
    for (const auto& s : scored.at("instances"))
        EXPECT_GE(s.at("instance_score").get<double>(), 0.99);

    const Outcome r = run(*dir_, "evaluate --pred " + q(scores) + " --gt " + q(manifest) + " --out " + q(report));
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("ap_p: 1.000000"), std::string::npos) << r.out;
    const json doc = json::parse(slurp(report));
    for (const char* key : {"pix_acc", "mean_acc", "miou", "pcp_50"}) EXPECT_DOUBLE_EQ(doc.at(key).get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(doc.at("ap_p").at("mean").get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(doc.at("ap_r").at("50").get<double>(), 1.0);
    EXPECT_EQ(doc.at("ap_p").at("by_threshold").size(), 9u);
}

TEST_F(Cli, ManifestFromEnvironment)
{
    const auto manifest = *dir_ / "noisy/manifest.json";
    const auto by_flag = *dir_ / "flag.json";
    const auto by_env = *dir_ / "env.json";
    ASSERT_EQ(run(*dir_, "score --manifest " + q(manifest) + " --out " + q(by_flag)).status, 0);
    const Outcome r = run(*dir_, "score --out " + q(by_env));
    EXPECT_EQ(r.status, 2);
    ::setenv("QAPARSE_MANIFEST", manifest.c_str(), 1);
    const Outcome e = run(*dir_, "score --out " + q(by_env));
    ::unsetenv("QAPARSE_MANIFEST");
    ASSERT_EQ(e.status, 0) << e.err;
    EXPECT_EQ(json::parse(slurp(by_env)).at("instances"), json::parse(slurp(by_flag)).at("instances"));
}

TEST_F(Cli, SweepAndCorrelateTables)
{
    const auto manifest = *dir_ / "noisy/manifest.json";
    const Outcome sweep = run(*dir_, "sweep-weights --manifest " + q(manifest) + " --grid ablation");
    ASSERT_EQ(sweep.status, 0) << sweep.err;
    EXPECT_EQ(sweep.out.rfind("alpha\tbeta\tgamma\tap_p", 0), 0u);
    EXPECT_EQ(std::count(sweep.out.begin(), sweep.out.end(), '\n'), 9);

    const Outcome corr = run(*dir_, "correlate --manifest " + q(manifest) + " --truth " + q(*dir_ / "noisy/truth.json"));
    ASSERT_EQ(corr.status, 0) << corr.err;
    EXPECT_EQ(corr.out.rfind("score\ttarget\tspearman\tsamples", 0), 0u);
    EXPECT_NE(corr.out.find("fused\tmiou"), std::string::npos);

    EXPECT_EQ(run(*dir_, "sweep-weights --manifest " + q(manifest) + " --objective nope").status, 2);
}
