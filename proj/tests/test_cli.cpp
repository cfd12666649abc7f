#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "hdspc/cli.hpp"
#include "hdspc/experiment_config.hpp"
#include "hdspc/io.hpp"
#include "hdspc/pca_model.hpp"
#include "hdspc/simulation.hpp"

using namespace hdspc;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "hdspc");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("hdspc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    void write_matrix(const std::string& name, const Matrix& m) const {
        std::ostringstream s;
        write_csv(s, m);
        write_text_file(dir / name, s.str());
    }
    fs::path dir;
};

Matrix read_chart(const std::string& text) {
    std::istringstream in(text);
    return read_csv(in, true).data;
}

} // namespace

TEST_F(Cli, FitToyModel) {
    write_text_file(dir / "toy.csv", "1,2\n2,1\n3,3\n");
    const auto r = run({"fit", path("toy.csv"), "-o", path("m.json")});
    ASSERT_EQ(r.code, kExitClean) << r.err;
    const PCModel m = load_model(path("m.json"));
    EXPECT_EQ(m.dim(), 2);
    EXPECT_NEAR(m.mean()[0], 2.0, 1e-15);
    EXPECT_TRUE(fs::exists(path("m.json.manifest.json")));

    const Matrix raw = read_csv_file(path("toy.csv"), false).data;
    const PCModel mem = fit_pca(raw);
    for (Index i = 0; i < raw.rows(); ++i)
        EXPECT_EQ(project(m, Vector(raw.row(i).transpose())).standardized,
                  project(mem, Vector(raw.row(i).transpose())).standardized);
}

TEST_F(Cli, FitHeaderMismatchNamesLine) {
    write_text_file(dir / "h.csv", "a,b\n1,2\n3\n");
    const auto r = run({"fit", path("h.csv"), "--header", "-o", path("m.json")});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.err.find(":3:"), std::string::npos) << r.err;
    const auto r2 = run({"fit", path("h.csv"), "-o", path("m.json")});
    EXPECT_EQ(r2.code, kExitData);
    EXPECT_NE(r2.err.find(":1:"), std::string::npos) << r2.err;
}

TEST_F(Cli, CalibrateAnalyticMedian) {
    save_model(from_known(Vector::Zero(40), Matrix::Identity(40, 40)), path("m.json"));
    const auto r = run({"calibrate", "-m", path("m.json"), "-o", path("c.json"), "--alpha", "0.5", "--mode",
                        "analytic", "--nu", "0.5"});
    ASSERT_EQ(r.code, kExitClean) << r.err;
    const auto doc = nlohmann::json::parse(read_text_file(path("c.json")));
    EXPECT_NEAR(doc["r0"].get<double>(), 40.0 * threshold_moments(0.5).mean, 1e-12);
}

TEST_F(Cli, CalibrateMonteCarloIsDeterministicAndOnTarget) {
    save_model(from_known(Vector::Zero(30), Matrix::Identity(30, 30)), path("m.json"));
    const std::vector<std::string> args{"calibrate", "-m", path("m.json"), "--mode", "monte_carlo",
                                        "--target-arl", "200", "--reps", "1000", "--seed", "4", "--workers", "4"};
    auto a = args;
    a.insert(a.end(), {"-o", path("a.json")});
    auto b = args;
    b.insert(b.end(), {"-o", path("b.json")});
    ASSERT_EQ(run(a).code, kExitClean);
    ASSERT_EQ(run(b).code, kExitClean);
    EXPECT_EQ(read_text_file(path("a.json")), read_text_file(path("b.json")));
    const auto doc = nlohmann::json::parse(read_text_file(path("a.json")));
    const double arl = doc["empirical_arl"].get<double>();
    EXPECT_GE(arl, 180.0);
    EXPECT_LE(arl, 220.0);
}

TEST_F(Cli, MonitorExitCodesAndConcatenation) {
    const Index p = 10;
    const PCModel model = from_known(Vector::Zero(p), Matrix::Identity(p, p));
    save_model(model, path("m.json"));
    ASSERT_EQ(run({"calibrate", "-m", path("m.json"), "-o", path("c.json"), "--mode", "monte_carlo", "--reps",
                   "300", "--target-arl", "1000"})
                  .code,
              kExitClean);
    Engine eng = make_engine(12, 0);
    const Matrix clean = draw_samples(model, Vector::Zero(p), 30, eng);
    const Matrix shifted = draw_samples(model, Vector::Constant(p, 2.0), 20, eng);
    write_matrix("clean.csv", clean);
    write_matrix("shifted.csv", shifted);
    Matrix both(50, p);
    both << clean, shifted;
    write_matrix("both.csv", both);

    const auto ok = run({"monitor", "-m", path("m.json"), "-c", path("c.json"), path("clean.csv")});
    EXPECT_EQ(ok.code, kExitClean) << ok.err;
    EXPECT_EQ(read_chart(ok.out).rows(), 30);

    const auto joined = run({"monitor", "-m", path("m.json"), "-c", path("c.json"), path("both.csv")});
    EXPECT_EQ(joined.code, kExitAlarm);
    EXPECT_NE(joined.err.find("alarm at t=31"), std::string::npos) << joined.err;
    const Matrix chart = read_chart(joined.out);
    EXPECT_EQ(chart.rows(), 50);
    EXPECT_EQ(chart.col(3).tail(20).sum(), 20.0);

    const auto split =
        run({"monitor", "-m", path("m.json"), "-c", path("c.json"), path("clean.csv"), path("shifted.csv")});
    EXPECT_EQ(split.code, kExitAlarm);
    EXPECT_EQ(split.out, joined.out);

    const auto to_file = run({"monitor", "-m", path("m.json"), "-c", path("c.json"), path("both.csv"), "-o",
                              path("chart.csv"), "--contributions"});
    EXPECT_EQ(to_file.code, kExitAlarm);
    const auto t = read_csv_file(path("chart.csv"), true);
    EXPECT_EQ(t.data.cols(), 4 + p);
    EXPECT_EQ(t.data.col(1), chart.col(1));

    write_matrix("wide.csv", Matrix::Zero(3, p + 1));
    EXPECT_EQ(run({"monitor", "-m", path("m.json"), "-c", path("c.json"), path("wide.csv")}).code, kExitData);
}

TEST_F(Cli, DiagnoseIdentityToy) {
    const Index p = 8;
    const PCModel model = from_known(Vector::Zero(p), Matrix::Identity(p, p));
    save_model(model, path("m.json"));
    Vector mu = Vector::Zero(p);
    mu[5] = 3.0;
    write_matrix("exact.csv", mu.transpose().replicate(25, 1));
    const auto r = run({"diagnose", "-m", path("m.json"), path("exact.csv"), "-o", path("d.json")});
    ASSERT_EQ(r.code, kExitClean) << r.err;
    const auto doc = nlohmann::json::parse(read_text_file(path("d.json")));
    EXPECT_EQ(doc["support"], nlohmann::json::array({5}));
    EXPECT_NEAR(doc["shift"][5].get<double>(), 3.0, 1e-9);

    Engine eng = make_engine(3, 0);
    write_matrix("noisy.csv", draw_samples(model, mu, 25, eng));
    for (const char* method : {"pcsr", "leb"}) {
        const auto n = run({"diagnose", "-m", path("m.json"), path("noisy.csv"), "--method", method, "-o",
                            path(std::string(method) + ".json")});
        ASSERT_EQ(n.code, kExitClean) << n.err;
    }
    const auto a = nlohmann::json::parse(read_text_file(path("pcsr.json")));
    const auto b = nlohmann::json::parse(read_text_file(path("leb.json")));
    EXPECT_EQ(a["support"], b["support"]);
    const auto sup = a["support"].get<std::vector<Index>>();
    EXPECT_NE(std::find(sup.begin(), sup.end(), 5), sup.end());
}

TEST_F(Cli, DiagnoseRowWindowAndColumnNames) {
    const Index p = 6;
    const PCModel model = from_known(Vector::Zero(p), Matrix::Identity(p, p));
    Engine eng = make_engine(2, 0);
    Matrix train = draw_samples(model, Vector::Zero(p), 500, eng);
    std::ostringstream s;
    write_csv(s, train, {"a", "b", "c", "d", "e", "f"});
    write_text_file(dir / "train.csv", s.str());
    ASSERT_EQ(run({"fit", path("train.csv"), "--header", "-o", path("m.json")}).code, kExitClean);

    Vector mu = Vector::Zero(p);
    mu[2] = 100.0;
    Matrix x(40, p);
    x << Matrix::Zero(20, p), mu.transpose().replicate(20, 1);
    std::ostringstream s2;
    write_csv(s2, x, {"a", "b", "c", "d", "e", "f"});
    write_text_file(dir / "x.csv", s2.str());
    const auto r = run({"diagnose", "-m", path("m.json"), path("x.csv"), "--header", "--rows", "21:40", "-o",
                        path("d.json")});
    ASSERT_EQ(r.code, kExitClean) << r.err;
    const auto doc = nlohmann::json::parse(read_text_file(path("d.json")));
    EXPECT_EQ(doc["m"], 20);
    EXPECT_EQ(doc["support_names"], nlohmann::json::array({"c"}));
    EXPECT_NE(r.out.find("c"), std::string::npos);
    EXPECT_EQ(run({"diagnose", "-m", path("m.json"), path("x.csv"), "--header", "--rows", "30:50"}).code, kExitData);
    EXPECT_EQ(run({"diagnose", "-m", path("m.json"), path("x.csv"), "--header", "--rows", "30"}).code, kExitUsage);
}

TEST_F(Cli, SyntheticImagePipeline) {
    ASSERT_EQ(run({"synth-image", "-o", path("img.pgm"), "--model-out", path("m.json"), "--seed", "3"}).code,
              kExitClean);
    ASSERT_EQ(run({"calibrate", "-m", path("m.json"), "-o", path("c.json"), "--mode", "monte_carlo", "--reps",
                   "200", "--seed", "2", "--workers", "0"})
                  .code,
              kExitClean);
    const auto mon = run({"monitor", "-m", path("m.json"), "-c", path("c.json"), "--image", path("img.pgm")});
    EXPECT_EQ(mon.code, kExitAlarm);
    EXPECT_NE(mon.err.find("alarm at t=127"), std::string::npos) << mon.err;
    EXPECT_EQ(read_chart(mon.out).rows(), 198);
}

TEST_F(Cli, ExperimentPresetsParseAndRun) {
    for (const auto& entry : fs::directory_iterator(HDSPC_CONFIG_DIR)) {
        const auto plan = parse_experiment(read_key_values_file(entry.path()));
        EXPECT_FALSE(plan.kind.empty()) << entry.path();
    }
    write_text_file(dir / "d.cfg",
                    "experiment = diagnosis\nscenario = ar1\np = 30\nshift_fractions = 0.1\ndeltas = 1.0\nreps = 3\n");
    const auto r = run({"experiment", path("d.cfg"), "-o", path("out")});
    ASSERT_EQ(r.code, kExitClean) << r.err;
    const auto t = read_csv_file(path("out.csv"), true);
    EXPECT_EQ(t.header.front(), "ps");
    EXPECT_EQ(t.data.rows(), 1);
    EXPECT_TRUE(fs::exists(path("out.json")));
}

TEST_F(Cli, UsageAndDataErrors) {
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"bogus"}).code, kExitUsage);
    EXPECT_EQ(run({"--help"}).code, kExitClean);
    EXPECT_EQ(run({"fit", path("missing.csv"), "-o", path("m.json")}).code, kExitData);
    write_text_file(dir / "nan.csv", "1,2\nnan,3\n4,5\n");
    const auto r = run({"fit", path("nan.csv"), "-o", path("m.json")});
    EXPECT_EQ(r.code, kExitData);
    EXPECT_NE(r.err.find(":2:"), std::string::npos) << r.err;
    EXPECT_EQ(run({"calibrate", "-m", path("m.json"), "-o", path("c.json"), "--alpha", "0.1", "--target-arl", "5"})
                  .code,
              kExitUsage);
}
