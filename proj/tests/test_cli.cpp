#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "aqsense/io.hpp"
#include "cli.hpp"

using namespace aqsense;
namespace fs = std::filesystem;

namespace {

fs::path workdir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "aqsense_test_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

struct Result {
    int rc;
    std::string out, err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int rc = cli::run(args, out, err);
    return {rc, out.str(), err.str()};
}

Json without_wall_time(Json j) {
    j.erase("wall_time_s");
    return j;
}

}  // namespace

TEST_CASE("simulate then calibrate recovers the noise variance") {
    const auto dir = workdir("calib");
    write(dir / "sim.json",
          R"({"schema_version":1,"seed":7,"simulate":{"model":"measurement","slots":10000,"locations":10,)"
          R"("values":[40,50,60,70,80,90,100,110,120],"bandwidth":15,"sigma0_sq":0.0037}})");
    auto r = call({"simulate", "--config", (dir / "sim.json").string(), "--out", (dir / "sim").string()});
    REQUIRE_MESSAGE(r.rc == 0, r.err);
    write(dir / "cal.json", R"({"schema_version":1,"traces":"sim/traces.csv"})");
    r = call({"calibrate", "--config", (dir / "cal.json").string(), "--out", (dir / "cal").string()});
    REQUIRE_MESSAGE(r.rc == 0, r.err);
    const auto p = params_from_json(load_json(dir / "cal" / "params.json"));
    CHECK(p.locations() == 10);
    CHECK(std::abs(p.sigma0_sq - 0.0037) / 0.0037 < 0.1);
    CHECK(fs::exists(dir / "cal" / "env.json"));
}

TEST_CASE("exit codes") {
    const auto dir = workdir("codes");
    CHECK(call({}).rc == cli::kUsage);
    CHECK(call({"frobnicate"}).rc == cli::kUsage);
    CHECK(call({"calibrate"}).rc == cli::kUsage);
    CHECK(call({"calibrate", "--config", (dir / "absent.json").string()}).rc == cli::kValidation);

    write(dir / "empty.csv", "");
    write(dir / "cal.json", R"({"schema_version":1,"traces":"empty.csv"})");
    auto r = call({"calibrate", "--config", (dir / "cal.json").string(), "--out", (dir / "o").string()});
    CHECK(r.rc == cli::kParse);
    CHECK_FALSE(r.err.empty());

    write(dir / "bad.json", "{ nope");
    CHECK(call({"calibrate", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()}).rc == cli::kParse);

    write(dir / "sim.json", R"({"schema_version":1,"seed":1,"simulate":{"model":"location","slots":400,"locations":4,"values":[40,50,60]}})");
    REQUIRE(call({"simulate", "--config", (dir / "sim.json").string(), "--out", (dir / "sim").string()}).rc == 0);
    write(dir / "c2.json", R"({"schema_version":1,"traces":"sim/traces.csv"})");
    REQUIRE(call({"calibrate", "--config", (dir / "c2.json").string(), "--out", (dir / "cal").string()}).rc == 0);
    write(dir / "plan.json", R"({"schema_version":1,"params":"cal/params.json","environment":"cal/env.json",)"
                             R"("planning":{"K":4,"L":1,"T":100,"E":5,"delta_T":10}})");
    r = call({"plan-single", "--config", (dir / "plan.json").string(), "--out", (dir / "p").string()});
    CHECK(r.rc == cli::kValidation);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("reports are reproducible and dp beats uniform") {
    const auto dir = workdir("eval");
    write(dir / "sim.json", R"({"schema_version":1,"seed":7,"simulate":{"model":"location","slots":3000,"locations":6,)"
                            R"("values":[40,45,50,55,60,65,70],"bandwidth":5}})");
    REQUIRE(call({"simulate", "--config", (dir / "sim.json").string(), "--out", (dir / "sim").string()}).rc == 0);
    write(dir / "cal.json", R"({"schema_version":1,"traces":"sim/traces.csv"})");
    REQUIRE(call({"calibrate", "--config", (dir / "cal.json").string(), "--out", (dir / "cal").string()}).rc == 0);
    write(dir / "ev.json", R"({"schema_version":1,"seed":3,"params":"cal/params.json","environment":"cal/env.json",)"
                           R"("planning":{"K":6,"L":1,"T":100,"E":20,"delta_T":10},"deployed":[2],)"
                           R"("evaluation":{"trajectories":10,"strategies":["uniform","dp"]}})");
    auto a = call({"evaluate", "--config", (dir / "ev.json").string(), "--out", (dir / "a").string()});
    REQUIRE_MESSAGE(a.rc == 0, a.err);
    auto b = call({"evaluate", "--config", (dir / "ev.json").string(), "--out", (dir / "b").string()});
    REQUIRE_MESSAGE(b.rc == 0, b.err);
    const auto ra = load_json(dir / "a" / "report.json"), rb = load_json(dir / "b" / "report.json");
    CHECK(without_wall_time(ra) == without_wall_time(rb));
    const auto& st = ra.at("results").at("strategies");
    CHECK(st.at("dp").at("mean_J_bar").get<double>() < st.at("uniform").at("mean_J_bar").get<double>());

    auto c = call({"evaluate", "--config", (dir / "ev.json").string(), "--out", (dir / "c").string(), "--seed", "99"});
    REQUIRE(c.rc == 0);
    CHECK(without_wall_time(load_json(dir / "c" / "report.json")) != without_wall_time(ra));
}
