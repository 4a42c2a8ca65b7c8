#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ddident/cli.hpp"
#include "ddident/common.hpp"
#include "ddident/io.hpp"

using namespace ddident;
using nlohmann::json;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

/// Fresh scratch directory for output files.
std::string make_tmp_dir() {
    char tmpl[] = "/tmp/ddident_cli_XXXXXX";
    char* p = ::mkdtemp(tmpl);
    REQUIRE(p != nullptr);
    return std::string(p);
}

/// Small runnable config: delta pulse at the stream rate, 8 pulses, two
/// single-Doppler groups. Cheap enough for in-process CLI runs.
json tiny_config() {
    json g1;
    g1["tau"] = "1.3us";
    g1["dopplers"] = json::array({"-2.2kHz"});
    g1["alphas"] = json::array({json::array({0.8, 0.3})});
    json g2;
    g2["tau"] = "6.1us";
    g2["dopplers"] = json::array({"3.1kHz"});
    g2["alphas"] = json::array({json::array({-0.5, 0.7})});

    json cfg;
    cfg["name"] = "tiny";
    cfg["seed"] = 7;
    cfg["trials"] = 2;
    cfg["system"]["tau_max"] = "10us";
    cfg["system"]["nu_max"] = "10kHz";
    cfg["system"]["groups"] = json::array({g1, g2});
    cfg["probe"]["n"] = 8;
    cfg["probe"]["T"] = "10us";
    cfg["probe"]["p"] = 4;
    cfg["pulse"]["taps"] = 1;
    cfg["pulse"]["oversample"] = 1;
    cfg["sampler"]["correction"]["mode"] = "exact";
    cfg["snr_db"] = json::array({30.0});
    return cfg;
}

std::string write_config(const std::string& dir, const json& cfg) {
    const std::string path = dir + "/config.json";
    std::ofstream os(path);
    os << cfg.dump(2);
    return path;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("ddident");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("parse_quantity - SI suffixes and plain numbers") {
    CHECK(parse_quantity(json(2.5), Unit::seconds, "f") == 2.5);
    CHECK(parse_quantity(json("10us"), Unit::seconds, "f") == Catch::Approx(10e-6));
    CHECK(parse_quantity(json("1.5ms"), Unit::seconds, "f") == Catch::Approx(1.5e-3));
    CHECK(parse_quantity(json("250ns"), Unit::seconds, "f") == Catch::Approx(250e-9));
    CHECK(parse_quantity(json("3s"), Unit::seconds, "f") == 3.0);
    CHECK(parse_quantity(json("4.4kHz"), Unit::hertz, "f") == Catch::Approx(4400.0));
    CHECK(parse_quantity(json("1.2MHz"), Unit::hertz, "f") == Catch::Approx(1.2e6));
    CHECK(parse_quantity(json("0.5GHz"), Unit::hertz, "f") == Catch::Approx(5e8));
    CHECK(parse_quantity(json("-7Hz"), Unit::hertz, "f") == -7.0);
    CHECK(parse_quantity(json("12"), Unit::none, "f") == 12.0);
    CHECK(std::isinf(parse_quantity(json("inf"), Unit::none, "f")));
    CHECK(std::isinf(parse_quantity(json("Inf"), Unit::seconds, "f")));
}

TEST_CASE("parse_quantity - input validation") {
    CHECK_THROWS_AS(parse_quantity(json("10"), Unit::seconds, "f"), StageError);
    CHECK_THROWS_AS(parse_quantity(json("10m"), Unit::seconds, "f"), StageError);
    CHECK_THROWS_AS(parse_quantity(json("10"), Unit::hertz, "f"), StageError);
    CHECK_THROWS_AS(parse_quantity(json("xHz"), Unit::hertz, "f"), StageError);
    CHECK_THROWS_AS(parse_quantity(json("1.2.3s"), Unit::seconds, "f"), StageError);
    CHECK_THROWS_AS(parse_quantity(json(true), Unit::none, "f"), StageError);
    try {
        parse_quantity(json("10"), Unit::seconds, "system.tau_max");
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(std::string(e.what()).find("[config]") != std::string::npos);
        CHECK(std::string(e.what()).find("system.tau_max") != std::string::npos);
    }
}

TEST_CASE("load_scenario - full config round trip") {
    json cfg = tiny_config();
    cfg["sampler"]["kernel"] = "raised_cosine";
    cfg["sampler"]["channels"] = json::array({2, 3});
    cfg["sampler"]["capture"] = 64;
    cfg["sampler"]["correction"]["mode"] = "fir";
    cfg["sampler"]["correction"]["taps"] = 33;
    cfg["channel_mode"] = "exact";
    cfg["method"] = "annihilating_filter";
    cfg["override_identifiability"] = true;
    cfg["noise_band"]["lo"] = "-200kHz";
    cfg["noise_band"]["hi"] = "200kHz";
    cfg["snr_db"] = json::array({"inf", 30.0});

    Scenario sc = load_scenario(cfg);
    CHECK(sc.name == "tiny");
    CHECK(sc.seed == 7);
    CHECK(sc.trials == 2);
    CHECK(sc.system.tau_max == Catch::Approx(10e-6));
    CHECK(sc.system.nu_max == Catch::Approx(10e3));
    REQUIRE(sc.system.groups.size() == 2);
    CHECK(sc.system.groups[0].tau == Catch::Approx(1.3e-6));
    CHECK(sc.system.groups[0].nus[0] == Catch::Approx(-2.2e3));
    CHECK(sc.system.groups[0].alphas[0] == cplx(0.8, 0.3));
    CHECK(sc.probe.T == Catch::Approx(10e-6));
    CHECK(sc.probe.p == 4);
    CHECK(sc.probe.n_pulses() == 8);
    CHECK(sc.probe.pulse.taps.size() == 1);
    CHECK(sc.sampler.kernel_kind == KernelKind::raised_cosine_rolloff1);
    CHECK(sc.sampler.correction_mode == CorrectionMode::fir);
    CHECK(sc.sampler.correction_taps == 33);
    CHECK(sc.sampler.active_channels == std::vector<int>{2, 3});
    CHECK(sc.sampler.capture_count == 64);
    CHECK(sc.channel_mode == ChannelMode::exact);
    CHECK(sc.method == DopplerMethod::annihilating_filter);
    CHECK(sc.override_identifiability);
    CHECK(sc.has_noise_band);
    CHECK(sc.noise_band_lo == Catch::Approx(-200e3));
    CHECK(sc.noise_band_hi == Catch::Approx(200e3));
    REQUIRE(sc.snr_grid.size() == 2);
    CHECK(std::isinf(sc.snr_grid[0]));
    CHECK(sc.snr_grid[1] == 30.0);
}

TEST_CASE("load_scenario - defaults") {
    json cfg = tiny_config();
    cfg.erase("snr_db");
    Scenario sc = load_scenario(cfg);
    CHECK(sc.sampler.kernel_kind == KernelKind::ideal_lowpass);
    CHECK(sc.sampler.correction_taps == 49);
    CHECK(sc.sampler.active_channels.empty());  // all channels
    CHECK(sc.sampler.capture_count == 0);       // full window
    CHECK(sc.channel_mode == ChannelMode::narrowband);
    CHECK(sc.method == DopplerMethod::matrix_pencil);
    CHECK_FALSE(sc.override_identifiability);
    CHECK_FALSE(sc.has_noise_band);
    REQUIRE(sc.snr_grid.size() == 1);
    CHECK(std::isinf(sc.snr_grid[0]));
}

TEST_CASE("load_scenario - probing sequences") {
    json cfg = tiny_config();

    SECTION("random sequences are deterministic in the seed") {
        Scenario a = load_scenario(cfg);
        Scenario b = load_scenario(cfg);
        CHECK(a.probe.x_seq == b.probe.x_seq);
        for (const auto& v : a.probe.x_seq) CHECK(std::abs(v) == Catch::Approx(1.0));
        cfg["seed"] = 8;
        Scenario c = load_scenario(cfg);
        CHECK(a.probe.x_seq != c.probe.x_seq);
    }
    SECTION("alternating blocks of length r") {
        cfg["probe"]["sequence"] = {{"kind", "alternating"}, {"r", 2}};
        Scenario sc = load_scenario(cfg);
        const std::vector<cplx> want = {cplx(1, 0),  cplx(1, 0),  cplx(-1, 0), cplx(-1, 0),
                                        cplx(1, 0),  cplx(1, 0),  cplx(-1, 0), cplx(-1, 0)};
        CHECK(sc.probe.x_seq == want);
    }
    SECTION("explicit values") {
        cfg["probe"]["sequence"]["kind"] = "explicit";
        cfg["probe"]["sequence"]["values"] = json::array({1, -1, 1, 1, -1, 1, -1, -1});
        Scenario sc = load_scenario(cfg);
        CHECK(sc.probe.x_seq[1] == cplx(-1, 0));
    }
    SECTION("qpsk and random-phase sequences stay on the unit circle") {
        for (const char* kind : {"random_qpsk", "random_phase"}) {
            cfg["probe"]["sequence"] = {{"kind", kind}};
            Scenario sc = load_scenario(cfg);
            for (const auto& v : sc.probe.x_seq) CHECK(std::abs(v) == Catch::Approx(1.0));
        }
    }
}

TEST_CASE("load_scenario - unit-random-phase attenuations are deterministic") {
    json cfg = tiny_config();
    cfg["system"]["groups"][0]["alphas"] = "unit_random_phase";
    Scenario a = load_scenario(cfg);
    Scenario b = load_scenario(cfg);
    REQUIRE(a.system.groups[0].alphas.size() == 1);
    CHECK(std::abs(a.system.groups[0].alphas[0]) == Catch::Approx(1.0));
    CHECK(a.system.groups[0].alphas[0] == b.system.groups[0].alphas[0]);
}

TEST_CASE("load_scenario - input validation") {
    json base = tiny_config();

    json no_system = base;
    no_system.erase("system");
    CHECK_THROWS_AS(load_scenario(no_system), StageError);

    json bad_suffix = base;
    bad_suffix["system"]["groups"][0]["dopplers"][0] = "2.2ks";
    CHECK_THROWS_AS(load_scenario(bad_suffix), StageError);

    json bad_kind = base;
    bad_kind["probe"]["sequence"]["kind"] = "mystery";
    CHECK_THROWS_AS(load_scenario(bad_kind), StageError);

    json short_values = base;
    short_values["probe"]["sequence"]["kind"] = "explicit";
    short_values["probe"]["sequence"]["values"] = json::array({1, -1});
    CHECK_THROWS_AS(load_scenario(short_values), StageError);

    json bad_mode = base;
    bad_mode["sampler"]["correction"]["mode"] = "magic";
    CHECK_THROWS_AS(load_scenario(bad_mode), StageError);

    json bad_kernel = base;
    bad_kernel["sampler"]["kernel"] = "brick";
    CHECK_THROWS_AS(load_scenario(bad_kernel), StageError);

    json bad_channels = base;
    bad_channels["sampler"]["channels"] = json::array({1, 2, 3});
    CHECK_THROWS_AS(load_scenario(bad_channels), StageError);

    json bad_method = base;
    bad_method["method"] = "fft";
    CHECK_THROWS_AS(load_scenario(bad_method), StageError);

    json bad_oversample = base;
    bad_oversample["pulse"]["oversample"] = 0;
    CHECK_THROWS_AS(load_scenario(bad_oversample), StageError);
}

TEST_CASE("load_scenario_file - reads JSON from disk") {
    const std::string dir = make_tmp_dir();
    const std::string path = write_config(dir, tiny_config());
    Scenario sc = load_scenario_file(path);
    CHECK(sc.name == "tiny");
    CHECK_THROWS_AS(load_scenario_file(dir + "/absent.json"), StageError);
}

TEST_CASE("write_sweep_csv - exact header and special values") {
    SweepReport rep;
    SweepRow r1;
    r1.snr_db = kInf;
    r1.e2_delay_mean = 1.25e-9;
    r1.e2_doppler_mean = std::numeric_limits<double>::quiet_NaN();
    r1.failures = 3;
    rep.rows.push_back(r1);
    std::ostringstream os;
    write_sweep_csv(os, rep);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "snr_db,e2_delay,e2_doppler,failures");
    std::getline(in, line);
    CHECK(line == "inf,1.25e-09,nan,3");
}

TEST_CASE("write_study_csv - parameter column is named by the study") {
    StudyRow sr;
    sr.param = 49.0;
    sr.row.snr_db = 60.0;
    sr.row.e2_delay_mean = 0.5;
    sr.row.e2_doppler_mean = 0.25;
    sr.row.failures = 0;
    std::ostringstream os;
    write_study_csv(os, {sr}, "taps");
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "taps,snr_db,e2_delay,e2_doppler,failures");
    std::getline(in, line);
    CHECK(line == "49,60,0.5,0.25,0");
}

TEST_CASE("write_leakage_csv - one row per grid cell") {
    SystemSpec sys;
    sys.tau_max = 10e-6;
    sys.nu_max = 10e3;
    sys.groups.push_back({2.5e-6, {0.0}, {cplx(1, 0)}});
    LeakageGrid grid = quantized_leakage(sys, 400e3, 80e-6);
    std::ostringstream os;
    write_leakage_csv(os, grid);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "l,m,tau_s,nu_hz,re,im,abs");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == (grid.l_max + 1) * (2 * grid.m_max + 1));
}

TEST_CASE("result_to_json - renders groups including failures") {
    RecoveryResult res;
    res.delays = {1e-6, 5e-6};
    res.singular_values = {3.0, 2.0, 0.1};
    DopplerGroup ok;
    ok.tau = 1e-6;
    ok.nus = {2e3};
    ok.alphas = {cplx(0.5, -0.5)};
    ok.fit_residual = 1e-12;
    DopplerGroup bad;
    bad.tau = 5e-6;
    bad.failed = true;
    bad.error = "insufficient temporal degrees of freedom";
    res.groups = {ok, bad};

    json j = result_to_json(res);
    CHECK(j["delays_s"].size() == 2);
    CHECK(j["singular_values"].size() == 3);
    REQUIRE(j["groups"].size() == 2);
    CHECK(j["groups"][0]["nus_hz"][0] == 2e3);
    CHECK(j["groups"][0]["alphas"][0][1] == -0.5);
    CHECK_FALSE(j["groups"][0]["failed"].get<bool>());
    CHECK(j["groups"][1]["failed"].get<bool>());
    CHECK(j["groups"][1]["error"] == "insufficient temporal degrees of freedom");
    CHECK_FALSE(j["groups"][1].contains("nus_hz"));
}

TEST_CASE("cli - check subcommand succeeds on a valid config") {
    const std::string dir = make_tmp_dir();
    const std::string cfg = write_config(dir, tiny_config());
    CHECK(run_cli({"check", "--config", cfg}) == 0);
}

TEST_CASE("cli - sweep writes sweep.csv with one row per SNR") {
    const std::string dir = make_tmp_dir();
    json cfg = tiny_config();
    cfg["snr_db"] = json::array({"inf", 30.0});
    const std::string path = write_config(dir, cfg);
    REQUIRE(run_cli({"sweep", "--config", path, "--out", dir}) == 0);
    auto lines = read_lines(dir + "/sweep.csv");
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "snr_db,e2_delay,e2_doppler,failures");
    CHECK(lines[1].substr(0, 4) == "inf,");
    CHECK(lines[2].substr(0, 3) == "30,");
}

TEST_CASE("cli - run writes a parseable run.json") {
    const std::string dir = make_tmp_dir();
    const std::string path = write_config(dir, tiny_config());
    REQUIRE(run_cli({"run", "--config", path, "--out", dir}) == 0);
    std::ifstream in(dir + "/run.json");
    REQUIRE(in.good());
    json j;
    in >> j;
    CHECK(j["delays_s"].size() == 2);
    CHECK(j["groups"].size() == 2);
}

TEST_CASE("cli - leakage writes the full grid") {
    const std::string dir = make_tmp_dir();
    const std::string path = write_config(dir, tiny_config());
    REQUIRE(run_cli({"leakage", "--config", path, "--out", dir}) == 0);
    auto lines = read_lines(dir + "/leakage.csv");
    CHECK(lines[0] == "l,m,tau_s,nu_hz,re,im,abs");
    CHECK(lines.size() > 1);
}

TEST_CASE("cli - studies honor config-provided parameter lists") {
    const std::string dir = make_tmp_dir();
    json cfg = tiny_config();
    cfg["study"]["captures"] = json::array({32, 48});
    const std::string path = write_config(dir, cfg);
    REQUIRE(run_cli({"samples-study", "--config", path, "--out", dir}) == 0);
    auto lines = read_lines(dir + "/samples_study.csv");
    CHECK(lines[0] == "capture,snr_db,e2_delay,e2_doppler,failures");
    CHECK(lines.size() == 3);  // header + 2 captures x 1 SNR
}

TEST_CASE("cli - error paths exit nonzero") {
    const std::string dir = make_tmp_dir();
    const std::string good = write_config(dir, tiny_config());

    CHECK(run_cli({"check", "--config", dir + "/absent.json"}) != 0);

    const std::string broken = dir + "/broken.json";
    {
        std::ofstream os(broken);
        os << "{ not json";
    }
    CHECK(run_cli({"check", "--config", broken}) != 0);

    json invalid = tiny_config();
    invalid["probe"]["p"] = 3;  // odd channel count is rejected downstream
    const std::string bad = dir + "/bad.json";
    {
        std::ofstream os(bad);
        os << invalid.dump();
    }
    CHECK(run_cli({"check", "--config", bad}) != 0);

    CHECK(run_cli({"sweep", "--config", good, "--format", "json"}) != 0);
    CHECK(run_cli({"--config", good}) != 0);  // missing subcommand
}

TEST_CASE("cli - seed override changes the noisy realization") {
    const std::string dir_a = make_tmp_dir();
    const std::string dir_b = make_tmp_dir();
    json cfg = tiny_config();
    cfg["snr_db"] = json::array({15.0});
    const std::string path = write_config(dir_a, cfg);
    REQUIRE(run_cli({"sweep", "--config", path, "--out", dir_a}) == 0);
    REQUIRE(run_cli({"sweep", "--config", path, "--out", dir_b, "--seed", "99"}) == 0);
    auto a = read_lines(dir_a + "/sweep.csv");
    auto b = read_lines(dir_b + "/sweep.csv");
    CHECK(a[1] != b[1]);
}
