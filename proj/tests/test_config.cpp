#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "wavegap/config.hpp"
#include "wavegap/pipeline.hpp"
#include "wavegap/report.hpp"

using namespace wavegap;
using Catch::Matchers::ContainsSubstring;

namespace {

const char* base = R"([model]
type = neural_field
kernel = exponential
kernel_scale = 1
beta = 8
theta = 0.5

[grid]
L = 20
N = 256
)";

std::string error_of(const std::string& text)
{
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("a minimal configuration parses with defaults", "[config]")
{
    auto c = parse_config_text(base);
    CHECK(c.model.beta == 8);
    CHECK(c.grid.N == 256);
    CHECK(c.gap.n_samples == 1000);
    CHECK(c.sde.n_traj == 500);
    CHECK_FALSE(c.sde.present);
    CHECK_FALSE(c.sde.sigma.has_value());
    CHECK(c.hash == sha256_hex(base));
    CHECK(c.system().gain.has_value());
}

TEST_CASE("missing kernel scale names the field", "[config]")
{
    std::string text = base;
    text.erase(text.find("kernel_scale = 1\n"), 17);
    CHECK_THAT(error_of(text), ContainsSubstring("model.kernel_scale") && ContainsSubstring("missing"));
}

TEST_CASE("unknown keys and sections are rejected with line numbers", "[config]")
{
    CHECK_THAT(error_of(std::string(base) + "tolerance = 3\n"), ContainsSubstring("line 11") &&
                                                                   ContainsSubstring("grid.tolerance"));
    CHECK_THAT(error_of(std::string(base) + "[plots]\nx = 1\n"), ContainsSubstring("unknown section"));
}

TEST_CASE("numeric fields are range-checked", "[config]")
{
    auto with = [](const std::string& from, const std::string& to) {
        std::string t = base;
        t.replace(t.find(from), from.size(), to);
        return error_of(t);
    };
    CHECK_THAT(with("N = 256", "N = 8"), ContainsSubstring("grid.N"));
    CHECK_THAT(with("N = 256", "N = 25.5"), ContainsSubstring("integer"));
    CHECK_THAT(with("L = 20", "L = -1"), ContainsSubstring("positive"));
    CHECK_THAT(with("beta = 8", "beta = eight"), ContainsSubstring("expected a number"));
    CHECK_THAT(with("kernel = exponential", "kernel = cauchy"), ContainsSubstring("expected one of"));
    CHECK_THAT(with("beta = 8", "lambda = 2"), ContainsSubstring("phase_transition"));
    CHECK_THAT(error_of(std::string(base) + "[sde]\nseed = -4\n"), ContainsSubstring("sde.seed"));
    CHECK_THAT(error_of(std::string(base) + "[sde]\nsigma = -0.1\n"), ContainsSubstring("sde.sigma"));
}

TEST_CASE("tabulated kernels resolve relative to the config file", "[config]")
{
    std::string text = "[model]\ntype = neural_field\nkernel = tabulated\nkernel_file = laplace_kernel.csv\n";
    auto c = parse_config_text(text, std::string(WAVEGAP_TEST_DATA) + "/x.cfg");
    Kernel k = c.make_kernel();
    CHECK(k.family() == KernelFamily::Tabulated);
    CHECK(k.upper_mass(0) == Catch::Approx(0.5).margin(1e-12));
    CHECK_THAT(error_of("[model]\nkernel = tabulated\n"), ContainsSubstring("model.kernel_file"));
}

TEST_CASE("sha256 of known messages", "[config]")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("report doubles carry 17 significant digits", "[config]")
{
    Json j;
    j["third"] = 1.0 / 3;
    j["whole"] = 2.0;
    j["bad"] = std::numeric_limits<double>::quiet_NaN();
    j["list"] = Json::array({0.1, -1e-300});
    j["count"] = 7;
    std::string s = to_json_text(j);
    CHECK_THAT(s, ContainsSubstring("\"third\": 0.33333333333333331"));
    CHECK_THAT(s, ContainsSubstring("\"whole\": 2.0"));
    CHECK_THAT(s, ContainsSubstring("\"bad\": null"));
    CHECK_THAT(s, ContainsSubstring("[0.10000000000000001, -1e-300]"));
    CHECK_THAT(s, ContainsSubstring("\"count\": 7"));
    CHECK(Json::parse(s)["third"].get<double>() == 1.0 / 3);
}

TEST_CASE("csv writer checks its columns", "[config]")
{
    auto dir = std::filesystem::temp_directory_path() / "wavegap_csv_test";
    Eigen::VectorXd a(2), b(2);
    a << 1, 2;
    b << 0.5, std::nan("");
    write_csv(dir / "t.csv", {"a", "b"}, {a, b});
    CHECK(slurp(dir / "t.csv") == "a,b\n1.0,0.5\n2.0,nan\n");
    CHECK_THROWS_AS(write_csv(dir / "u.csv", {"a"}, {a, b}), ShapeError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("pipeline reports carry the provenance header", "[config]")
{
    Pipeline p(parse_config_text(base), 1);
    auto r = p.wave_solve();
    CHECK(r.status == exit_ok);
    CHECK(r.json["schema_version"] == report_schema_version);
    CHECK(r.json["kind"] == "wave");
    CHECK(r.json["config_hash"] == sha256_hex(base));
    CHECK(std::abs(r.json["c"].get<double>()) < 1e-8);
    CHECK(p.csv().size() == 1);
    CHECK(p.csv()[0].name == "wave.csv");
    CHECK_FALSE(r.json.contains("threads"));
}
