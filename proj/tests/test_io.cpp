#include "catch_amalgamated.hpp"

#include <vpb/io.hpp>
#include <vpb/spectral.hpp>

#include <filesystem>
#include <fstream>

using namespace vpb;

namespace {

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("vpb_io_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("config round trip", "[io]")
{
    LabConfig c;
    c.epsilon = 0.1 + 1e-17 * 3; // not representable in short decimal
    c.eps_list = {1.0 / 3.0, 0.1, 2e-5};
    c.seed = 18446744073709551615ull;
    c.nonlinear = false;
    c.initial = "kinetic_perturbed";
    c.dt = 2.5e-4;
    std::string text = serialize_config(c);
    LabConfig back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
    CHECK(parse_config(serialize_config(LabConfig{})) == LabConfig{});
}

TEST_CASE("config parsing errors name the field", "[io]")
{
    auto field_of = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ValidationError& e) {
            return e.field();
        }
        return std::string("none");
    };
    CHECK(field_of("epsilon = abc") == "epsilon");
    CHECK(field_of("colour = blue") == "colour");
    CHECK(field_of("modes = 4\nmodes = 5") == "modes");
    CHECK(field_of("modes 4") == "config");
    CHECK(field_of("nonlinear = maybe") == "nonlinear");
    CHECK(field_of("# comment only\n\n  dim = 2  # trailing\n") == "none");
    CHECK(parse_config("dim = 2 # trailing").dim == 2);
    CHECK_THROWS_AS(read_config_file("/nonexistent/vpb.cfg"), IoError);

    LabConfig bad;
    bad.epsilon = 0.0;
    try {
        to_simulation(bad);
        FAIL("expected validation error");
    } catch (const ValidationError& e) {
        CHECK(e.field() == "epsilon");
    }
    bad = LabConfig{};
    bad.eps_list = {0.1, 0.2};
    CHECK_THROWS_AS(to_plan(bad), ValidationError);
    CHECK_THROWS_AS(profile_defaults("huge"), ValidationError);
}

TEST_CASE("csv formatting", "[io]")
{
    CsvTable t({"a", "b", "c"});
    t.add({0.1, 3LL, std::string("x")});
    t.add({1.0 / 3.0, -1LL, std::string("y")});
    CHECK_THROWS(t.add({1.0}));
    CHECK(t.str() == "a,b,c\n0.10000000000000001,3,x\n0.33333333333333331,-1,y\n");
    for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, -2.2250738585072014e-308, 1e-300})
        CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("checksums", "[io]")
{
    CHECK(fnv1a64("") == "cbf29ce484222325");
    CHECK(fnv1a64("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a64("foobar") == "85944171f73967e8");
}

TEST_CASE("output directory bookkeeping", "[io]")
{
    auto dir = scratch("out");
    {
        OutputDir out(dir, false);
        out.write("x.csv", "a\n1\n");
        CHECK_THROWS_AS(out.write("x.csv", "again"), IoError);
        CHECK_THROWS_AS(out.write("manifest.json", "{}"), IoError);
        out.finish({{"command", "test"}});
    }
    auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m["command"] == "test");
    REQUIRE(m["files"].size() == 1);
    CHECK(m["files"][0]["fnv1a64"] == fnv1a64("a\n1\n"));
    CHECK(m["files"][0]["bytes"] == 4);
    CHECK_THROWS_AS(OutputDir(dir, false), IoError);
    CHECK_NOTHROW(OutputDir(dir, true));
    std::filesystem::remove_all(dir);
}

TEST_CASE("table schemas", "[io]")
{
    Lab lab(4);
    BranchScan scan = eigen_branches(lab.model(), 1.0, log_grid(0.01, 0.5, 4));
    CsvTable b = branch_table(1.0, scan);
    CHECK(b.header() == std::vector<std::string>{"epsilon", "s", "j", "re_lambda", "im_lambda", "fit_c_re", "fit_c_im", "residual"});
    CHECK(b.rows() == 20);

    SweepRow r;
    r.epsilon = 0.1;
    CsvTable l = limit_table({r});
    CHECK(l.header() == std::vector<std::string>{"epsilon", "ell", "time_avg_err", "integrated_err", "perp_budget", "decay_rate"});
    CHECK(l.rows() == 1);

    VpbSolver solver(lab.model(), 2, 2, 0.5, 1e-3, 0.0, false);
    KineticState s = random_state(solver, 0.1, 3);
    CsvTable st = state_table(solver.grid(), s);
    CHECK(st.rows() == solver.grid().size() * std::size_t(s.g.rows()));
    // lexicographic mode order
    std::string csv = st.str();
    CHECK(csv.substr(csv.find('\n') + 1, 7) == "-2,-2,0");
}
