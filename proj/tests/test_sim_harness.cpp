#include "bias_obs/plots.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

using namespace bias_obs;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("bias_obs_harness_" + name);
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Short, coarse cap run.
SimConfig small_run() {
    SimConfig c;
    c.grid.width = 48;
    c.grid.height = 36;
    c.grid.rate = 21.0;
    c.trajectory.duration = 0.5;
    return parse_config_string(serialize(c));
}

} // namespace

TEST(Config, DefaultsParseFromEmptyText) {
    EXPECT_TRUE(parse_config_string("") == SimConfig{});
    EXPECT_TRUE(parse_config_string("# only a comment\n\n   \n") == SimConfig{});
}

TEST(Config, ReadsKeysWithCommentsAndWhitespace) {
    const SimConfig c = parse_config_string("grid.width = 64   # pixels\n"
                                            "  bias.p_v=1 2 3\n"
                                            "trajectory.v_x = 0.2 0.1 0; 0.05 0.3 1.5\n"
                                            "run.observer = sphere\n"
                                            "noise.seed = 18446744073709551615\n");
    EXPECT_EQ(c.grid.width, 64u);
    EXPECT_EQ(c.bias.p_v, Vec3(1, 2, 3));
    ASSERT_EQ(c.trajectory.v[0].size(), 2u);
    EXPECT_EQ(c.trajectory.v[0][1].phase, 1.5);
    EXPECT_EQ(c.run.observer, "sphere");
    EXPECT_EQ(c.noise.seed, 18446744073709551615ull);
    EXPECT_EQ(c.trajectory.rate, c.grid.rate);
}

TEST(Config, RejectsBadInputWithTheLineNumber) {
    auto message = [](const std::string& text) {
        try {
            parse_config_string(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    EXPECT_NE(message("\n\ngrid.widht = 3\n").find(":3:"), std::string::npos);
    EXPECT_NE(message("grid.width 64\n").find(":1:"), std::string::npos);
    EXPECT_NE(message("grid.width = 6.5\n"), "accepted");
    EXPECT_NE(message("bias.p_v = 1 2\n"), "accepted");
    EXPECT_NE(message("grid.rate = fast\n"), "accepted");
    EXPECT_NE(message("run.observer = disk\n"), "accepted");
    EXPECT_NE(message("gains.k_y = 0\n"), "accepted");
    EXPECT_NE(message("window.k1 = 0.05\n"), "accepted");
    EXPECT_NE(message("scene.amplitude = 200\n"), "accepted");
    EXPECT_THROW(load_config("/nonexistent/bias_obs.cfg"), BadConfig);
}

TEST(Config, SerializeRoundTripsExactly) {
    SimConfig a;
    a.scene.type = "sphere";
    a.scene.amplitude = 0.1 + 0.2;
    a.bias.p_w = Vec3(1.0 / 3.0, -2e-17, 5e300);
    a.trajectory.w[2] = {{0.1, 0.7, -1.0 / 7.0}};
    a.run.output = "results/run 1";
    const SimConfig b = parse_config_string(serialize(a));
    EXPECT_TRUE(a == b);
    EXPECT_EQ(b.bias.p_w, a.bias.p_w);
    EXPECT_EQ(b.scene.amplitude, a.scene.amplitude);
    EXPECT_EQ(b.run.output, "results/run 1");
}

TEST(Diagnostics, HeaderAndRowShape) {
    const auto dir = scratch("shape");
    SimConfig c = small_run();
    const RunReport r = run_experiment(c, {dir, {}});
    std::ifstream in(r.csv);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, kCsvHeader);
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), 17);
    EXPECT_EQ(r.rows.size(), config_trajectory(c).frame_count());
    EXPECT_EQ(r.rows.front().t, 0.0);
    EXPECT_NEAR(r.rows.back().t, 10.0 / 21.0, 1e-12);
    EXPECT_TRUE(std::filesystem::exists(dir / "summary.txt"));
}

TEST(Diagnostics, RunsAreByteIdentical) {
    SimConfig c = small_run();
    c.noise = {1.0, 0.01, 0.05, 0.01, 42};
    const auto a = scratch("det_a"), b = scratch("det_b");
    run_experiment(c, {a, {}});
    run_experiment(c, {b, {}});
    const std::string ca = slurp(a / "diagnostics.csv");
    EXPECT_GT(ca.size(), 100u);
    EXPECT_EQ(ca, slurp(b / "diagnostics.csv"));
}

TEST(Diagnostics, SummaryIsRecomputableFromTheCsv) {
    const auto dir = scratch("recompute");
    SimConfig c = small_run();
    const RunReport r = run_experiment(c, {dir, {}});
    const RunSummary s = summarize(read_diagnostics(r.csv), c.gains);
    EXPECT_NEAR(s.mean_pve_norm, r.summary.mean_pve_norm, 1e-8 * (1.0 + r.summary.mean_pve_norm));
    EXPECT_NEAR(s.mean_pwe_norm, r.summary.mean_pwe_norm, 1e-8 * (1.0 + r.summary.mean_pwe_norm));
    EXPECT_NEAR(s.V0, r.summary.V0, 1e-8 * r.summary.V0);
    EXPECT_NEAR(s.L, r.summary.L, 1e-8 * (1.0 + r.summary.L));
    EXPECT_EQ(s.rows, r.summary.rows);
}

TEST(Diagnostics, ZeroBiasStaticCameraStaysPut) {
    for (const char* obs : {"cap", "sphere"}) {
        SimConfig c = small_run();
        c.run.observer = obs;
        c.grid.n_theta = 16;
        c.trajectory.v = {};
        c.trajectory.w = {};
        c.bias = {};
        const RunReport r = run_experiment(c);
        for (const auto& row : r.rows) {
            EXPECT_EQ(row.pvh, Vec3::Zero()) << obs;
            EXPECT_EQ(row.pwh, Vec3::Zero()) << obs;
        }
    }
}

TEST(Diagnostics, FinerTimeStepChangesErrorsLittle) {
    SimConfig c = small_run();
    c.trajectory.duration = 1.0;
    const RunReport a = run_experiment(c);
    c.grid.rate *= 2.0;
    const RunReport b = run_experiment(c);
    const double ea = a.rows.back().pve.norm(), eb = b.rows.back().pve.norm();
    EXPECT_LT(std::abs(ea - eb), 0.25 * ea);
}

TEST(Plots, MissingOrEmptyCsvThrows) {
    const auto dir = scratch("plots_missing");
    EXPECT_THROW(emit_plots(dir / "diagnostics.csv"), MissingCSV);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "empty.csv") << "";
    EXPECT_THROW(emit_plots(dir / "empty.csv"), MissingCSV);
    std::ofstream(dir / "header_only.csv") << kCsvHeader << '\n';
    EXPECT_THROW(emit_plots(dir / "header_only.csv"), MissingCSV);
    std::ofstream(dir / "wrong.csv") << "a,b\n1,2\n";
    EXPECT_THROW(emit_plots(dir / "wrong.csv"), MissingCSV);
}

TEST(Plots, ThreeRowsGiveThreePointLines) {
    const auto dir = scratch("plots_three");
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "diagnostics.csv");
        out << kCsvHeader << '\n';
        for (int k = 0; k < 3; ++k) {
            DiagnosticRow r;
            r.t = 0.5 * k;
            r.pve = Vec3(1.0 - k, 0.5, -0.25 * k);
            r.pwe = Vec3(0.01 * k, 0, 0);
            out << csv_line(r) << '\n';
        }
    }
    const PlotFiles p = emit_plots(dir / "diagnostics.csv");
    for (const auto& f : {p.translation, p.rotation}) {
        const std::string svg = slurp(f);
        ASSERT_FALSE(svg.empty());
        EXPECT_NE(svg.find("version=\"1.1\""), std::string::npos);
        EXPECT_NE(svg.find("t (s)"), std::string::npos);
        std::size_t lines = 0, pos = 0;
        while ((pos = svg.find("<polyline", pos)) != std::string::npos) {
            const auto b = svg.find("points=\"", pos) + 8;
            const auto e = svg.find('"', b);
            const std::string pts = svg.substr(b, e - b);
            EXPECT_EQ(std::count(pts.begin(), pts.end(), ','), 3);
            ++lines;
            pos = e;
        }
        EXPECT_EQ(lines, 3u);
    }
    EXPECT_NE(slurp(p.translation).find("m/s"), std::string::npos);
    EXPECT_NE(slurp(p.rotation).find("rad/s"), std::string::npos);
}

TEST(Render, FilesAreByteIdenticalAcrossRuns) {
    SimConfig c = small_run();
    c.trajectory.duration = 0.1;
    c.noise = {2.0, 0.01, 0, 0, 7};
    const auto a = scratch("render_a"), b = scratch("render_b");
    const std::size_t n = render_sequence(c, a);
    EXPECT_EQ(render_sequence(c, b), n);
    for (std::size_t k = 0; k < n; ++k) {
        char y[32], d[32];
        std::snprintf(y, sizeof y, "y_%05zu.pgm", k);
        std::snprintf(d, sizeof d, "D_%05zu.pfm", k);
        EXPECT_EQ(slurp(a / y), slurp(b / y));
        EXPECT_EQ(slurp(a / d), slurp(b / d));
        EXPECT_FALSE(slurp(a / y).empty());
    }
    const ScalarField D = read_pfm(a / "D_00000.pfm");
    EXPECT_EQ(D.width, c.grid.width);
}

TEST(Simulate, TruthCsvHasOneRowPerFrame) {
    SimConfig c = small_run();
    const auto dir = scratch("truth");
    const std::size_t n = simulate_truth(c, dir);
    std::ifstream in(dir / "truth.csv");
    std::string line;
    std::size_t rows = 0;
    std::getline(in, line);
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, n);
}
