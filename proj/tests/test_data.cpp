#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_util.hpp"
#include "uld/data.hpp"
#include "uld/errors.hpp"
#include "uld/pgm.hpp"

using namespace uld;
namespace fs = std::filesystem;

namespace {

SceneConfig small_scene() {
    SceneConfig cfg;
    cfg.image_h = 32;
    cfg.image_w = 32;
    cfg.num_landmarks = 3;
    cfg.center_jitter_px = 2.0;
    cfg.semi_axis_x_min = 6.0;
    cfg.semi_axis_x_max = 8.0;
    cfg.semi_axis_y_min = 5.0;
    cfg.semi_axis_y_max = 7.0;
    cfg.noise_tangent_sigma = 2.0;
    cfg.noise_normal_sigma = 0.8;
    return cfg;
}

SceneConfig frozen_scene() {
    SceneConfig cfg = small_scene();
    cfg.center_jitter_px = 0.0;
    cfg.semi_axis_x_max = cfg.semi_axis_x_min;
    cfg.semi_axis_y_max = cfg.semi_axis_y_min;
    cfg.rotation_max_rad = 0.0;
    cfg.phase_jitter_rad = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("generate_sample is deterministic per seed") {
    const SceneConfig cfg = small_scene();
    const Sample a = generate_sample(cfg, 77);
    const Sample b = generate_sample(cfg, 77);
    const Sample c = generate_sample(cfg, 78);
    CHECK(a.image.v == b.image.v);
    bool differs = a.image.v != c.image.v;
    for (std::size_t i = 0; i < a.gt_landmarks.size(); ++i) {
        CHECK(a.gt_landmarks[i].x == b.gt_landmarks[i].x);
        CHECK(a.annotation[i].y == b.annotation[i].y);
    }
    CHECK(differs);
}

TEST_CASE("landmarks respect the margin and covariances are positive definite") {
    const SceneConfig cfg = small_scene();
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const Sample s = generate_sample(cfg, seed);
        for (const Vec2& p : s.gt_landmarks) {
            CHECK(p.x >= cfg.margin_px);
            CHECK(p.x <= cfg.image_w - cfg.margin_px);
            CHECK(p.y >= cfg.margin_px);
            CHECK(p.y <= cfg.image_h - cfg.margin_px);
        }
        for (const Covariance2x2& c : s.true_cov) CHECK(c.det() > 0.0);
        for (double v : s.image.v) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("impossible margins raise a config error") {
    SceneConfig cfg = small_scene();
    cfg.margin_px = 15.9;  // leaves almost nothing inside a 32px image
    CHECK_THROWS_AS(generate_sample(cfg, 1), ConfigError);
}

TEST_CASE("equal sigmas give isotropic noise covariance") {
    SceneConfig cfg = small_scene();
    cfg.noise_tangent_sigma = 1.5;
    cfg.noise_normal_sigma = 1.5;
    const Sample s = generate_sample(cfg, 5);
    for (const Covariance2x2& c : s.true_cov) {
        CHECK(c.sxx == doctest::Approx(2.25).epsilon(1e-12));
        CHECK(c.syy == doctest::Approx(2.25).epsilon(1e-12));
        CHECK(c.sxy == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("noise covariance dominant axis is parallel to the arc tangent") {
    const SceneConfig cfg = small_scene();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ArcGeometry geo;
        const Sample s = generate_sample(cfg, seed, &geo);
        for (std::size_t i = 0; i < s.true_cov.size(); ++i) {
            const EllipseParams e = ellipse_from_covariance(s.true_cov[i], {0, 0}, 1.0);
            // fold both angles into (-pi/2, pi/2]
            double tangent = std::atan2(std::sin(geo.tangent_angles[i]), std::cos(geo.tangent_angles[i]));
            if (tangent > 1.5707963267948966) tangent -= 3.14159265358979323846;
            if (tangent <= -1.5707963267948966) tangent += 3.14159265358979323846;
            double d = std::fabs(e.angle - tangent);
            d = std::min(d, 3.14159265358979323846 - d);
            CHECK(d < 1e-6);
        }
    }
}

TEST_CASE("annotation noise matches the generator covariance over many draws") {
    // Frozen geometry: every sample shares the same landmarks and the same
    // noise covariance, so the draws pool.
    const SceneConfig cfg = frozen_scene();
    const int M = 10000;
    std::vector<std::vector<Vec2>> draws(static_cast<std::size_t>(cfg.num_landmarks));
    Sample first = generate_sample(cfg, 0);
    for (int m = 0; m < M; ++m) {
        const Sample s = generate_sample(cfg, static_cast<std::uint64_t>(m));
        for (int i = 0; i < cfg.num_landmarks; ++i) {
            draws[static_cast<std::size_t>(i)].push_back(
                s.annotation[static_cast<std::size_t>(i)] - s.gt_landmarks[static_cast<std::size_t>(i)]);
        }
    }
    const double st = cfg.noise_tangent_sigma;
    for (int i = 0; i < cfg.num_landmarks; ++i) {
        Covariance2x2 emp{0, 0, 0};
        Vec2 mean{0, 0};
        for (const Vec2& d : draws[static_cast<std::size_t>(i)]) {
            emp.sxx += d.x * d.x / M;
            emp.sxy += d.x * d.y / M;
            emp.syy += d.y * d.y / M;
            mean.x += d.x / M;
            mean.y += d.y / M;
        }
        const Covariance2x2& truth = first.true_cov[static_cast<std::size_t>(i)];
        CHECK(test::frobenius_diff(emp, truth) / test::frobenius(truth) < 0.05);
        // unbiased
        CHECK(std::sqrt(mean.x * mean.x + mean.y * mean.y) < 0.05 * st);
    }
}

TEST_CASE("sample_gaussian_2d second moments") {
    Rng rng(55);
    SUBCASE("identity covariance") {
        double vx = 0.0, vy = 0.0;
        const int M = 100000;
        for (int i = 0; i < M; ++i) {
            const Vec2 d = sample_gaussian_2d({1, 0, 1}, rng);
            vx += d.x * d.x / M;
            vy += d.y * d.y / M;
        }
        CHECK(std::fabs(vx - 1.0) < 0.03);
        CHECK(std::fabs(vy - 1.0) < 0.03);
    }
    SUBCASE("full covariance") {
        const Covariance2x2 s{4, 2, 5};
        Covariance2x2 emp{0, 0, 0};
        const int M = 100000;
        for (int i = 0; i < M; ++i) {
            const Vec2 d = sample_gaussian_2d(s, rng);
            emp.sxx += d.x * d.x / M;
            emp.sxy += d.x * d.y / M;
            emp.syy += d.y * d.y / M;
        }
        CHECK(test::frobenius_diff(emp, s) / test::frobenius(s) < 0.05);
    }
    SUBCASE("near-degenerate covariance collapses to zero draws") {
        const Covariance2x2 tiny{1e-12, 0.0, 1e-12};
        for (int i = 0; i < 10; ++i) {
            const Vec2 d = sample_gaussian_2d(tiny, rng);
            CHECK(std::fabs(d.x) < 1e-4);
            CHECK(std::fabs(d.y) < 1e-4);
        }
    }
}

TEST_CASE("dataset round trip preserves declared precision") {
    const SceneConfig cfg = small_scene();
    Dataset ds = generate_dataset(cfg, 3, 9);
    const fs::path dir = fs::temp_directory_path() / "uld_ds_test";
    fs::remove_all(dir);
    write_dataset(ds, dir.string());
    const Dataset back = read_dataset(dir.string());

    REQUIRE(back.samples.size() == 3);
    CHECK(back.num_landmarks == cfg.num_landmarks);
    CHECK(back.pixel_spacing_mm == doctest::Approx(cfg.pixel_spacing_mm));
    for (std::size_t s = 0; s < 3; ++s) {
        for (int i = 0; i < cfg.num_landmarks; ++i) {
            CHECK(std::fabs(back.samples[s].gt_landmarks[static_cast<std::size_t>(i)].x -
                            ds.samples[s].gt_landmarks[static_cast<std::size_t>(i)].x) <= 5e-7);
            CHECK(std::fabs(back.samples[s].annotation[static_cast<std::size_t>(i)].y -
                            ds.samples[s].annotation[static_cast<std::size_t>(i)].y) <= 5e-7);
            CHECK(std::fabs(back.samples[s].true_cov[static_cast<std::size_t>(i)].sxy -
                            ds.samples[s].true_cov[static_cast<std::size_t>(i)].sxy) <= 5e-7);
        }
        for (std::size_t p = 0; p < ds.samples[s].image.v.size(); ++p) {
            CHECK(std::fabs(back.samples[s].image.v[p] - ds.samples[s].image.v[p]) <= 1.0 / 65535.0);
        }
    }

    // second cycle is exact (idempotent at the declared precision)
    const fs::path dir2 = fs::temp_directory_path() / "uld_ds_test2";
    fs::remove_all(dir2);
    write_dataset(back, dir2.string());
    const Dataset back2 = read_dataset(dir2.string());
    for (std::size_t s = 0; s < 3; ++s) {
        CHECK(back2.samples[s].image.v == back.samples[s].image.v);
        for (int i = 0; i < cfg.num_landmarks; ++i) {
            CHECK(back2.samples[s].gt_landmarks[static_cast<std::size_t>(i)].x ==
                  back.samples[s].gt_landmarks[static_cast<std::size_t>(i)].x);
        }
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("empty dataset round trips") {
    Dataset ds;
    ds.image_h = 32;
    ds.image_w = 32;
    ds.num_landmarks = 4;
    const fs::path dir = fs::temp_directory_path() / "uld_ds_empty";
    fs::remove_all(dir);
    write_dataset(ds, dir.string());
    const Dataset back = read_dataset(dir.string());
    CHECK(back.samples.empty());
    CHECK(back.num_landmarks == 4);
    fs::remove_all(dir);
}

TEST_CASE("hand-written fixture parses to known values") {
    const fs::path dir = fs::temp_directory_path() / "uld_ds_fixture";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream m(dir / "manifest.json");
        m << R"({"format":1,"image_size":[2,3],"num_landmarks":1,"pixel_spacing_mm":0.25,)"
          << R"("samples":[{"name":"sample_00000","seed":5}]})";
    }
    {
        // 2x3 PGM, pixels 0, 13107, 26214, 39321, 52428, 65535
        std::ofstream p(dir / "sample_00000.pgm", std::ios::binary);
        p << "P5\n3 2\n65535\n";
        const std::uint16_t px[6] = {0, 13107, 26214, 39321, 52428, 65535};
        for (std::uint16_t v : px) {
            p.put(static_cast<char>(v >> 8));
            p.put(static_cast<char>(v & 0xff));
        }
    }
    {
        std::ofstream g(dir / "sample_00000_gt.csv");
        g << "1.500000,0.500000\n";
        std::ofstream a(dir / "sample_00000_ann.csv");
        a << "1.250000,0.750000\n";
        std::ofstream c(dir / "sample_00000_cov.csv");
        c << "4.000000,2.000000,5.000000\n";
    }
    const Dataset ds = read_dataset(dir.string());
    REQUIRE(ds.samples.size() == 1);
    CHECK(ds.pixel_spacing_mm == doctest::Approx(0.25));
    CHECK(ds.samples[0].seed == 5);
    CHECK(ds.samples[0].image.v[1] == doctest::Approx(13107.0 / 65535.0));
    CHECK(ds.samples[0].image.v[5] == doctest::Approx(1.0));
    CHECK(ds.samples[0].gt_landmarks[0].x == doctest::Approx(1.5));
    CHECK(ds.samples[0].annotation[0].y == doctest::Approx(0.75));
    CHECK(ds.samples[0].true_cov[0].syy == doctest::Approx(5.0));
    fs::remove_all(dir);
}

TEST_CASE("malformed files carry diagnostics") {
    const fs::path dir = fs::temp_directory_path() / "uld_ds_bad";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream m(dir / "manifest.json");
        m << R"({"format":1,"image_size":[2,3],"num_landmarks":1,"pixel_spacing_mm":0.25,)"
          << R"("samples":[{"name":"sample_00000","seed":5}]})";
        std::ofstream p(dir / "sample_00000.pgm", std::ios::binary);
        p << "P5\n3 2\n65535\n";
        for (int i = 0; i < 12; ++i) p.put('\0');
        std::ofstream g(dir / "sample_00000_gt.csv");
        g << "1.5,oops\n";
        std::ofstream a(dir / "sample_00000_ann.csv");
        a << "1.0,1.0\n";
    }
    try {
        read_dataset(dir.string());
        FAIL("expected IoError");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":1:") != std::string::npos);   // line number
        CHECK(msg.find("oops") != std::string::npos);
    }

    // truncated PGM
    {
        std::ofstream g(dir / "sample_00000_gt.csv");
        g << "1.5,0.5\n";
        std::ofstream p(dir / "sample_00000.pgm", std::ios::binary);
        p << "P5\n3 2\n65535\n";
        p.put('\0');
    }
    try {
        read_dataset(dir.string());
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("pgm round trip and header validation") {
    const fs::path dir = fs::temp_directory_path() / "uld_pgm";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Pgm16 img;
    img.width = 5;
    img.height = 3;
    for (int i = 0; i < 15; ++i) img.pixels.push_back(static_cast<std::uint16_t>(i * 4000));
    const std::string path = (dir / "t.pgm").string();
    write_pgm16(path, img);
    const Pgm16 back = read_pgm16(path);
    CHECK(back.width == 5);
    CHECK(back.height == 3);
    CHECK(back.pixels == img.pixels);

    {
        std::ofstream f(path, std::ios::binary);
        f << "P2\n5 3\n65535\n";
    }
    CHECK_THROWS_AS(read_pgm16(path), IoError);
    fs::remove_all(dir);
}
