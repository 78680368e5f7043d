#include "uld/data.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uld/errors.hpp"
#include "uld/pgm.hpp"

namespace fs = std::filesystem;

namespace uld {

void SceneConfig::validate() const {
    if (image_h < 16 || image_w < 16) throw ConfigError("scene image size must be at least 16x16");
    if (num_landmarks < 1) throw ConfigError("num_landmarks must be >= 1");
    // Equality is the isotropic limiting case; the default family keeps the
    // tangent spread strictly dominant.
    if (!(noise_normal_sigma > 0.0) || !(noise_tangent_sigma >= noise_normal_sigma)) {
        throw ConfigError("need noise_tangent_sigma >= noise_normal_sigma > 0 (got " +
                          std::to_string(noise_tangent_sigma) + ", " +
                          std::to_string(noise_normal_sigma) + ")");
    }
    if (!(edge_blur_sigma > 0.0)) throw ConfigError("edge_blur_sigma must be positive");
    if (semi_axis_x_min > semi_axis_x_max || semi_axis_y_min > semi_axis_y_max ||
        semi_axis_x_min <= 0.0 || semi_axis_y_min <= 0.0) {
        throw ConfigError("bad semi-axis ranges");
    }
    if (margin_px < 0.0) throw ConfigError("margin_px must be non-negative");
    if (!(pixel_spacing_mm > 0.0)) throw ConfigError("pixel_spacing_mm must be positive");
}

Vec2 sample_gaussian_2d(const Covariance2x2& s, Rng& rng) {
    const CholeskyFactor c = decompose(s);
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    return {c.a * z1, c.b * z1 + c.c * z2};
}

Vec2 sample_gaussian_2d(const Covariance2x2& s, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x2d2d));
    return sample_gaussian_2d(s, rng);
}

namespace {

struct ArcDraw {
    Vec2 center;
    double ax = 0.0, ay = 0.0, rot = 0.0, t0 = 0.0;
};

Vec2 arc_point(const ArcDraw& a, double t) {
    const double px = a.ax * std::cos(t), py = a.ay * std::sin(t);
    const double cr = std::cos(a.rot), sr = std::sin(a.rot);
    return {a.center.x + cr * px - sr * py, a.center.y + sr * px + cr * py};
}

double arc_tangent_angle(const ArcDraw& a, double t) {
    const double dx = -a.ax * std::sin(t), dy = a.ay * std::cos(t);
    const double cr = std::cos(a.rot), sr = std::sin(a.rot);
    return std::atan2(sr * dx + cr * dy, cr * dx - sr * dy);
}

}  // namespace

Sample generate_sample(const SceneConfig& cfg, std::uint64_t seed) {
    return generate_sample(cfg, seed, nullptr);
}

Sample generate_sample(const SceneConfig& cfg, std::uint64_t seed, ArcGeometry* geometry) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x5a5a));
    const int H = cfg.image_h, W = cfg.image_w;
    const int n = cfg.num_landmarks;

    ArcDraw arc;
    std::vector<double> params(static_cast<std::size_t>(n));
    std::vector<Vec2> points(static_cast<std::size_t>(n));
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        arc.center = {0.5 * W + rng.uniform(-cfg.center_jitter_px, cfg.center_jitter_px),
                      0.5 * H + rng.uniform(-cfg.center_jitter_px, cfg.center_jitter_px)};
        arc.ax = rng.uniform(cfg.semi_axis_x_min, cfg.semi_axis_x_max);
        arc.ay = rng.uniform(cfg.semi_axis_y_min, cfg.semi_axis_y_max);
        arc.rot = rng.uniform(-cfg.rotation_max_rad, cfg.rotation_max_rad);
        arc.t0 = cfg.arc_start_rad + rng.uniform(-cfg.phase_jitter_rad, cfg.phase_jitter_rad);

        placed = true;
        for (int i = 0; i < n; ++i) {
            const double t =
                n == 1 ? arc.t0 + 0.5 * cfg.arc_span_rad
                       : arc.t0 + cfg.arc_span_rad * static_cast<double>(i) / (n - 1);
            params[static_cast<std::size_t>(i)] = t;
            points[static_cast<std::size_t>(i)] = arc_point(arc, t);
            const Vec2& pt = points[static_cast<std::size_t>(i)];
            if (pt.x < cfg.margin_px || pt.x > W - cfg.margin_px || pt.y < cfg.margin_px ||
                pt.y > H - cfg.margin_px) {
                placed = false;
                break;
            }
        }
    }
    if (!placed) {
        throw ConfigError("could not place " + std::to_string(n) +
                          " landmarks with margin " + std::to_string(cfg.margin_px) +
                          " px inside " + std::to_string(W) + "x" + std::to_string(H));
    }

    Sample s;
    s.seed = seed;
    s.gt_landmarks = points;
    s.image = Tensor::zeros({1, H, W});

    // Blurred interior: intensity follows an erf profile of the signed
    // distance to the ellipse boundary (first-order distance estimate from
    // the implicit function).
    const double inv_blur = 1.0 / (cfg.edge_blur_sigma * std::sqrt(2.0));
    const double cr = std::cos(arc.rot), sr = std::sin(arc.rot);
    std::size_t idx = 0;
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c, ++idx) {
            const double gx = (c + 0.5) - arc.center.x;
            const double gy = (r + 0.5) - arc.center.y;
            const double qx = cr * gx + sr * gy;   // into the ellipse frame
            const double qy = -sr * gx + cr * gy;
            const double rx = qx / arc.ax, ry = qy / arc.ay;
            const double rho = std::sqrt(rx * rx + ry * ry);
            double dist;
            if (rho < 1e-9) {
                dist = -std::min(arc.ax, arc.ay);
            } else {
                const double gnorm =
                    std::sqrt(rx * rx / (arc.ax * arc.ax) + ry * ry / (arc.ay * arc.ay)) / rho;
                dist = (rho - 1.0) / gnorm;  // positive outside
            }
            double v = cfg.outside_level +
                       (cfg.inside_level - cfg.outside_level) * 0.5 * std::erfc(dist * inv_blur);
            v += cfg.background_noise * rng.uniform(-1.0, 1.0);
            s.image.v[idx] = std::clamp(v, 0.0, 1.0);
        }
    }

    s.annotation.resize(static_cast<std::size_t>(n));
    s.true_cov.resize(static_cast<std::size_t>(n));
    std::vector<double> angles(static_cast<std::size_t>(n));
    const double st2 = cfg.noise_tangent_sigma * cfg.noise_tangent_sigma;
    const double sn2 = cfg.noise_normal_sigma * cfg.noise_normal_sigma;
    for (int i = 0; i < n; ++i) {
        const double theta = arc_tangent_angle(arc, params[static_cast<std::size_t>(i)]);
        angles[static_cast<std::size_t>(i)] = theta;
        const double ct = std::cos(theta), stn = std::sin(theta);
        Covariance2x2 cov;
        cov.sxx = st2 * ct * ct + sn2 * stn * stn;
        cov.syy = st2 * stn * stn + sn2 * ct * ct;
        cov.sxy = (st2 - sn2) * ct * stn;
        s.true_cov[static_cast<std::size_t>(i)] = cov;
        s.annotation[static_cast<std::size_t>(i)] =
            s.gt_landmarks[static_cast<std::size_t>(i)] + sample_gaussian_2d(cov, rng);
    }

    if (geometry) {
        geometry->center = arc.center;
        geometry->semi_x = arc.ax;
        geometry->semi_y = arc.ay;
        geometry->rotation = arc.rot;
        geometry->params = params;
        geometry->tangent_angles = angles;
    }
    return s;
}

Dataset generate_dataset(const SceneConfig& cfg, int count, std::uint64_t master_seed) {
    cfg.validate();
    if (count < 0) throw ConfigError("sample count must be non-negative");
    Dataset ds;
    ds.image_h = cfg.image_h;
    ds.image_w = cfg.image_w;
    ds.num_landmarks = cfg.num_landmarks;
    ds.pixel_spacing_mm = cfg.pixel_spacing_mm;
    ds.samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        ds.samples.push_back(generate_sample(cfg, derive_seed(master_seed, static_cast<std::uint64_t>(i))));
    }
    return ds;
}

namespace {

std::string sample_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05d", i);
    return buf;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::vector<double>>& rows) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) f << ",";
            f << fmt6(row[i]);
        }
        f << "\n";
    }
    if (!f) throw IoError("write failure: " + path);
}

std::vector<std::vector<double>> read_csv(const std::string& path, std::size_t cols) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(cell, &pos));
                if (pos != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw IoError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
        }
        if (row.size() != cols) {
            throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(cols) + " columns, got " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());

    nlohmann::json manifest;
    manifest["format"] = 1;
    manifest["image_size"] = {ds.image_h, ds.image_w};
    manifest["num_landmarks"] = ds.num_landmarks;
    manifest["pixel_spacing_mm"] = ds.pixel_spacing_mm;
    nlohmann::json samples = nlohmann::json::array();

    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        const std::string name = sample_name(static_cast<int>(i));
        samples.push_back({{"name", name}, {"seed", s.seed}});

        write_pgm16((fs::path(dir) / (name + ".pgm")).string(),
                    quantize_unit(s.image.v, ds.image_w, ds.image_h));

        std::vector<std::vector<double>> gt, ann, cov;
        for (int k = 0; k < ds.num_landmarks; ++k) {
            gt.push_back({s.gt_landmarks[static_cast<std::size_t>(k)].x, s.gt_landmarks[static_cast<std::size_t>(k)].y});
            ann.push_back({s.annotation[static_cast<std::size_t>(k)].x, s.annotation[static_cast<std::size_t>(k)].y});
        }
        write_csv((fs::path(dir) / (name + "_gt.csv")).string(), gt);
        write_csv((fs::path(dir) / (name + "_ann.csv")).string(), ann);
        if (!s.true_cov.empty()) {
            for (int k = 0; k < ds.num_landmarks; ++k) {
                const Covariance2x2& c = s.true_cov[static_cast<std::size_t>(k)];
                cov.push_back({c.sxx, c.sxy, c.syy});
            }
            write_csv((fs::path(dir) / (name + "_cov.csv")).string(), cov);
        }
    }
    manifest["samples"] = samples;

    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
    if (!f) throw IoError("write failure on manifest in " + dir);
}

Dataset read_dataset(const std::string& dir) {
    const std::string mpath = (fs::path(dir) / "manifest.json").string();
    std::ifstream f(mpath);
    if (!f) throw IoError("cannot open: " + mpath);
    nlohmann::json manifest;
    try {
        f >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(mpath + ": invalid JSON: " + e.what());
    }

    Dataset ds;
    try {
        ds.image_h = manifest.at("image_size").at(0).get<int>();
        ds.image_w = manifest.at("image_size").at(1).get<int>();
        ds.num_landmarks = manifest.at("num_landmarks").get<int>();
        ds.pixel_spacing_mm = manifest.at("pixel_spacing_mm").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(mpath + ": missing or malformed field: " + e.what());
    }

    for (const auto& entry : manifest.at("samples")) {
        const std::string name = entry.at("name").get<std::string>();
        Sample s;
        s.seed = entry.value("seed", 0ull);

        const Pgm16 img = read_pgm16((fs::path(dir) / (name + ".pgm")).string());
        if (img.width != ds.image_w || img.height != ds.image_h) {
            throw IoError(name + ".pgm size " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " does not match manifest");
        }
        s.image.shape = {1, ds.image_h, ds.image_w};
        s.image.v = dequantize_unit(img);

        auto to_vecs = [&](const std::string& suffix) {
            const auto rows = read_csv((fs::path(dir) / (name + suffix)).string(), 2);
            if (rows.size() != static_cast<std::size_t>(ds.num_landmarks)) {
                throw IoError(name + suffix + ": expected " + std::to_string(ds.num_landmarks) +
                              " rows, got " + std::to_string(rows.size()));
            }
            std::vector<Vec2> out;
            for (const auto& r : rows) out.push_back({r[0], r[1]});
            return out;
        };
        s.gt_landmarks = to_vecs("_gt.csv");
        s.annotation = to_vecs("_ann.csv");

        const fs::path cov_path = fs::path(dir) / (name + "_cov.csv");
        if (fs::exists(cov_path)) {
            const auto rows = read_csv(cov_path.string(), 3);
            if (rows.size() != static_cast<std::size_t>(ds.num_landmarks)) {
                throw IoError(name + "_cov.csv: expected " + std::to_string(ds.num_landmarks) +
                              " rows, got " + std::to_string(rows.size()));
            }
            for (const auto& r : rows) s.true_cov.push_back({r[0], r[1], r[2]});
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace uld
