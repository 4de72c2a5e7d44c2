#include "snsr/dataset.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace snsr {

using nlohmann::json;

size_t SceneDataset::train_view_count() const {
    size_t n = 0;
    for (const auto& v : views)
        if (!v.held_out) ++n;
    return n;
}

void SceneDataset::validate() const {
    if (views.empty()) throw std::invalid_argument("dataset: no views");
    for (const auto& v : views) {
        v.camera.validate();
        size_t pixels = size_t(v.camera.width) * v.camera.height;
        if (v.normals.size() != pixels * 3)
            throw std::invalid_argument("dataset: view '" + v.name + "' normal map size mismatch");
        if (v.mask.size() != pixels)
            throw std::invalid_argument("dataset: view '" + v.name + "' mask size mismatch");
        if (v.tag != "regular" && v.tag != "closeup")
            throw std::invalid_argument("dataset: view '" + v.name + "' has unknown tag '" + v.tag +
                                        "'");
    }
    if (train_view_count() == 0) throw std::invalid_argument("dataset: every view is held out");
}

namespace {

// entry/exit of the ray o + t*v with the ball |p - c| = r, in t units
std::optional<std::pair<double, double>> intersect_ball(const Vec3& o, const Vec3& v,
                                                        const Vec3& c, double r) {
    Vec3 oc = o - c;
    double a = norm_sq(v), b = dot(oc, v), d = norm_sq(oc) - r * r;
    double disc = b * b - a * d;
    if (disc <= 0.0) return std::nullopt;
    double root = std::sqrt(disc);
    return std::make_pair((-b - root) / a, (-b + root) / a);
}

}  // namespace

void compute_scale_range(SceneDataset& dataset, double near_floor) {
    // the scale axis should parameterize footprints where the surface can be,
    // not across the whole empty cube: bound the object by the visual hull's
    // impact parameters, then take footprints over each foreground ray's pass
    // through that ball
    const Vec3 center = dataset.scene_center;
    double hull_radius = 0.0;
    for (const auto& view : dataset.views) {
        if (view.held_out) continue;
        const Camera& cam = view.camera;
        double view_hull = 0.0;
#pragma omp parallel for schedule(static) reduction(max : view_hull)
        for (int row = 0; row < cam.height; ++row) {
            for (int col = 0; col < cam.width; ++col) {
                if (!view.mask_at(row, col)) continue;
                Cone cone = cast_cone(cam, row, col);
                Vec3 dir = normalized(cone.axis);
                Vec3 oc = cone.origin - center;
                double impact = norm(oc - dir * dot(oc, dir));
                view_hull = std::fmax(view_hull, impact);
            }
        }
        hull_radius = std::fmax(hull_radius, view_hull);
    }
    hull_radius = std::fmin(std::fmax(hull_radius * 1.05, 0.1), 1.0);

    double s_lo = std::numeric_limits<double>::infinity();
    double s_hi = 0.0;
    for (const auto& view : dataset.views) {
        if (view.held_out) continue;
        const Camera& cam = view.camera;
        double view_lo = std::numeric_limits<double>::infinity();
        double view_hi = 0.0;
#pragma omp parallel for schedule(static) reduction(min : view_lo) reduction(max : view_hi)
        for (int row = 0; row < cam.height; ++row) {
            for (int col = 0; col < cam.width; ++col) {
                if (!view.mask_at(row, col)) continue;
                Cone cone = cast_cone(cam, row, col);
                auto span = intersect_ball(cone.origin, cone.axis, center, hull_radius);
                if (!span) continue;
                double near = std::fmax(span->first, near_floor);
                double far = span->second;
                if (!(near < far)) continue;
                double s0 = sphere_radius(cone, near, cam.focal_world());
                double s1 = sphere_radius(cone, far, cam.focal_world());
                view_lo = std::fmin(view_lo, s0);
                view_hi = std::fmax(view_hi, s1);
            }
        }
        s_lo = std::fmin(s_lo, view_lo);
        s_hi = std::fmax(s_hi, view_hi);
    }
    if (!std::isfinite(s_lo) || !(s_hi > 0.0))
        throw std::runtime_error(
            "dataset: no foreground training ray passes the scene hull (empty masks?)");
    // a degenerate range breaks the log-spaced scale axis; widen it
    if (s_hi < s_lo * 1.05) {
        s_lo *= 0.5;
        s_hi *= 2.0;
    }
    dataset.s_min = s_lo;
    dataset.s_max = s_hi;
}

// ---------------------------------------------------------------------------
// raw float image container: magic "SNSRIMG1", u32 height, width, channels,
// float32 row-major data. All little-endian.
// ---------------------------------------------------------------------------

namespace {
constexpr char kImageMagic[8] = {'S', 'N', 'S', 'R', 'I', 'M', 'G', '1'};
}

void save_float_image(const std::string& path, const float* data, int height, int width,
                      int channels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("image: cannot open '" + path + "' for writing");
    os.write(kImageMagic, 8);
    uint32_t dims[3] = {uint32_t(height), uint32_t(width), uint32_t(channels)};
    os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    os.write(reinterpret_cast<const char*>(data),
             std::streamsize(sizeof(float) * height * width * channels));
    if (!os) throw std::runtime_error("image: write to '" + path + "' failed");
}

std::vector<float> load_float_image(const std::string& path, int& height, int& width,
                                    int& channels) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("image: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kImageMagic, 8) != 0)
        throw std::runtime_error("image: '" + path + "' is not a float image container");
    uint32_t dims[3];
    is.read(reinterpret_cast<char*>(dims), sizeof(dims));
    height = int(dims[0]);
    width = int(dims[1]);
    channels = int(dims[2]);
    std::vector<float> data(size_t(height) * width * channels);
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("image: truncated file '" + path + "'");
    return data;
}

void save_pgm(const std::string& path, const uint8_t* data, int height, int width) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("mask: cannot open '" + path + "' for writing");
    os << "P5\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(data), std::streamsize(size_t(height) * width));
    if (!os) throw std::runtime_error("mask: write to '" + path + "' failed");
}

std::vector<uint8_t> load_pgm(const std::string& path, int& height, int& width) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("mask: cannot open '" + path + "'");
    std::string magic;
    is >> magic;
    if (magic != "P5") throw std::runtime_error("mask: '" + path + "' is not a binary PGM");
    int maxval;
    is >> width >> height >> maxval;
    is.get();  // single whitespace after header
    std::vector<uint8_t> data(size_t(height) * width);
    is.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size()));
    if (!is) throw std::runtime_error("mask: truncated file '" + path + "'");
    return data;
}

// ---------------------------------------------------------------------------
// camera text format: '#' comments, then a count line, then per camera:
//   width height
//   fx 0 cx 0 fy cy 0 0 1        (3x3 intrinsics, row-major, pixels)
//   r00 r01 r02 ox r10 ... oz    (3x4 world-from-camera [R|center], row-major)
//   dx dy                        (pixel pitch, world units per pixel)
// ---------------------------------------------------------------------------

void save_cameras(const std::string& path, const std::vector<Camera>& cameras) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cameras: cannot open '" + path + "' for writing");
    os << "# camera records: width height / 3x3 intrinsics / 3x4 world-from-camera / pixel pitch\n";
    os << cameras.size() << "\n";
    char buf[512];
    for (const Camera& c : cameras) {
        os << c.width << " " << c.height << "\n";
        std::snprintf(buf, sizeof(buf), "%.17g 0 %.17g 0 %.17g %.17g 0 0 1\n", c.fx, c.cx, c.fy,
                      c.cy);
        os << buf;
        for (int r = 0; r < 3; ++r) {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g\n", c.rotation(r, 0),
                          c.rotation(r, 1), c.rotation(r, 2), c.center[r]);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", c.pitch_x, c.pitch_y);
        os << buf;
    }
    if (!os) throw std::runtime_error("cameras: write to '" + path + "' failed");
}

namespace {

double next_number(std::istream& is, const std::string& path) {
    std::string tok;
    while (is >> tok) {
        if (tok[0] == '#') {
            std::string rest;
            std::getline(is, rest);
            continue;
        }
        try {
            return std::stod(tok);
        } catch (const std::exception&) {
            throw std::runtime_error("cameras: '" + path + "': bad number '" + tok + "'");
        }
    }
    throw std::runtime_error("cameras: '" + path + "': unexpected end of file");
}

}  // namespace

std::vector<Camera> load_cameras(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cameras: cannot open '" + path + "'");
    int count = int(next_number(is, path));
    if (count < 0 || count > 100000) throw std::runtime_error("cameras: bad camera count");
    std::vector<Camera> cameras(count);
    for (Camera& c : cameras) {
        c.width = int(next_number(is, path));
        c.height = int(next_number(is, path));
        double k[9];
        for (double& v : k) v = next_number(is, path);
        c.fx = k[0];
        c.cx = k[2];
        c.fy = k[4];
        c.cy = k[5];
        if (k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0)
            throw std::runtime_error("cameras: '" + path + "': intrinsics must be axis-aligned");
        for (int r = 0; r < 3; ++r) {
            for (int col = 0; col < 3; ++col) c.rotation(r, col) = next_number(is, path);
            c.center[r] = next_number(is, path);
        }
        c.pitch_x = next_number(is, path);
        c.pitch_y = next_number(is, path);
        c.validate();
    }
    return cameras;
}

// ---------------------------------------------------------------------------
// dataset directory
// ---------------------------------------------------------------------------

void save_dataset(const SceneDataset& dataset, const std::string& dir) {
    dataset.validate();
    std::filesystem::create_directories(dir);

    std::vector<Camera> cameras;
    for (const auto& v : dataset.views) cameras.push_back(v.camera);
    save_cameras(dir + "/cameras.txt", cameras);

    json views = json::array();
    for (const auto& v : dataset.views) {
        save_float_image(dir + "/" + v.name + "_normal.f32", v.normals.data(), v.camera.height,
                         v.camera.width, 3);
        save_pgm(dir + "/" + v.name + "_mask.pgm", v.mask.data(), v.camera.height, v.camera.width);
        views.push_back({{"name", v.name},
                         {"normal", v.name + "_normal.f32"},
                         {"mask", v.name + "_mask.pgm"},
                         {"tag", v.tag},
                         {"split", v.held_out ? "eval" : "train"}});
    }
    json manifest = {{"format_version", 1},
                     {"shape", dataset.shape},
                     {"scene_center", {dataset.scene_center.x, dataset.scene_center.y,
                                       dataset.scene_center.z}},
                     {"scene_scale", dataset.scene_scale},
                     {"views", views}};
    if (!dataset.ground_truth_mesh.empty()) manifest["ground_truth_mesh"] = dataset.ground_truth_mesh;
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw std::runtime_error("dataset: cannot write manifest in '" + dir + "'");
    os << manifest.dump(2) << "\n";
}

SceneDataset load_dataset(const std::string& dir) {
    std::ifstream ms(dir + "/manifest.json");
    if (!ms) throw std::runtime_error("dataset: cannot open '" + dir + "/manifest.json'");
    json manifest;
    try {
        ms >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset: malformed manifest in '" + dir + "': " + e.what());
    }
    if (!manifest.contains("views") || !manifest["views"].is_array() || manifest["views"].empty())
        throw std::runtime_error("dataset: manifest in '" + dir + "' lists no views");

    SceneDataset dataset;
    dataset.shape = manifest.value("shape", "");
    dataset.scene_scale = manifest.value("scene_scale", 1.0);
    if (manifest.contains("scene_center")) {
        auto c = manifest["scene_center"];
        dataset.scene_center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
    }
    dataset.ground_truth_mesh = manifest.value("ground_truth_mesh", "");

    std::vector<Camera> cameras = load_cameras(dir + "/cameras.txt");
    if (cameras.size() != manifest["views"].size())
        throw std::runtime_error("dataset: camera count does not match view count in '" + dir + "'");

    size_t index = 0;
    for (const auto& jv : manifest["views"]) {
        View view;
        view.camera = cameras[index++];
        view.name = jv.value("name", "");
        view.tag = jv.value("tag", "regular");
        view.held_out = jv.value("split", "train") == "eval";
        const std::string normal_file = jv.value("normal", "");
        const std::string mask_file = jv.value("mask", "");
        if (normal_file.empty() || mask_file.empty())
            throw std::runtime_error("dataset: view '" + view.name + "' is missing file entries");
        int h, w, c;
        view.normals = load_float_image(dir + "/" + normal_file, h, w, c);
        if (h != view.camera.height || w != view.camera.width || c != 3)
            throw std::runtime_error("dataset: normal map shape mismatch for view '" + view.name +
                                     "'");
        int mh, mw;
        view.mask = load_pgm(dir + "/" + mask_file, mh, mw);
        if (mh != h || mw != w)
            throw std::runtime_error("dataset: mask shape mismatch for view '" + view.name + "'");
        dataset.views.push_back(std::move(view));
    }
    dataset.validate();
    compute_scale_range(dataset);
    return dataset;
}

}  // namespace snsr
