#include "pcad/data.hpp"

#include "pcad/common.hpp"
#include "pcad/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace pcad {

std::vector<std::string> LabeledDataset::class_names() const {
    std::set<std::string> names;
    for (const auto& r : records) names.insert(r.label);
    return {names.begin(), names.end()};
}

namespace {

Eigen::Matrix3d random_rotation(Rng& rng) {
    // uniform rotation from a normalized Gaussian quaternion
    Eigen::Vector4d q;
    for (int i = 0; i < 4; ++i) q[i] = rng.normal();
    q.normalize();
    Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
    return quat.toRotationMatrix();
}

Eigen::Vector3d sphere_dir(Rng& rng) {
    double z = rng.uniform(-1.0, 1.0);
    double t = rng.uniform(0.0, 2.0 * M_PI);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(t), r * std::sin(t), z};
}

// Base surfaces live in [-1, 1]-ish model units; each sampler draws one
// point uniformly by surface area (arc length for the helix).
PointCloud sample_shape(const std::string& cls, int n, Rng& rng) {
    PointCloud c;
    c.pts.reserve(n);
    if (cls == "sphere") {
        // antithetic pairs keep the centroid at the origin, so normalize()
        // preserves unit radii
        for (int i = 0; i < n / 2; ++i) {
            Eigen::Vector3d u = sphere_dir(rng);
            c.pts.push_back(u);
            c.pts.push_back(-u);
        }
        if (n % 2) c.pts.push_back(Eigen::Vector3d(0, 0, 1));
    } else if (cls == "cube") {
        for (int i = 0; i < n; ++i) {
            int face = static_cast<int>(rng.below(6));
            double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
            double s = (face % 2 == 0) ? 1.0 : -1.0;
            if (face < 2) c.pts.emplace_back(s, a, b);
            else if (face < 4) c.pts.emplace_back(a, s, b);
            else c.pts.emplace_back(a, b, s);
        }
    } else if (cls == "cylinder") {
        const double r = 0.7, h = 2.0;
        const double lateral = 2.0 * M_PI * r * h, caps = 2.0 * M_PI * r * r;
        for (int i = 0; i < n; ++i) {
            double t = rng.uniform(0.0, 2.0 * M_PI);
            if (rng.uniform() * (lateral + caps) < lateral) {
                c.pts.emplace_back(r * std::cos(t), r * std::sin(t), rng.uniform(-1.0, 1.0));
            } else {
                double rr = r * std::sqrt(rng.uniform());
                double z = rng.uniform() < 0.5 ? -1.0 : 1.0;
                c.pts.emplace_back(rr * std::cos(t), rr * std::sin(t), z);
            }
        }
    } else if (cls == "cone") {
        const double slant = M_PI * std::sqrt(5.0), base = M_PI; // r=1, apex at z=1
        const Eigen::Vector3d apex(0, 0, 1);
        for (int i = 0; i < n; ++i) {
            double t = rng.uniform(0.0, 2.0 * M_PI);
            if (rng.uniform() * (slant + base) < slant) {
                double s = std::sqrt(rng.uniform()); // area grows with distance from apex
                Eigen::Vector3d rim(std::cos(t), std::sin(t), -1.0);
                c.pts.push_back(apex + s * (rim - apex));
            } else {
                double rr = std::sqrt(rng.uniform());
                c.pts.emplace_back(rr * std::cos(t), rr * std::sin(t), -1.0);
            }
        }
    } else if (cls == "torus") {
        const double R = 0.75, r = 0.3;
        for (int i = 0; i < n; ++i) {
            double u = rng.uniform(0.0, 2.0 * M_PI);
            double v;
            do { // reject to account for the R + r*cos(v) area factor
                v = rng.uniform(0.0, 2.0 * M_PI);
            } while (rng.uniform() * (R + r) > R + r * std::cos(v));
            double w = R + r * std::cos(v);
            c.pts.emplace_back(w * std::cos(u), w * std::sin(u), r * std::sin(v));
        }
    } else if (cls == "plane") {
        for (int i = 0; i < n; ++i)
            c.pts.emplace_back(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0);
    } else if (cls == "helix") {
        // coiled tube: circular helix of radius R and pitch 2c, thickened
        // to tube radius rt; area-corrected via the curvature factor
        const double R = 0.65, turns = 2.0, rt = 0.16;
        const double c_pitch = 1.0 / (turns * M_PI); // z spans [-1, 1]
        const double denom = R * R + c_pitch * c_pitch;
        const double kappa = R / denom;
        for (int i = 0; i < n; ++i) {
            double t, phi;
            do {
                t = rng.uniform(0.0, turns * 2.0 * M_PI);
                phi = rng.uniform(0.0, 2.0 * M_PI);
            } while (rng.uniform() * (1.0 + rt * kappa) > 1.0 - rt * kappa * std::cos(phi));
            Eigen::Vector3d center(R * std::cos(t), R * std::sin(t), c_pitch * t - 1.0);
            // Frenet frame of the circular helix
            Eigen::Vector3d normal(-std::cos(t), -std::sin(t), 0.0);
            Eigen::Vector3d tangent(-R * std::sin(t), R * std::cos(t), c_pitch);
            tangent.normalize();
            Eigen::Vector3d binormal = tangent.cross(normal);
            c.pts.push_back(center + rt * (std::cos(phi) * normal + std::sin(phi) * binormal));
        }
    } else {
        throw std::invalid_argument("synth_generate: unknown class '" + cls + "'");
    }
    return c;
}

} // namespace

const std::vector<std::string>& synthetic_classes() {
    static const std::vector<std::string> names = {"sphere", "cube",  "cylinder", "cone",
                                                   "torus",  "plane", "helix"};
    return names;
}

LabeledDataset synth_generate(const std::vector<std::string>& classes, int per_class,
                              int n_points, double noise_sigma, std::uint64_t seed) {
    if (per_class < 2) throw std::invalid_argument("synth_generate: per_class must be >= 2");
    if (n_points < 1) throw std::invalid_argument("synth_generate: n_points must be >= 1");
    if (noise_sigma < 0.0) throw std::invalid_argument("synth_generate: negative noise_sigma");

    LabeledDataset ds;
    ds.records.reserve(classes.size() * per_class);
    for (const auto& cls : classes) {
        std::uint64_t class_seed = derive_seed(seed, Stream::SynthGen, fnv1a64(cls));
        for (int i = 0; i < per_class; ++i) {
            Rng rng(derive_seed(class_seed, 0, i));
            PointCloud cloud = sample_shape(cls, n_points, rng);
            Eigen::Matrix3d rot = random_rotation(rng);
            double scale = rng.uniform(0.8, 1.2);
            for (auto& p : cloud.pts) {
                p = scale * (rot * p);
                if (noise_sigma > 0.0)
                    p += noise_sigma * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
            }
            Record rec;
            rec.cloud = normalize(cloud);
            rec.label = cls;
            char idbuf[64];
            std::snprintf(idbuf, sizeof(idbuf), "%s_%03d", cls.c_str(), i);
            rec.id = idbuf;
            ds.records.push_back(std::move(rec));
        }
    }
    return ds;
}

LabeledDataset load_manifest(const std::string& path, int n_points, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw io_error("malformed manifest " + path + ": " + e.what());
    }
    if (!doc.is_object()) throw io_error("manifest must be a JSON object: " + path);

    const fs::path base = fs::path(path).parent_path();
    LabeledDataset ds;
    std::set<std::string> seen_ids;
    std::uint64_t file_counter = 0;
    for (const auto& [cls, files] : doc.items()) {
        if (!files.is_array() || files.size() < 2)
            throw io_error("manifest class '" + cls + "' needs an array of >= 2 files");
        for (const auto& f : files) {
            std::string rel = f.get<std::string>();
            if (!seen_ids.insert(rel).second)
                throw io_error("duplicate id in manifest: " + rel);
            PointCloud cloud = read_xyz((base / rel).string());
            if (cloud.size() < n_points)
                throw io_error("cloud " + rel + " has " + std::to_string(cloud.size()) +
                               " points, manifest requires n=" + std::to_string(n_points));
            cloud = random_sample(cloud, n_points,
                                  derive_seed(seed, Stream::SampleCloud, file_counter++));
            Record rec;
            rec.cloud = normalize(cloud);
            rec.label = cls;
            rec.id = rel;
            ds.records.push_back(std::move(rec));
        }
    }
    if (ds.records.empty()) throw io_error("manifest has no classes: " + path);
    return ds;
}

std::string export_dataset(const std::string& dir, const LabeledDataset& dataset) {
    fs::create_directories(dir);
    json manifest = json::object();
    std::map<std::string, std::vector<std::string>> by_class;
    for (const auto& rec : dataset.records) {
        fs::create_directories(fs::path(dir) / rec.label);
        std::string rel = rec.label + "/" + rec.id + ".xyz";
        write_xyz((fs::path(dir) / rel).string(), rec.cloud);
        by_class[rec.label].push_back(rel);
    }
    for (const auto& [cls, files] : by_class) manifest[cls] = files;
    std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ofstream out(manifest_path);
    if (!out) throw io_error("cannot write manifest: " + manifest_path);
    out << manifest.dump(2) << "\n";
    return manifest_path;
}

CategorySplit category_out_split(const LabeledDataset& dataset, const std::string& anomaly_class,
                                 double holdout_fraction, std::uint64_t seed) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw std::invalid_argument("category_out_split: holdout_fraction must be in (0, 1)");
    auto classes = dataset.class_names();
    if (std::find(classes.begin(), classes.end(), anomaly_class) == classes.end())
        throw std::invalid_argument("category_out_split: unknown class '" + anomaly_class + "'");
    if (classes.size() < 2)
        throw std::invalid_argument("category_out_split: need at least 2 classes");

    CategorySplit split;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
        const std::string& cls = classes[ci];
        std::vector<int> members;
        for (int i = 0; i < dataset.size(); ++i)
            if (dataset.records[i].label == cls) members.push_back(i);

        if (cls == anomaly_class) {
            for (int i : members) {
                split.test.records.push_back(dataset.records[i]);
                split.test_is_anomaly.push_back(1);
            }
            continue;
        }
        Rng rng(derive_seed(seed, Stream::Split, ci));
        rng.shuffle(members);
        int holdout = static_cast<int>(std::lround(holdout_fraction * members.size()));
        holdout = std::clamp(holdout, 1, static_cast<int>(members.size()) - 1);
        int train_count = static_cast<int>(members.size()) - holdout;
        for (int i = 0; i < static_cast<int>(members.size()); ++i) {
            if (i < train_count) {
                split.train.records.push_back(dataset.records[members[i]]);
            } else {
                split.test.records.push_back(dataset.records[members[i]]);
                split.test_is_anomaly.push_back(0);
            }
        }
    }
    return split;
}

} // namespace pcad
