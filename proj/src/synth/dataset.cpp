#include "wbforge/synth/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "wbforge/errors.hpp"
#include "wbforge/io.hpp"

namespace wbforge {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::vector<int> ids_of(const std::vector<BenchmarkSample>& samples, const std::vector<std::string>& subjects)
{
    std::vector<int> out;
    for (const auto& s : samples)
        if (std::find(subjects.begin(), subjects.end(), s.subject) != subjects.end())
            out.push_back(s.id);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index)
{
    return splitmix64(splitmix64(master ^ (stream * 0x632be59bd9b4e019ULL)) + index);
}

Eigen::Vector4d visible_bbox(const Pose2D& pose)
{
    Eigen::Vector4d b(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                      -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity());
    bool any = false;
    for (int k = 0; k < pose.size(); ++k) {
        if (!pose.visible[k])
            continue;
        any = true;
        b[0] = std::min(b[0], pose.coords(k, 0));
        b[1] = std::min(b[1], pose.coords(k, 1));
        b[2] = std::max(b[2], pose.coords(k, 0));
        b[3] = std::max(b[3], pose.coords(k, 1));
    }
    if (!any)
        throw DegenerateInputError("bounding box of a pose without visible keypoints");
    return b;
}

nlohmann::json coords_to_json(const Coords3& c)
{
    auto a = nlohmann::json::array();
    for (Eigen::Index k = 0; k < c.rows(); ++k)
        a.push_back({c(k, 0), c(k, 1), c(k, 2)});
    return a;
}

Coords3 coords3_from_json(const nlohmann::json& j, int expected_rows)
{
    if (!j.is_array() || static_cast<int>(j.size()) != expected_rows)
        throw SchemaError("kp3d must list " + std::to_string(expected_rows) + " keypoints");
    Coords3 c(expected_rows, 3);
    for (int k = 0; k < expected_rows; ++k) {
        const auto& e = j[k];
        if (!e.is_array() || e.size() != 3)
            throw SchemaError("kp3d entry " + std::to_string(k + 1) + " must be [x, y, z]");
        for (int a = 0; a < 3; ++a)
            c(k, a) = e[a].get<double>();
    }
    return c;
}

nlohmann::json kp2d_to_json(const Pose2D& p)
{
    auto a = nlohmann::json::array();
    for (int k = 0; k < p.size(); ++k) {
        const int vis = p.visible[k] ? 1 : 0;
        if (p.confidence[k] == 1.0)
            a.push_back({p.coords(k, 0), p.coords(k, 1), vis});
        else
            a.push_back({p.coords(k, 0), p.coords(k, 1), vis, p.confidence[k]});
    }
    return a;
}

Pose2D kp2d_from_json(const nlohmann::json& j, int expected_rows)
{
    if (!j.is_array() || static_cast<int>(j.size()) != expected_rows)
        throw SchemaError("kp2d must list " + std::to_string(expected_rows) + " keypoints");
    Pose2D p;
    p.coords.resize(expected_rows, 2);
    p.visible.resize(static_cast<size_t>(expected_rows));
    p.confidence.resize(expected_rows);
    for (int k = 0; k < expected_rows; ++k) {
        const auto& e = j[k];
        if (!e.is_array() || (e.size() != 3 && e.size() != 4))
            throw SchemaError("kp2d entry " + std::to_string(k + 1) + " must be [u, v, vis(, conf)]");
        p.coords(k, 0) = e[0].get<double>();
        p.coords(k, 1) = e[1].get<double>();
        p.visible[k] = e[2].get<double>() != 0.0 ? 1 : 0;
        p.confidence[k] = e.size() == 4 ? e[3].get<double>() : 1.0;
    }
    return p;
}

nlohmann::json to_json(const BenchmarkSample& s)
{
    nlohmann::json j{{"id", s.id},
                     {"subject", s.subject},
                     {"camera", s.camera},
                     {"image", s.image},
                     {"bbox", {s.bbox[0], s.bbox[1], s.bbox[2], s.bbox[3]}},
                     {"kp2d", kp2d_to_json(s.pose2d)}};
    if (s.pose3d.size() > 0)
        j["kp3d"] = coords_to_json(s.pose3d.coords);
    return j;
}

BenchmarkSample sample_from_json(const nlohmann::json& j, const KeypointLayout& layout)
{
    BenchmarkSample s;
    try {
        s.id = j.at("id").get<int>();
        s.subject = j.at("subject").get<std::string>();
        s.camera = j.at("camera").get<std::string>();
        s.image = j.value("image", std::string());
        const auto& b = j.at("bbox");
        if (!b.is_array() || b.size() != 4)
            throw SchemaError("bbox must have 4 entries");
        for (int i = 0; i < 4; ++i)
            s.bbox[i] = b[i].get<double>();
        s.pose2d = kp2d_from_json(j.at("kp2d"), layout.total());
        if (j.contains("kp3d")) {
            s.pose3d.coords = coords3_from_json(j.at("kp3d"), layout.total());
            s.pose3d.frame = Frame::camera;
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed sample record: ") + e.what());
    } catch (const SchemaError& e) {
        throw SchemaError("sample " + std::to_string(s.id) + ": " + e.what());
    }
    return s;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<BenchmarkSample>& samples,
                   const KeypointLayout& layout)
{
    std::filesystem::create_directories(dir);
    std::vector<nlohmann::json> lines;
    lines.reserve(samples.size());
    for (const auto& s : samples)
        lines.push_back(to_json(s));
    write_jsonl_atomic(dir / "annotations.jsonl", lines);
    write_json_atomic(dir / "meta.json", {{"schema_version", kDatasetSchemaVersion},
                                          {"layout", layout.tag()},
                                          {"samples", samples.size()}});
}

Dataset read_dataset(const std::filesystem::path& dir, const KeypointLayout& layout)
{
    const auto meta = read_json(dir / "meta.json");
    const int version = meta.value("schema_version", -1);
    if (version != kDatasetSchemaVersion)
        throw SchemaError("dataset " + dir.string() + " has schema version " + std::to_string(version) +
                          ", expected " + std::to_string(kDatasetSchemaVersion));
    Dataset d;
    d.layout_tag = meta.value("layout", std::string());
    if (d.layout_tag != layout.tag())
        throw SchemaError("dataset layout " + d.layout_tag + " does not match " + layout.tag());
    for (const auto& j : read_jsonl(dir / "annotations.jsonl"))
        d.samples.push_back(sample_from_json(j, layout));
    return d;
}

Splits make_splits(const std::vector<BenchmarkSample>& samples, std::uint64_t seed,
                   const std::vector<std::string>& train_subjects, const std::vector<std::string>& test_subjects)
{
    for (const auto& s : train_subjects)
        if (std::find(test_subjects.begin(), test_subjects.end(), s) != test_subjects.end())
            throw ValidationError("subject " + s + " is listed for both train and test");
    Splits sp;
    sp.train = ids_of(samples, train_subjects);
    sp.test = ids_of(samples, test_subjects);

    std::vector<int> order = sp.test;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t i = 0; i < order.size(); ++i)
        (i % 2 == 0 ? sp.test_lift : sp.test_ilift).push_back(order[i]);
    std::sort(sp.test_lift.begin(), sp.test_lift.end());
    std::sort(sp.test_ilift.begin(), sp.test_ilift.end());
    return sp;
}

namespace {

void write_ids(const std::filesystem::path& path, const std::vector<int>& ids)
{
    std::string text;
    for (int id : ids)
        text += std::to_string(id) + "\n";
    write_text_atomic(path, text);
}

} // namespace

void write_manifests(const std::filesystem::path& dir, const Splits& splits)
{
    write_ids(dir / "train.txt", splits.train);
    write_ids(dir / "test.txt", splits.test);
    write_ids(dir / "test_lift.txt", splits.test_lift);
    write_ids(dir / "test_ilift.txt", splits.test_ilift);
}

std::vector<int> read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open manifest " + path.string());
    std::vector<int> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            ids.push_back(std::stoi(line));
        } catch (const std::exception&) {
            throw SchemaError("manifest " + path.string() + ": bad id '" + line + "'");
        }
    }
    return ids;
}

Splits read_manifests(const std::filesystem::path& dir)
{
    return Splits{read_manifest(dir / "train.txt"), read_manifest(dir / "test.txt"),
                  read_manifest(dir / "test_lift.txt"), read_manifest(dir / "test_ilift.txt")};
}

std::vector<PoseSet> synthesize_pose_sets(const CorpusConfig& config, const Rig& rig)
{
    const SyntheticPoseGenerator gen(config.generator);
    std::vector<PoseSet> sets(static_cast<size_t>(config.poses));
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < config.poses; ++i) {
        PoseSet& s = sets[i];
        s.id = i;
        s.subject = kSubjects[static_cast<size_t>(i) % kSubjects.size()];
        s.world = gen.generate(derive_seed(config.seed, 1, static_cast<std::uint64_t>(i)));
        s.detections = simulate_detections(s.world, rig, config.occlusion,
                                           derive_seed(config.seed, 2, static_cast<std::uint64_t>(i)));
    }
    return sets;
}

std::vector<BenchmarkSample> benchmark_samples(const PoseSet& set, const Rig& rig)
{
    std::vector<BenchmarkSample> out;
    for (int v = 0; v < rig.size(); ++v) {
        const CameraModel& cam = rig.camera(v);
        BenchmarkSample s;
        s.id = set.id * rig.size() + v;
        s.subject = set.subject;
        s.camera = cam.id;
        s.image = "synthetic:" + std::to_string(set.id) + "/" + cam.id;
        s.pose2d = project_pose(set.world, cam);
        for (int k = 0; k < s.pose2d.size(); ++k)
            if (!cam.in_image(s.pose2d.coords.row(k).transpose()))
                s.pose2d.visible[k] = 0;
        s.pose3d.frame = Frame::camera;
        s.pose3d.coords.resize(set.world.size(), 3);
        for (int k = 0; k < set.world.size(); ++k)
            s.pose3d.coords.row(k) = cam.to_camera(set.world.coords.row(k).transpose()).transpose();
        s.bbox = visible_bbox(s.pose2d);
        out.push_back(std::move(s));
    }
    return out;
}

void write_pose_sets(const std::filesystem::path& dir, const std::vector<PoseSet>& sets, const Rig& rig)
{
    std::vector<nlohmann::json> det, gt;
    for (const auto& s : sets) {
        auto views = nlohmann::json::array();
        for (int v = 0; v < rig.size(); ++v)
            views.push_back({{"camera", rig.camera(v).id}, {"kp2d", kp2d_to_json(s.detections[v])}});
        det.push_back({{"id", s.id}, {"subject", s.subject}, {"views", views}});
        gt.push_back({{"id", s.id}, {"kp3d", coords_to_json(s.world.coords)}});
    }
    write_jsonl_atomic(dir / "detections.jsonl", det);
    write_jsonl_atomic(dir / "ground_truth.jsonl", gt);
}

std::vector<PoseSet> read_pose_sets(const std::filesystem::path& dir, const Rig& rig, const KeypointLayout& layout)
{
    std::vector<PoseSet> sets;
    for (const auto& j : read_jsonl(dir / "detections.jsonl")) {
        PoseSet s;
        try {
            s.id = j.at("id").get<int>();
            s.subject = j.value("subject", std::string());
            s.detections.resize(static_cast<size_t>(rig.size()));
            std::set<int> seen;
            for (const auto& v : j.at("views")) {
                const int idx = rig.index_of(v.at("camera").get<std::string>());
                s.detections[idx] = kp2d_from_json(v.at("kp2d"), layout.total());
                seen.insert(idx);
            }
            if (static_cast<int>(seen.size()) != rig.size())
                throw SchemaError("pose set " + std::to_string(s.id) + " does not list every rig camera");
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("malformed detection record: ") + e.what());
        }
        sets.push_back(std::move(s));
    }
    const auto gt_path = dir / "ground_truth.jsonl";
    if (std::filesystem::exists(gt_path)) {
        std::map<int, Coords3> gt;
        for (const auto& j : read_jsonl(gt_path))
            gt[j.at("id").get<int>()] = coords3_from_json(j.at("kp3d"), layout.total());
        for (auto& s : sets)
            if (auto it = gt.find(s.id); it != gt.end())
                s.world = Pose3D{it->second, Frame::world};
    }
    return sets;
}

} // namespace wbforge
