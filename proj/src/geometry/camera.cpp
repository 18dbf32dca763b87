#include "wbforge/geometry/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "wbforge/errors.hpp"

namespace wbforge {

namespace {

nlohmann::json matrix_json(const Eigen::Matrix3d& m)
{
    auto rows = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
        rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
    return rows;
}

Eigen::Matrix3d matrix_from_json(const nlohmann::json& j, const char* what)
{
    if (!j.is_array() || j.size() != 3)
        throw SchemaError(std::string("camera: '") + what + "' must be a 3x3 matrix");
    Eigen::Matrix3d m;
    for (int r = 0; r < 3; ++r) {
        if (!j[r].is_array() || j[r].size() != 3)
            throw SchemaError(std::string("camera: '") + what + "' must be a 3x3 matrix");
        for (int c = 0; c < 3; ++c)
            m(r, c) = j[r][c].get<double>();
    }
    return m;
}

} // namespace

Eigen::Matrix<double, 3, 4> CameraModel::projection_matrix() const
{
    Eigen::Matrix<double, 3, 4> Rt;
    Rt.leftCols<3>() = R;
    Rt.col(3) = t;
    return K * Rt;
}

bool CameraModel::in_image(const Eigen::Vector2d& uv) const
{
    return uv.x() >= 0.0 && uv.y() >= 0.0 && uv.x() <= width - 1 && uv.y() <= height - 1;
}

void CameraModel::validate() const
{
    const Eigen::Matrix3d should_be_identity = R.transpose() * R;
    if (!should_be_identity.isApprox(Eigen::Matrix3d::Identity(), 1e-9) ||
        std::abs(R.determinant() - 1.0) > 1e-9)
        throw ValidationError("camera " + id + ": rotation is not orthonormal with det +1");
    if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0))
        throw ValidationError("camera " + id + ": focal lengths must be positive");
    if (width <= 0 || height <= 0)
        throw ValidationError("camera " + id + ": image size must be positive");
}

nlohmann::json CameraModel::to_json() const
{
    return {{"id", id}, {"K", matrix_json(K)}, {"R", matrix_json(R)}, {"t", {t.x(), t.y(), t.z()}},
            {"size", {width, height}}};
}

CameraModel CameraModel::from_json(const nlohmann::json& j)
{
    CameraModel c;
    try {
        c.id = j.at("id").get<std::string>();
        c.K = matrix_from_json(j.at("K"), "K");
        c.R = matrix_from_json(j.at("R"), "R");
        const auto& t = j.at("t");
        if (!t.is_array() || t.size() != 3)
            throw SchemaError("camera: 't' must have 3 entries");
        c.t = Eigen::Vector3d(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
        const auto& size = j.at("size");
        c.width = size.at(0).get<int>();
        c.height = size.at(1).get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("camera: ") + e.what());
    }
    c.validate();
    return c;
}

CameraModel CameraModel::look_at(std::string id, const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                                 const Eigen::Vector3d& up, double focal, int width, int height)
{
    // Camera axes: z forward, x right, y down in the image.
    const Eigen::Vector3d z = (target - eye).normalized();
    const Eigen::Vector3d x = z.cross(up).normalized();
    const Eigen::Vector3d y = z.cross(x);
    CameraModel c;
    c.id = std::move(id);
    c.R.row(0) = x.transpose();
    c.R.row(1) = y.transpose();
    c.R.row(2) = z.transpose();
    c.t = -c.R * eye;
    c.K << focal, 0.0, 0.5 * (width - 1), 0.0, focal, 0.5 * (height - 1), 0.0, 0.0, 1.0;
    c.width = width;
    c.height = height;
    return c;
}

Projection project(const Eigen::Vector3d& point, const CameraModel& camera)
{
    const Eigen::Vector3d pc = camera.to_camera(point);
    // Relative guard: the camera center itself maps to a rounding-level depth.
    if (!(pc.z() > 1e-9 * std::max(1.0, camera.t.norm())))
        throw BehindCameraError("point is not in front of camera " + camera.id);
    const Eigen::Vector3d h = camera.K * pc;
    Projection p;
    p.uv = h.head<2>() / h.z();
    p.depth = pc.z();
    p.in_image = camera.in_image(p.uv);
    return p;
}

Rig::Rig(std::vector<CameraModel> cameras, std::vector<std::pair<std::string, std::string>> opposing)
    : cameras_(std::move(cameras)), opposing_(std::move(opposing))
{
    if (cameras_.size() != 4)
        throw ValidationError("rig must contain exactly 4 cameras");
    for (size_t i = 0; i < cameras_.size(); ++i)
        for (size_t j = i + 1; j < cameras_.size(); ++j)
            if (cameras_[i].id == cameras_[j].id)
                throw ValidationError("rig: duplicate camera id " + cameras_[i].id);
    opposing_matrix_.assign(cameras_.size(), std::vector<bool>(cameras_.size(), false));
    for (const auto& [a, b] : opposing_) {
        auto ia = find(a), ib = find(b);
        if (!ia || !ib || *ia == *ib)
            throw ValidationError("rig: opposing pair (" + a + ", " + b + ") does not name two rig cameras");
        opposing_matrix_[*ia][*ib] = opposing_matrix_[*ib][*ia] = true;
    }
}

std::optional<int> Rig::find(const std::string& id) const
{
    for (size_t i = 0; i < cameras_.size(); ++i)
        if (cameras_[i].id == id)
            return static_cast<int>(i);
    return std::nullopt;
}

int Rig::index_of(const std::string& id) const
{
    if (auto i = find(id))
        return *i;
    throw ValidationError("unknown camera id '" + id + "'");
}

bool Rig::opposing(int a, int b) const
{
    return opposing_matrix_.at(a).at(b);
}

nlohmann::json Rig::to_json() const
{
    auto cams = nlohmann::json::array();
    for (const auto& c : cameras_)
        cams.push_back(c.to_json());
    auto opp = nlohmann::json::array();
    for (const auto& [a, b] : opposing_)
        opp.push_back({a, b});
    return {{"cameras", cams}, {"opposing", opp}};
}

Rig Rig::from_json(const nlohmann::json& j)
{
    std::vector<CameraModel> cams;
    std::vector<std::pair<std::string, std::string>> opp;
    try {
        for (const auto& c : j.at("cameras"))
            cams.push_back(CameraModel::from_json(c));
        for (const auto& p : j.at("opposing"))
            opp.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("rig: ") + e.what());
    }
    return Rig(std::move(cams), std::move(opp));
}

Rig Rig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw SchemaError("cannot open rig file " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("rig file " + path.string() + ": " + e.what());
    }
}

void Rig::save(const std::filesystem::path& path) const
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write rig file " + path.string());
    out << to_json().dump(2) << '\n';
}

Rig Rig::corner_rig(double half_side_mm, double height_mm, double focal_px, int width, int height)
{
    const Eigen::Vector3d target(0.0, 0.0, 900.0);
    const Eigen::Vector3d up(0.0, 0.0, 1.0);
    const double s = half_side_mm;
    std::vector<CameraModel> cams{
        CameraModel::look_at("c1", {s, s, height_mm}, target, up, focal_px, width, height),
        CameraModel::look_at("c2", {-s, s, height_mm}, target, up, focal_px, width, height),
        CameraModel::look_at("c3", {-s, -s, height_mm}, target, up, focal_px, width, height),
        CameraModel::look_at("c4", {s, -s, height_mm}, target, up, focal_px, width, height),
    };
    return Rig(std::move(cams), {{"c1", "c3"}, {"c2", "c4"}});
}

} // namespace wbforge
