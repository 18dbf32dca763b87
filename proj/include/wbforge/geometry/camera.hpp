#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace wbforge {

// Pinhole camera without distortion: x_cam = R * X_world + t, u ~ K * x_cam.
struct CameraModel {
    std::string id;
    Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
    int width = 0;
    int height = 0;

    Eigen::Matrix<double, 3, 4> projection_matrix() const;
    Eigen::Vector3d center() const { return -R.transpose() * t; }
    Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const { return R * world + t; }
    Eigen::Vector3d to_world(const Eigen::Vector3d& cam) const { return R.transpose() * (cam - t); }
    bool in_image(const Eigen::Vector2d& uv) const;

    // Throws ValidationError unless R is orthonormal with det +1 and focal lengths are positive.
    void validate() const;

    nlohmann::json to_json() const;
    static CameraModel from_json(const nlohmann::json& j);

    // Camera at `eye` looking at `target` with world up vector `up`.
    static CameraModel look_at(std::string id, const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                               const Eigen::Vector3d& up, double focal, int width, int height);
};

struct Projection {
    Eigen::Vector2d uv;
    double depth = 0.0;
    bool in_image = false;
};

// Throws BehindCameraError when the point has non-positive depth.
Projection project(const Eigen::Vector3d& point, const CameraModel& camera);

// Four cameras plus the pairs that face each other across the capture volume.
class Rig {
public:
    Rig() = default;
    Rig(std::vector<CameraModel> cameras, std::vector<std::pair<std::string, std::string>> opposing);

    const std::vector<CameraModel>& cameras() const { return cameras_; }
    const CameraModel& camera(int index) const { return cameras_.at(index); }
    int size() const { return static_cast<int>(cameras_.size()); }
    int index_of(const std::string& id) const;
    std::optional<int> find(const std::string& id) const;

    bool opposing(int a, int b) const;
    const std::vector<std::pair<std::string, std::string>>& opposing_pairs() const { return opposing_; }

    nlohmann::json to_json() const;
    static Rig from_json(const nlohmann::json& j);
    static Rig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    // Human3.6M-style rig: four cameras in the corners of a square room looking at
    // its center, diagonal pairs declared opposing.
    static Rig corner_rig(double half_side_mm = 3200.0, double height_mm = 1700.0, double focal_px = 1145.0,
                          int width = 1000, int height = 1000);

private:
    std::vector<CameraModel> cameras_;
    std::vector<std::pair<std::string, std::string>> opposing_;
    std::vector<std::vector<bool>> opposing_matrix_;
};

} // namespace wbforge
