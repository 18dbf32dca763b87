#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wbforge/geometry/triangulation.hpp"
#include "wbforge/skeleton/pose.hpp"

// Hot loops with a plain serial reference and an OpenMP version. The two
// variants produce bit-identical results; tests compare them and the bench
// target times them.
namespace wbforge::kernels {

// Window half-width of a rendered blob: values beyond it are below 1e-7.
int blob_radius(double sigma_px);

// Render unit-peak Gaussians, one channel per keypoint (channels = uv.rows())
// or, when composite is set, summed into a single channel. `out` must hold
// channels * height * width floats and is overwritten.
void render_serial(const Coords2& uv, const std::vector<std::uint8_t>& visible, int width, int height,
                   double sigma_px, bool composite, float* out);
void render_parallel(const Coords2& uv, const std::vector<std::uint8_t>& visible, int width, int height,
                     double sigma_px, bool composite, float* out);

using ViewSet = std::vector<Pose2D>;

std::vector<PoseTriangulation> triangulate_batch_serial(std::span<const ViewSet> sets, const Rig& rig,
                                                        const TriangulationOptions& options = {});
std::vector<PoseTriangulation> triangulate_batch_parallel(std::span<const ViewSet> sets, const Rig& rig,
                                                          const TriangulationOptions& options = {});

// Per-sample mean joint error over `rows` after subtracting, from each pose,
// the mean of its `root_rows`.
std::vector<double> mpjpe_batch_serial(std::span<const Coords3> pred, std::span<const Coords3> gt,
                                       const std::vector<int>& rows, const std::vector<int>& root_rows);
std::vector<double> mpjpe_batch_parallel(std::span<const Coords3> pred, std::span<const Coords3> gt,
                                         const std::vector<int>& rows, const std::vector<int>& root_rows);

} // namespace wbforge::kernels
