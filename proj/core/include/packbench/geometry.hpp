#pragma once

// Voxel and heightmap primitives.
//
// Heights are stored as integers in units of 0.1 mm (one "quantum") so that
// every geometric predicate downstream is exact. Heightmaps are indexed
// (x, y) with x the row (along the box length) and y the column; storage is
// row-major. Voxel grids are indexed (x, y, z), x fastest.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace packbench {

using Height = std::int32_t;

inline constexpr Height kQuantaPerMm = 10;

/// Value of H_b on columns where the object has no matter. Larger than any
/// box height, so an empty column never constrains the drop height.
inline constexpr Height kNoSupport = std::numeric_limits<Height>::max() / 4;

inline constexpr double kPi = std::numbers::pi;

inline Height mm_to_quanta(double mm) { return static_cast<Height>(std::llround(mm * kQuantaPerMm)); }
inline double quanta_to_mm(Height q) { return static_cast<double>(q) / kQuantaPerMm; }

class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
class Grid2 {
public:
    Grid2() = default;
    Grid2(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw InvalidInput("Grid2: negative dimensions");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(int x, int y) { return data_[static_cast<std::size_t>(x) * cols_ + y]; }
    const T& operator()(int x, int y) const { return data_[static_cast<std::size_t>(x) * cols_ + y]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    bool operator==(const Grid2&) const = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using Mask = Grid2<std::uint8_t>;

class Heightmap {
public:
    Heightmap() = default;
    Heightmap(int rows, int cols, double cell_mm, Height fill = 0);
    Heightmap(int rows, int cols, double cell_mm, std::vector<Height> heights);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double cell_mm() const { return cell_mm_; }
    std::size_t size() const { return heights_.size(); }

    Height& at(int x, int y) { return heights_[static_cast<std::size_t>(x) * cols_ + y]; }
    Height at(int x, int y) const { return heights_[static_cast<std::size_t>(x) * cols_ + y]; }

    const Height* row(int x) const { return heights_.data() + static_cast<std::size_t>(x) * cols_; }
    Height* row(int x) { return heights_.data() + static_cast<std::size_t>(x) * cols_; }

    std::span<const Height> data() const { return heights_; }

    /// Largest entry, ignoring kNoSupport sentinels. 0 for an empty map.
    Height max() const;
    /// Sum of all entries, ignoring kNoSupport sentinels.
    std::int64_t sum() const;

    bool operator==(const Heightmap& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && heights_ == o.heights_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    double cell_mm_ = 1.0;
    std::vector<Height> heights_;
};

struct GridDims {
    int nx = 0;
    int ny = 0;
    int nz = 0;
    bool operator==(const GridDims&) const = default;
};

/// Dense occupancy grid. The cell edge is kept in micrometers and must be a
/// whole number of height quanta.
class VoxelGrid {
public:
    VoxelGrid() = default;
    VoxelGrid(GridDims dims, std::uint32_t cell_um);

    const GridDims& dims() const { return dims_; }
    std::uint32_t cell_um() const { return cell_um_; }
    double cell_mm() const { return cell_um_ / 1000.0; }
    /// Height of one voxel layer in quanta.
    Height layer_height() const { return static_cast<Height>(cell_um_ / 100); }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims_.nx) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_.ny) * z);
    }
    bool occupied(int x, int y, int z) const { return occ_[index(x, y, z)] != 0; }
    void set(int x, int y, int z, bool v = true) { occ_[index(x, y, z)] = v ? 1 : 0; }

    std::int64_t count() const;
    bool empty() const { return count() == 0; }

    /// Crops to the bounding box of the occupied voxels.
    VoxelGrid tightened() const;
    bool is_tight() const;

    /// Occupied volume in mm^3.
    double volume_mm3() const;

    bool operator==(const VoxelGrid&) const = default;

private:
    GridDims dims_{};
    std::uint32_t cell_um_ = 0;
    std::vector<std::uint8_t> occ_;
};

enum class View : int { front = 0, rear = 1, left = 2, right = 3, top = 4, bottom = 5 };

inline constexpr std::array<const char*, 6> kViewNames = {"front", "rear", "left", "right", "top", "bottom"};

struct ObjectModel {
    std::string id;
    VoxelGrid grid;                       // canonical pose, tight
    std::array<double, 3> bbox_dims{};    // mm
    double volume = 0.0;                  // mm^3
    std::array<Heightmap, 6> principal_views;
};

/// Builds an object from a voxel set: tightens the grid and renders its views.
ObjectModel make_object(std::string id, const VoxelGrid& grid);

double bbox_volume(const ObjectModel& m);

/// Six axis-aligned views over the tight bounding box. Each cell stores the
/// distance from the opposite bounding-box face to the first occupied voxel
/// surface seen along the view ray, or 0 when the ray misses.
///
/// Layouts: top/bottom are (x, y); front/rear are (x, z); left/right are (y, z).
/// Front looks along +y, left along +x, top along -z.
std::array<Heightmap, 6> render_principal_views(const VoxelGrid& grid);

struct EulerAngles {
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
};

/// Discretized orientations: (roll, pitch) pairs indexed by i, yaws by j.
class OrientationGrid {
public:
    OrientationGrid() = default;
    OrientationGrid(std::vector<std::pair<double, double>> rp_set, std::vector<double> yaw_set);

    /// Regular grids with the given step for roll/pitch and for yaw. Each step
    /// must divide 2*pi.
    static OrientationGrid from_intervals(double rp_interval, double yaw_interval);

    const std::vector<std::pair<double, double>>& rp_set() const { return rp_; }
    const std::vector<double>& yaw_set() const { return yaw_; }
    int rp_count() const { return static_cast<int>(rp_.size()); }
    int yaw_count() const { return static_cast<int>(yaw_.size()); }

    std::optional<int> rp_index(double roll, double pitch) const;
    std::optional<int> yaw_index(double yaw) const;
    EulerAngles euler(int i, int j) const;

private:
    std::vector<std::pair<double, double>> rp_;
    std::vector<double> yaw_;
};

/// True when the angle is a multiple of pi/2 (up to 1e-9).
bool is_right_angle(double radians);

/// Rigid rotation R = Rz(yaw) Ry(pitch) Rx(roll) of the voxel set, rasterized
/// by mapping occupied voxel centers to the nearest lattice cell. Exact
/// permutation for right angles. The result is tight.
VoxelGrid rotate_voxels(const VoxelGrid& grid, const EulerAngles& angles);

struct ViewPair {
    Heightmap top;     // H_t: height of the column top above the object's lowest plane
    Heightmap bottom;  // H_b: gap under the column's lowest voxel; kNoSupport if empty
};

/// Top and bottom maps of a (tight) voxel set in its current pose.
ViewPair column_views(const VoxelGrid& grid);

/// Rotates by (roll, pitch), which must belong to `orientations`, and scans
/// the result from above and below.
ViewPair oriented_views(const VoxelGrid& grid, const OrientationGrid& orientations, double roll, double pitch);

/// Yaw rotation of a map pair about the footprint center. Multiples of pi/2
/// permute cells exactly; other angles resample to the nearest cell and
/// re-tighten the footprint.
ViewPair rotate_yaw(const ViewPair& views, double psi);

/// A fully oriented object ready for placement.
struct OrientedShape {
    int rp_index = 0;
    int yaw_index = 0;
    ViewPair views;
    Height peak = 0;              // max of H_t
    std::int64_t voxel_count = 0;
    double volume_mm3 = 0.0;
    // Center of mass; x/y in footprint cell units from the footprint origin
    // corner, z in mm above the lowest plane.
    double com_x = 0.0;
    double com_y = 0.0;
    double com_z = 0.0;

    int footprint_rows() const { return views.top.rows(); }
    int footprint_cols() const { return views.top.cols(); }
};

/// Oriented shape for (roll, pitch) rendered from voxels, then yaw applied via
/// rotate_yaw.
OrientedShape orient_shape(const VoxelGrid& grid, const OrientationGrid& orientations, int i, int j);

/// Every (i, j) orientation of the object, dropping those whose maps and
/// center of mass duplicate an earlier (lower index) one.
std::vector<OrientedShape> enumerate_orientations(const VoxelGrid& grid, const OrientationGrid& orientations);

}  // namespace packbench
