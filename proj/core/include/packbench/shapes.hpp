#pragma once

// Packable objects: procedural shape families, a mesh voxelizer for external
// meshes, and seeded episode generation.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "packbench/geometry.hpp"

namespace packbench {

enum class Family { cuboid, cylinder, l_solid, t_solid, u_channel, bowl, plate, sphere_cap, peg };

inline constexpr std::array<Family, 9> kAllFamilies = {Family::cuboid,  Family::cylinder, Family::l_solid,
                                                       Family::t_solid, Family::u_channel, Family::bowl,
                                                       Family::plate,   Family::sphere_cap, Family::peg};

std::string_view family_name(Family f);
Family family_from_name(std::string_view name);

bool is_convex_family(Family f);
/// Concave or thin families that make up the bulk of hard pools.
bool is_hard_family(Family f);

/// Parameters, in mm, per family:
///   cuboid      w l h
///   cylinder    r h            (axis vertical)
///   l_solid     w l h t        (slab of thickness t plus a wall of thickness t)
///   t_solid     w l h t        (bar of thickness t on a stem of width t)
///   u_channel   w l h t        (base and two walls of thickness t)
///   bowl        r h t          (flat-bottomed cup, wall and base thickness t)
///   plate       r t            (disc)
///   sphere_cap  r h            (cap of height h cut from a sphere of radius r)
///   peg         r len          (cylinder lying along x)
struct ShapeSpec {
    Family family = Family::cuboid;
    std::vector<double> params;
    std::array<double, 3> scale{1.0, 1.0, 1.0};

    /// Unscaled bounding extents in mm.
    std::array<double, 3> extents() const;
    void validate() const;
};

/// Voxelizes the scaled shape on a lattice of `cell_mm`. Identical inputs give
/// identical bits. Throws InvalidInput when any axis has fewer than 2 cells.
ObjectModel build_shape(const ShapeSpec& spec, double cell_mm, std::string id = {});

using Triangle = std::array<std::array<double, 3>, 3>;

/// Voxel occupied iff its center lies inside the mesh (ray parity along z).
/// The mesh must be closed and consistently oriented: every directed edge
/// appears once and its reverse appears once.
VoxelGrid voxelize_mesh(const std::vector<Triangle>& triangles, double cell_mm);

std::vector<Triangle> parse_ascii_stl(std::string_view text);
/// {"triangles": [[x1,y1,z1, x2,y2,z2, x3,y3,z3], ...]} in mm.
std::vector<Triangle> parse_triangle_json(std::string_view text);
std::vector<Triangle> read_mesh_file(const std::string& path);

enum class Difficulty { easy, hard };
std::string_view difficulty_name(Difficulty d);
Difficulty difficulty_from_name(std::string_view name);

struct EpisodeOptions {
    double cell_mm = 2.0;
    double box_length_mm = 400.0;
    double box_width_mm = 400.0;
    double box_height_mm = 300.0;
    bool per_axis_scaling = false;
};

inline constexpr int kDefaultPoolSize = 50;

struct EpisodeSet {
    std::vector<ObjectModel> objects;
    std::vector<ShapeSpec> specs;
    std::uint64_t seed = 0;
    Difficulty difficulty = Difficulty::easy;
};

/// Seeded candidate pool. Easy pools take at least 70% of their objects from
/// convex families, hard pools at least 50% from concave/thin ones. Every
/// object fits the empty box in some right-angle orientation.
EpisodeSet generate_episode(std::uint64_t seed, Difficulty difficulty, int pool_size, const EpisodeOptions& opts);

/// Cubes of two sizes (2 and 3 cells on a side), for small-scale training.
EpisodeSet generate_toy_episode(std::uint64_t seed, int pool_size, double cell_mm);

/// Manifest JSON: seed, difficulty, cell size and per-object id/family/params/scale.
std::string episode_to_json(const EpisodeSet& e, double cell_mm);
EpisodeSet episode_from_json(std::string_view text);

}  // namespace packbench
