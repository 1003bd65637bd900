#pragma once

// Heuristic baselines and the planner interfaces shared with the learned
// policies.
//
// Every search here is deterministic: ties go to the lexicographically
// smallest (i, j, x, y), and randomized rules draw only from the Rng passed in.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "packbench/geometry.hpp"
#include "packbench/placement.hpp"
#include "packbench/rng.hpp"
#include "packbench/shapes.hpp"

namespace packbench {

enum class SequenceRule { random, bbox_volume_desc, learned };
enum class PlacementRule { random, hm, packit_blb, learned };

std::string_view sequence_rule_name(SequenceRule r);
SequenceRule sequence_rule_from_name(std::string_view name);
std::string_view placement_rule_name(PlacementRule r);
PlacementRule placement_rule_from_name(std::string_view name);

struct PlannerConfig {
    SequenceRule sequence_rule = SequenceRule::bbox_volume_desc;
    PlacementRule placement_rule = PlacementRule::hm;
    bool stability_constrained = false;
    int hm_downsample = 50;  // coarse lattice is hm_downsample x hm_downsample
    std::uint64_t seed = 0;
};

/// Everything about an episode that stays fixed while packing: the objects,
/// their oriented maps, the orientation grid and the box.
struct EpisodeContext {
    std::shared_ptr<const EpisodeSet> episode;
    OrientationGrid orientations;
    std::vector<std::vector<OrientedShape>> shapes;  // per object, deduplicated
    BoxSpec box;

    std::size_t size() const { return shapes.size(); }
};

EpisodeContext make_context(std::shared_ptr<const EpisodeSet> episode, const OrientationGrid& orientations,
                            const BoxSpec& box);

/// Object indices sorted by descending bounding-box volume, ties by id.
std::vector<std::size_t> bbox_sequence(std::span<const ObjectModel> objects, std::span<const std::size_t> indices);

/// Lattice of candidate centers for a box side of `n` cells cut into `parts`.
/// `parts` must divide `n`.
std::vector<int> coarse_positions(int n, int parts);

/// Heightmap minimization: minimize the post-placement heightmap volume, then
/// the resulting max height, then (i, j, x, y). Searches the hm_downsample
/// lattice and refines +-1 cell around the winner; falls back to the full
/// lattice when the coarse one has no legal cell. nullopt means no space.
std::optional<Placement> hm_place(const PackingState& state, std::size_t object,
                                  std::span<const OrientedShape> shapes, int hm_downsample);

/// Orientation with extents sorted longest to shortest along (x, y, z);
/// position minimizing (z, y, x). Other orientations are tried, in (i, j)
/// order, only when that one has no legal cell.
std::optional<Placement> packit_place(const PackingState& state, std::size_t object,
                                      std::span<const OrientedShape> shapes);

struct StableHmResult {
    std::optional<Placement> placement;
    bool fallback = false;  // no stable candidate: plain HM result, unstable
};

/// hm_place restricted to candidates that pass stability_check.
StableHmResult stable_hm_place(const PackingState& state, std::size_t object, std::span<const OrientedShape> shapes,
                               int hm_downsample);

/// Uniform legal (orientation, x, y) for one object.
std::optional<Placement> random_place(const PackingState& state, std::size_t object,
                                      std::span<const OrientedShape> shapes, Rng& rng);

struct RandomStep {
    std::size_t object = 0;
    std::optional<Placement> placement;
};

/// Uniform object among `candidates`, then a uniform legal placement.
RandomStep random_plan_step(const PackingState& state, std::span<const std::size_t> candidates,
                            const EpisodeContext& ctx, Rng& rng);

class SequencePolicy {
public:
    virtual ~SequencePolicy() = default;
    /// Picks one of `candidates` (non-empty, ascending).
    virtual std::size_t select(const PackingState& state, std::span<const std::size_t> candidates,
                               const EpisodeContext& ctx) = 0;
};

class PlacementPolicy {
public:
    virtual ~PlacementPolicy() = default;
    /// A legal placement of `object`, or nullopt when it does not fit anywhere.
    virtual std::optional<Placement> place(const PackingState& state, std::size_t object,
                                           const EpisodeContext& ctx) = 0;
};

class BBoxSequence final : public SequencePolicy {
public:
    std::size_t select(const PackingState& state, std::span<const std::size_t> candidates,
                       const EpisodeContext& ctx) override;
};

class RandomSequence final : public SequencePolicy {
public:
    explicit RandomSequence(std::uint64_t seed) : rng_(seed) {}
    std::size_t select(const PackingState& state, std::span<const std::size_t> candidates,
                       const EpisodeContext& ctx) override;

private:
    Rng rng_;
};

class HmPlacement final : public PlacementPolicy {
public:
    explicit HmPlacement(int hm_downsample) : downsample_(hm_downsample) {}
    std::optional<Placement> place(const PackingState& state, std::size_t object, const EpisodeContext& ctx) override;

private:
    int downsample_;
};

class StableHmPlacement final : public PlacementPolicy {
public:
    explicit StableHmPlacement(int hm_downsample) : downsample_(hm_downsample) {}
    std::optional<Placement> place(const PackingState& state, std::size_t object, const EpisodeContext& ctx) override;

private:
    int downsample_;
};

class PackItPlacement final : public PlacementPolicy {
public:
    std::optional<Placement> place(const PackingState& state, std::size_t object, const EpisodeContext& ctx) override;
};

class RandomPlacement final : public PlacementPolicy {
public:
    explicit RandomPlacement(std::uint64_t seed) : rng_(seed) {}
    std::optional<Placement> place(const PackingState& state, std::size_t object, const EpisodeContext& ctx) override;

private:
    Rng rng_;
};

}  // namespace packbench
