#pragma once

// Experiment configuration, planner construction, episode batches, sweeps,
// and plan/heightmap export.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "packbench/episode.hpp"
#include "packbench/hrl.hpp"
#include "packbench/planners.hpp"
#include "packbench/rewards.hpp"
#include "packbench/shapes.hpp"

namespace packbench {

enum class Task { standard, toy };

struct ExperimentConfig {
    double box_length_mm = 400.0;
    double box_width_mm = 400.0;
    double box_height_mm = 300.0;
    int resolution = 200;  // cells along the box length

    std::string planner = "bbox-hm";
    PlannerConfig rules;
    double rp_interval = kPi / 2;
    double yaw_interval = kPi / 2;
    HrlConfig hrl;
    ObjectiveWeights weights;
    StabilityThresholds thresholds;
    StabilityTerm stability_reward = StabilityTerm::latest;

    int episodes = 1;
    std::uint64_t seed = 0;
    Difficulty difficulty = Difficulty::easy;
    int pool_size = kDefaultPoolSize;
    bool per_axis_scaling = false;
    Task task = Task::standard;

    std::string checkpoint;
    bool timing = true;
    TrainSchedule schedule;

    std::string sweep_axis;
    std::vector<std::string> sweep_values;
    std::vector<std::string> sweep_planners;
};

/// Flat "key = value" text; '#' starts a comment. Unknown or repeated keys
/// are rejected. Starts from `base` (defaults when omitted).
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig read_config_file(const std::string& path, ExperimentConfig base = {});

/// Sets one key. Planner presets (key "planner") also set the rules.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Every key with its value, one "key = value" line each, sorted by key.
std::string canonical_config(const ExperimentConfig& cfg);

/// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::vector<std::string> config_keys();

/// Throws InvalidInput describing the first problem found.
void validate(const ExperimentConfig& cfg);

/// Planner presets: random, bbox-hm, packit, stable-hm, bbox-learned,
/// learned, learned-hm.
std::vector<std::string> planner_presets();
void apply_preset(ExperimentConfig& cfg, std::string_view name);

/// Parses "pi/2", "2*pi/3", "pi" or a plain number of radians.
double parse_angle(std::string_view text);

double cell_mm(const ExperimentConfig& cfg);
BoxSpec box_spec(const ExperimentConfig& cfg);
EpisodeOptions episode_options(const ExperimentConfig& cfg);
OrientationGrid orientation_grid(const ExperimentConfig& cfg);

/// Seed of episode k; shared by every planner (paired seeds).
std::uint64_t episode_seed(const ExperimentConfig& cfg, std::uint64_t k);
EpisodeSet make_episode_set(const ExperimentConfig& cfg, std::uint64_t seed);
std::shared_ptr<const EpisodeContext> make_episode_context(const ExperimentConfig& cfg, std::uint64_t seed);

bool needs_learned(const ExperimentConfig& cfg);

/// Loads worker.pkqn and manager.pkqn from cfg.checkpoint. Architectures must
/// match the configuration.
Policies load_policies(const ExperimentConfig& cfg);
void save_policies(const ExperimentConfig& cfg, const Policies& p, const std::string& dir);

struct Planner {
    std::unique_ptr<SequencePolicy> sequence;
    std::unique_ptr<PlacementPolicy> placement;
};

/// `learned` is required when the rules name a learned component.
Planner make_planner(const ExperimentConfig& cfg, const Policies* learned, std::uint64_t seed);

struct EpisodeRun {
    std::uint64_t seed = 0;
    EpisodeReport report;
    std::shared_ptr<const EpisodeContext> ctx;
};

/// Runs cfg.episodes episodes (in parallel) with keep_frames as given.
std::vector<EpisodeRun> run_episodes(const ExperimentConfig& cfg, const Policies* learned, bool keep_frames = false);

struct SweepRow {
    std::string planner;
    Difficulty difficulty = Difficulty::easy;
    MetricsRecord mean;
    double mean_j = 0.0;
    int episodes = 0;
    int failures = 0;
    std::string config_hash;
};

SweepRow aggregate(const ExperimentConfig& cfg, const std::string& label, const std::vector<EpisodeRun>& runs);

/// Expands sweep_planners x sweep_values (over sweep_axis) into labeled configs.
std::vector<std::pair<std::string, ExperimentConfig>> expand_sweep(const ExperimentConfig& cfg);

std::vector<SweepRow> run_sweep(const std::vector<std::pair<std::string, ExperimentConfig>>& configs,
                                const Policies* learned);

std::string sweep_csv_header();
std::string sweep_csv_row(const SweepRow& row);

/// Plan JSON: config hash and text, episode seed, placements, metrics.
/// Latency is left out so the file depends only on the inputs.
std::string plan_json(const ExperimentConfig& cfg, const EpisodeRun& run);

/// Binary PGM (P5, maxval 65535, big-endian), one gray level per height quantum.
std::string heightmap_pgm(const Heightmap& map);

/// Writes plan.json and frame_000.pgm ... into dir (created if needed).
void export_plan(const ExperimentConfig& cfg, const EpisodeRun& run, const std::string& dir);

/// Rebuilds the frames of a plan JSON by replaying its placements.
std::vector<Heightmap> replay_plan(std::string_view plan_json_text);

}  // namespace packbench
