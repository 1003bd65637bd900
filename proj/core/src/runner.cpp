#include "packbench/runner.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "packbench/parallel.hpp"

namespace packbench {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double to_double(std::string_view key, std::string_view v) {
    v = trim(v);
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
        throw InvalidInput("config key '" + std::string(key) + "': not a number: '" + std::string(v) + "'");
    return out;
}

template <typename Int>
Int to_int(std::string_view key, std::string_view v) {
    v = trim(v);
    Int out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw InvalidInput("config key '" + std::string(key) + "': not an integer: '" + std::string(v) + "'");
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    v = trim(v);
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw InvalidInput("config key '" + std::string(key) + "': not a boolean: '" + std::string(v) + "'");
}

std::vector<std::string> to_list(std::string_view v) {
    std::vector<std::string> out;
    v = trim(v);
    while (!v.empty()) {
        const auto comma = v.find(',');
        const auto item = trim(v.substr(0, comma));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + v[k];
    return out;
}

struct Field {
    const char* name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define PB_DOUBLE(key, member)                                                        \
    Field {                                                                           \
        key, [](const ExperimentConfig& c) { return fmt_double(c.member); },          \
            [](ExperimentConfig& c, std::string_view v) { c.member = to_double(key, v); } \
    }
#define PB_ANGLE(key, member)                                                     \
    Field {                                                                       \
        key, [](const ExperimentConfig& c) { return fmt_double(c.member); },      \
            [](ExperimentConfig& c, std::string_view v) { c.member = parse_angle(v); } \
    }
#define PB_INT(key, member, T)                                                        \
    Field {                                                                           \
        key, [](const ExperimentConfig& c) { return std::to_string(c.member); },      \
            [](ExperimentConfig& c, std::string_view v) { c.member = to_int<T>(key, v); } \
    }
#define PB_BOOL(key, member)                                                            \
    Field {                                                                             \
        key, [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }, \
            [](ExperimentConfig& c, std::string_view v) { c.member = to_bool(key, v); }   \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        PB_DOUBLE("alpha", weights.alpha),
        PB_ANGLE("ang_tol", thresholds.ang_tol),
        PB_INT("batch_size", schedule.batch_size, int),
        PB_DOUBLE("beta", weights.beta),
        PB_DOUBLE("box_height_mm", box_height_mm),
        PB_DOUBLE("box_length_mm", box_length_mm),
        PB_DOUBLE("box_width_mm", box_width_mm),
        Field{"checkpoint", [](const ExperimentConfig& c) { return c.checkpoint; },
              [](ExperimentConfig& c, std::string_view v) { c.checkpoint = std::string(trim(v)); }},
        Field{"difficulty", [](const ExperimentConfig& c) { return std::string(difficulty_name(c.difficulty)); },
              [](ExperimentConfig& c, std::string_view v) { c.difficulty = difficulty_from_name(trim(v)); }},
        PB_DOUBLE("discount", schedule.discount),
        PB_INT("episodes", episodes, int),
        PB_DOUBLE("epsilon_end", schedule.epsilon_end),
        PB_DOUBLE("epsilon_start", schedule.epsilon_start),
        PB_DOUBLE("gamma", weights.gamma),
        PB_INT("hm_downsample", rules.hm_downsample, int),
        PB_DOUBLE("lr_end_fraction", schedule.lr_end_fraction),
        PB_DOUBLE("lr_stage1", schedule.lr_stage1),
        PB_DOUBLE("lr_stage2", schedule.lr_stage2),
        PB_INT("manager_hidden", hrl.manager_hidden, int),
        PB_INT("manager_resolution", hrl.manager_resolution, int),
        PB_INT("manager_update_period", schedule.manager_update_period, int),
        PB_INT("manager_width", hrl.manager_width, int),
        PB_BOOL("per_axis_scaling", per_axis_scaling),
        Field{"placement_rule", [](const ExperimentConfig& c) { return std::string(placement_rule_name(c.rules.placement_rule)); },
              [](ExperimentConfig& c, std::string_view v) {
                  const auto rule = placement_rule_from_name(trim(v));
                  if (rule == c.rules.placement_rule) return;
                  c.rules.placement_rule = rule;
                  c.planner = "custom";
              }},
        Field{"planner", [](const ExperimentConfig& c) { return c.planner; },
              [](ExperimentConfig& c, std::string_view v) { apply_preset(c, trim(v)); }},
        PB_INT("pool_size", pool_size, int),
        PB_DOUBLE("pos_tol_mm", thresholds.pos_tol_mm),
        PB_INT("replay_capacity", schedule.replay_capacity, std::size_t),
        PB_INT("resolution", resolution, int),
        PB_ANGLE("rp_interval", rp_interval),
        PB_INT("seed", seed, std::uint64_t),
        Field{"sequence_rule", [](const ExperimentConfig& c) { return std::string(sequence_rule_name(c.rules.sequence_rule)); },
              [](ExperimentConfig& c, std::string_view v) {
                  const auto rule = sequence_rule_from_name(trim(v));
                  if (rule == c.rules.sequence_rule) return;
                  c.rules.sequence_rule = rule;
                  c.planner = "custom";
              }},
        PB_BOOL("stability_constrained", rules.stability_constrained),
        Field{"stability_reward",
              [](const ExperimentConfig& c) {
                  return std::string(c.stability_reward == StabilityTerm::latest ? "latest" : "mean");
              },
              [](ExperimentConfig& c, std::string_view v) {
                  v = trim(v);
                  if (v == "latest") c.stability_reward = StabilityTerm::latest;
                  else if (v == "mean") c.stability_reward = StabilityTerm::mean;
                  else throw InvalidInput("config key 'stability_reward': expected 'latest' or 'mean'");
              }},
        PB_INT("stage1_epochs", schedule.stage1_epochs, int),
        PB_INT("stage2_epochs", schedule.stage2_epochs, int),
        Field{"sweep_axis", [](const ExperimentConfig& c) { return c.sweep_axis; },
              [](ExperimentConfig& c, std::string_view v) { c.sweep_axis = std::string(trim(v)); }},
        Field{"sweep_planners", [](const ExperimentConfig& c) { return join(c.sweep_planners); },
              [](ExperimentConfig& c, std::string_view v) { c.sweep_planners = to_list(v); }},
        Field{"sweep_values", [](const ExperimentConfig& c) { return join(c.sweep_values); },
              [](ExperimentConfig& c, std::string_view v) { c.sweep_values = to_list(v); }},
        PB_INT("target_refresh", schedule.target_refresh, int),
        Field{"task", [](const ExperimentConfig& c) { return std::string(c.task == Task::toy ? "toy" : "standard"); },
              [](ExperimentConfig& c, std::string_view v) {
                  v = trim(v);
                  if (v == "toy") c.task = Task::toy;
                  else if (v == "standard") c.task = Task::standard;
                  else throw InvalidInput("config key 'task': expected 'standard' or 'toy'");
              }},
        Field{"timing", [](const ExperimentConfig& c) { return std::string(c.timing ? "on" : "off"); },
              [](ExperimentConfig& c, std::string_view v) { c.timing = to_bool("timing", v); }},
        PB_INT("top_k", hrl.top_k, int),
        PB_INT("updates_per_epoch", schedule.updates_per_epoch, int),
        PB_INT("worker_resolution", hrl.worker_resolution, int),
        PB_INT("worker_update_period", schedule.worker_update_period, int),
        PB_INT("worker_width", hrl.worker_width, int),
        PB_ANGLE("yaw_interval", yaw_interval),
    };
    return table;
}

#undef PB_DOUBLE
#undef PB_ANGLE
#undef PB_INT
#undef PB_BOOL

const Field* find_field(std::string_view key) {
    for (const auto& f : fields())
        if (key == f.name) return &f;
    return nullptr;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

double parse_angle(std::string_view text) {
    std::string s;
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) s += static_cast<char>(std::tolower(ch));
    const auto pi = s.find("pi");
    if (pi == std::string::npos) return to_double("angle", s);
    double coef = 1.0, div = 1.0;
    const std::string head = s.substr(0, pi), tail = s.substr(pi + 2);
    if (!head.empty()) {
        if (head.back() != '*') throw InvalidInput("bad angle: " + std::string(text));
        coef = to_double("angle", head.substr(0, head.size() - 1));
    }
    if (!tail.empty()) {
        if (tail.front() != '/') throw InvalidInput("bad angle: " + std::string(text));
        div = to_double("angle", tail.substr(1));
        if (div == 0.0) throw InvalidInput("bad angle: " + std::string(text));
    }
    return coef * kPi / div;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
    const Field* f = find_field(trim(key));
    if (!f) throw InvalidInput("unknown config key '" + std::string(trim(key)) + "'");
    f->set(cfg, value);
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view l = line;
        if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
        l = trim(l);
        if (l.empty()) continue;
        const auto eq = l.find('=');
        if (eq == std::string_view::npos)
            throw InvalidInput("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key(trim(l.substr(0, eq)));
        if (!seen.insert(key).second)
            throw InvalidInput("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
        try {
            set_config_value(base, key, l.substr(eq + 1));
        } catch (const InvalidInput& e) {
            throw InvalidInput("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

ExperimentConfig read_config_file(const std::string& path, ExperimentConfig base) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string canonical_config(const ExperimentConfig& cfg) {
    std::map<std::string, std::string> kv;
    for (const auto& f : fields()) kv[f.name] = f.get(cfg);
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_config(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.emplace_back(f.name);
    return out;
}

std::vector<std::string> planner_presets() {
    return {"random", "bbox-hm", "packit", "stable-hm", "bbox-learned", "learned", "learned-hm"};
}

void apply_preset(ExperimentConfig& cfg, std::string_view name) {
    auto set = [&](SequenceRule s, PlacementRule p, bool stable) {
        cfg.rules.sequence_rule = s;
        cfg.rules.placement_rule = p;
        cfg.rules.stability_constrained = stable;
    };
    if (name == "random") set(SequenceRule::random, PlacementRule::random, false);
    else if (name == "bbox-hm") set(SequenceRule::bbox_volume_desc, PlacementRule::hm, false);
    else if (name == "packit") set(SequenceRule::bbox_volume_desc, PlacementRule::packit_blb, false);
    else if (name == "stable-hm") set(SequenceRule::bbox_volume_desc, PlacementRule::hm, true);
    else if (name == "bbox-learned") set(SequenceRule::bbox_volume_desc, PlacementRule::learned, false);
    else if (name == "learned") set(SequenceRule::learned, PlacementRule::learned, false);
    else if (name == "learned-hm") set(SequenceRule::learned, PlacementRule::hm, false);
    else if (name == "custom") return;
    else throw InvalidInput("unknown planner '" + std::string(name) + "'");
    cfg.planner = std::string(name);
}

double cell_mm(const ExperimentConfig& cfg) { return cfg.box_length_mm / cfg.resolution; }

void validate(const ExperimentConfig& cfg) {
    if (!(cfg.box_length_mm > 0 && cfg.box_width_mm > 0 && cfg.box_height_mm > 0))
        throw InvalidInput("box dimensions must be positive");
    if (cfg.resolution < 1) throw InvalidInput("resolution must be positive");
    const double cell = cell_mm(cfg);
    const double quanta = cell * kQuantaPerMm;
    if (std::abs(quanta - std::round(quanta)) > 1e-6)
        throw InvalidInput("cell size " + fmt_double(cell) + " mm is not a multiple of 0.1 mm");
    const double cols = cfg.box_width_mm / cell;
    if (std::abs(cols - std::round(cols)) > 1e-6) throw InvalidInput("box width is not a whole number of cells");
    const BoxSpec box = box_spec(cfg);
    const bool hm = cfg.rules.placement_rule == PlacementRule::hm;
    if (hm && (cfg.rules.hm_downsample < 1 || box.rows % std::min(cfg.rules.hm_downsample, box.rows) != 0 ||
               box.cols % std::min(cfg.rules.hm_downsample, box.cols) != 0))
        throw InvalidInput("hm_downsample must divide the box resolution");
    if (needs_learned(cfg)) {
        const int w = cfg.hrl.worker_resolution;
        if (w < 1 || box.rows % std::min(w, box.rows) != 0 || box.cols % std::min(w, box.cols) != 0)
            throw InvalidInput("worker_resolution must divide the box resolution");
    }
    if (cfg.hrl.top_k < 0) throw InvalidInput("top_k must be non-negative");
    if (cfg.hrl.manager_resolution < 1) throw InvalidInput("manager_resolution must be positive");
    if (cfg.weights.alpha < 0 || cfg.weights.beta < 0 || cfg.weights.gamma < 0)
        throw InvalidInput("objective weights must be non-negative");
    if (!(cfg.thresholds.pos_tol_mm > 0 && cfg.thresholds.ang_tol > 0))
        throw InvalidInput("stability thresholds must be positive");
    if (cfg.episodes < 1) throw InvalidInput("episodes must be positive");
    if (cfg.pool_size < 1) throw InvalidInput("pool_size must be positive");
    if (!(cfg.schedule.discount >= 0 && cfg.schedule.discount < 1)) throw InvalidInput("discount must be in [0, 1)");
    if (!(cfg.schedule.lr_end_fraction >= 0 && cfg.schedule.lr_end_fraction <= 1))
        throw InvalidInput("lr_end_fraction must be in [0, 1]");
    if (!cfg.sweep_axis.empty() && !find_field(cfg.sweep_axis))
        throw InvalidInput("sweep_axis names an unknown key '" + cfg.sweep_axis + "'");
    for (const auto& p : cfg.sweep_planners) {
        const auto presets = planner_presets();
        if (std::find(presets.begin(), presets.end(), p) == presets.end())
            throw InvalidInput("sweep_planners: unknown planner '" + p + "'");
    }
    orientation_grid(cfg);
}

BoxSpec box_spec(const ExperimentConfig& cfg) {
    const double cell = cell_mm(cfg);
    return {cfg.resolution, static_cast<int>(std::lround(cfg.box_width_mm / cell)), cell,
            mm_to_quanta(cfg.box_height_mm)};
}

EpisodeOptions episode_options(const ExperimentConfig& cfg) {
    return {cell_mm(cfg), cfg.box_length_mm, cfg.box_width_mm, cfg.box_height_mm, cfg.per_axis_scaling};
}

OrientationGrid orientation_grid(const ExperimentConfig& cfg) {
    return OrientationGrid::from_intervals(cfg.rp_interval, cfg.yaw_interval);
}

std::uint64_t episode_seed(const ExperimentConfig& cfg, std::uint64_t k) { return Rng::mix(cfg.seed, k); }

EpisodeSet make_episode_set(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.task == Task::toy) return generate_toy_episode(seed, cfg.pool_size, cell_mm(cfg));
    return generate_episode(seed, cfg.difficulty, cfg.pool_size, episode_options(cfg));
}

std::shared_ptr<const EpisodeContext> make_episode_context(const ExperimentConfig& cfg, std::uint64_t seed) {
    auto set = std::make_shared<const EpisodeSet>(make_episode_set(cfg, seed));
    return std::make_shared<const EpisodeContext>(make_context(std::move(set), orientation_grid(cfg), box_spec(cfg)));
}

bool needs_learned(const ExperimentConfig& cfg) {
    return cfg.rules.placement_rule == PlacementRule::learned ||
           (cfg.rules.sequence_rule == SequenceRule::learned && cfg.hrl.top_k > 0);
}

namespace {

std::map<std::string, std::string> parse_arch(const std::string& arch, const std::string& kind) {
    std::istringstream in(arch);
    std::string head;
    in >> head;
    if (head != kind) throw InvalidInput("checkpoint holds '" + head + "', expected '" + kind + "'");
    std::map<std::string, std::string> kv;
    for (std::string tok; in >> tok;) {
        const auto eq = tok.find('=');
        if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

int arch_int(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw InvalidInput("checkpoint descriptor lacks '" + key + "'");
    return to_int<int>(key, it->second);
}

}  // namespace

Policies load_policies(const ExperimentConfig& cfg) {
    if (cfg.checkpoint.empty()) throw InvalidInput("learned planner needs a checkpoint directory");
    const std::filesystem::path dir(cfg.checkpoint);
    const nn::Checkpoint w = nn::read_checkpoint((dir / "worker.pkqn").string());
    const nn::Checkpoint m = nn::read_checkpoint((dir / "manager.pkqn").string());
    const auto wa = parse_arch(w.arch, "worker-unet");
    const auto ma = parse_arch(m.arch, "manager-convfc");
    Policies p{nn::WorkerNet(arch_int(wa, "in"), arch_int(wa, "width")),
               nn::ManagerNet(arch_int(ma, "slots"), arch_int(ma, "in"), arch_int(ma, "width"), arch_int(ma, "hidden"))};
    if (p.worker.in_channels() != kWorkerChannels || p.manager.in_channels() != kManagerChannels)
        throw InvalidInput("checkpoint input channels do not match this build");
    if (w.params.size() != p.worker.param_count() || m.params.size() != p.manager.param_count())
        throw InvalidInput("checkpoint parameter count does not match its descriptor");
    if (cfg.hrl.top_k > p.manager.slots())
        throw InvalidInput("top_k exceeds the manager checkpoint's slot count");
    p.worker.params = w.params;
    p.manager.params = m.params;
    return p;
}

void save_policies(const ExperimentConfig& cfg, const Policies& p, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    nn::write_checkpoint((d / "worker.pkqn").string(), {p.worker.arch(), p.worker.params});
    nn::write_checkpoint((d / "manager.pkqn").string(), {p.manager.arch(), p.manager.params});
    const auto& s = cfg.schedule;
    nlohmann::json j;
    j["config_hash"] = config_hash(cfg);
    j["worker_arch"] = p.worker.arch();
    j["manager_arch"] = p.manager.arch();
    j["schedule"] = {{"stage1_epochs", s.stage1_epochs},
                     {"stage2_epochs", s.stage2_epochs},
                     {"worker_update_period", s.worker_update_period},
                     {"manager_update_period", s.manager_update_period},
                     {"updates_per_epoch", s.updates_per_epoch},
                     {"epsilon_start", s.epsilon_start},
                     {"epsilon_end", s.epsilon_end},
                     {"discount", s.discount},
                     {"replay_capacity", s.replay_capacity},
                     {"batch_size", s.batch_size},
                     {"lr_stage1", s.lr_stage1},
                     {"lr_end_fraction", s.lr_end_fraction},
                     {"lr_stage2", s.lr_stage2},
                     {"target_refresh", s.target_refresh}};
    write_file(d / "checkpoint.json", j.dump(2) + "\n");
}

Planner make_planner(const ExperimentConfig& cfg, const Policies* learned, std::uint64_t seed) {
    Planner p;
    const auto& r = cfg.rules;
    if ((r.placement_rule == PlacementRule::learned || (r.sequence_rule == SequenceRule::learned && cfg.hrl.top_k > 0)) &&
        !learned)
        throw InvalidInput("planner '" + cfg.planner + "' needs learned policies");
    switch (r.sequence_rule) {
        case SequenceRule::random: p.sequence = std::make_unique<RandomSequence>(Rng::mix(seed, 0x5e9)); break;
        case SequenceRule::bbox_volume_desc: p.sequence = std::make_unique<BBoxSequence>(); break;
        case SequenceRule::learned:
            if (cfg.hrl.top_k == 0) p.sequence = std::make_unique<BBoxSequence>();
            else p.sequence = std::make_unique<LearnedSequence>(learned->manager, cfg.hrl);
            break;
    }
    switch (r.placement_rule) {
        case PlacementRule::random: p.placement = std::make_unique<RandomPlacement>(Rng::mix(seed, 0x91a)); break;
        case PlacementRule::hm:
            if (r.stability_constrained) p.placement = std::make_unique<StableHmPlacement>(r.hm_downsample);
            else p.placement = std::make_unique<HmPlacement>(r.hm_downsample);
            break;
        case PlacementRule::packit_blb: p.placement = std::make_unique<PackItPlacement>(); break;
        case PlacementRule::learned: p.placement = std::make_unique<LearnedPlacement>(learned->worker, cfg.hrl); break;
    }
    return p;
}

std::vector<EpisodeRun> run_episodes(const ExperimentConfig& cfg, const Policies* learned, bool keep_frames) {
    validate(cfg);
    std::vector<EpisodeRun> runs(static_cast<std::size_t>(cfg.episodes));
    parallel_for(runs.size(), [&](std::size_t k) {
        EpisodeRun& run = runs[k];
        run.seed = episode_seed(cfg, k);
        run.ctx = make_episode_context(cfg, run.seed);
        Planner planner = make_planner(cfg, learned, run.seed);
        RunOptions opt;
        opt.weights = cfg.weights;
        opt.term = cfg.stability_reward;
        opt.timing = cfg.timing;
        opt.keep_frames = keep_frames;
        run.report = run_episode(*run.ctx, *planner.sequence, *planner.placement, opt);
    });
    return runs;
}

SweepRow aggregate(const ExperimentConfig& cfg, const std::string& label, const std::vector<EpisodeRun>& runs) {
    SweepRow row;
    row.planner = label;
    row.difficulty = cfg.difficulty;
    row.config_hash = config_hash(cfg);
    for (const auto& r : runs) {
        if (!r.report.error.empty()) {
            ++row.failures;
            continue;
        }
        const auto& m = r.report.metrics;
        row.mean.C += m.C;
        row.mean.P += m.P;
        row.mean.S += m.S;
        row.mean.packed_count += m.packed_count;
        row.mean.latency_per_object += m.latency_per_object;
        row.mean_j += r.report.j_final;
        ++row.episodes;
    }
    if (row.episodes > 0) {
        const double n = row.episodes;
        row.mean.C /= n;
        row.mean.P /= n;
        row.mean.S /= n;
        row.mean.latency_per_object /= n;
        row.mean_j /= n;
    }
    return row;
}

std::vector<std::pair<std::string, ExperimentConfig>> expand_sweep(const ExperimentConfig& cfg) {
    std::vector<std::string> planners = cfg.sweep_planners;
    if (planners.empty()) planners.push_back(cfg.planner);
    std::vector<std::string> values = cfg.sweep_values;
    if (cfg.sweep_axis.empty()) values = {""};
    if (!cfg.sweep_axis.empty() && values.empty()) throw InvalidInput("sweep_axis set without sweep_values");
    std::vector<std::pair<std::string, ExperimentConfig>> out;
    for (const auto& p : planners)
        for (const auto& v : values) {
            ExperimentConfig c = cfg;
            c.sweep_axis.clear();
            c.sweep_values.clear();
            c.sweep_planners.clear();
            apply_preset(c, p);
            std::string label = p;
            if (!cfg.sweep_axis.empty()) {
                set_config_value(c, cfg.sweep_axis, v);
                label += "@" + cfg.sweep_axis + "=" + v;
            }
            out.emplace_back(label, std::move(c));
        }
    return out;
}

std::vector<SweepRow> run_sweep(const std::vector<std::pair<std::string, ExperimentConfig>>& configs,
                                const Policies* learned) {
    std::vector<SweepRow> rows;
    for (const auto& [label, c] : configs) {
        std::vector<EpisodeRun> runs;
        try {
            runs = run_episodes(c, needs_learned(c) ? learned : nullptr);
        } catch (const std::exception&) {
            SweepRow row;
            row.planner = label;
            row.difficulty = c.difficulty;
            row.config_hash = config_hash(c);
            row.failures = c.episodes;
            rows.push_back(row);
            continue;
        }
        rows.push_back(aggregate(c, label, runs));
    }
    return rows;
}

std::string sweep_csv_header() { return "planner,difficulty,C,P,S,packed_count,latency_s,config_hash\n"; }

std::string sweep_csv_row(const SweepRow& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%.6f,%.4f,%.6g,%s\n", r.planner.c_str(),
                  std::string(difficulty_name(r.difficulty)).c_str(), r.mean.C, r.mean.P, r.mean.S,
                  r.episodes ? static_cast<double>(r.mean.packed_count) / r.episodes : 0.0,
                  r.mean.latency_per_object, r.config_hash.c_str());
    return buf;
}

namespace {

nlohmann::json metrics_json(const EpisodeReport& rep) {
    return {{"C", rep.metrics.C},
            {"P", rep.metrics.P},
            {"S", rep.metrics.S},
            {"packed_count", rep.metrics.packed_count},
            {"J", rep.j_final},
            {"termination", std::string(termination_name(rep.termination))},
            {"error", rep.error}};
}

}  // namespace

std::string plan_json(const ExperimentConfig& cfg, const EpisodeRun& run) {
    const EpisodeContext& ctx = *run.ctx;
    const double cell = ctx.box.cell_mm;
    nlohmann::json placements = nlohmann::json::array();
    for (std::size_t k = 0; k < run.report.plan.size(); ++k) {
        const Placement& p = run.report.plan[k];
        const OrientedShape* s = find_shape(ctx.shapes[p.object], p.i, p.j);
        const EulerAngles e = ctx.orientations.euler(p.i, p.j);
        const int r = s->footprint_rows(), c = s->footprint_cols();
        placements.push_back({{"object_id", ctx.episode->objects[p.object].id},
                              {"roll", e.roll},
                              {"pitch", e.pitch},
                              {"yaw", e.yaw},
                              {"x_mm", (footprint_origin(p.x, r) + r / 2.0) * cell},
                              {"y_mm", (footprint_origin(p.y, c) + c / 2.0) * cell},
                              {"z_mm", quanta_to_mm(p.z)},
                              {"step", k},
                              {"score", p.score}});
    }
    nlohmann::json j;
    j["config_hash"] = config_hash(cfg);
    j["config"] = canonical_config(cfg);
    j["episode_seed"] = run.seed;
    j["placements"] = std::move(placements);
    j["metrics"] = metrics_json(run.report);
    return j.dump(2) + "\n";
}

std::string heightmap_pgm(const Heightmap& map) {
    std::string out = "P5\n" + std::to_string(map.cols()) + " " + std::to_string(map.rows()) + "\n65535\n";
    for (int x = 0; x < map.rows(); ++x)
        for (int y = 0; y < map.cols(); ++y) {
            const auto v = static_cast<std::uint16_t>(std::clamp<Height>(map.at(x, y), 0, 65535));
            out += static_cast<char>(v >> 8);
            out += static_cast<char>(v & 0xff);
        }
    return out;
}

std::vector<Heightmap> replay_plan(std::string_view text) {
    const auto j = nlohmann::json::parse(text);
    const ExperimentConfig cfg = parse_config(j.at("config").get<std::string>());
    const auto ctx = make_episode_context(cfg, j.at("episode_seed").get<std::uint64_t>());
    const double cell = ctx->box.cell_mm;
    PackingState state = PackingState::empty(ctx->box, ctx->size());
    std::vector<Heightmap> frames{state.box};
    for (const auto& pj : j.at("placements")) {
        const std::string id = pj.at("object_id").get<std::string>();
        std::size_t object = ctx->size();
        for (std::size_t k = 0; k < ctx->size(); ++k)
            if (ctx->episode->objects[k].id == id) object = k;
        if (object == ctx->size()) throw InvalidInput("plan names an unknown object '" + id + "'");
        const auto i = ctx->orientations.rp_index(pj.at("roll").get<double>(), pj.at("pitch").get<double>());
        const auto jy = ctx->orientations.yaw_index(pj.at("yaw").get<double>());
        if (!i || !jy) throw InvalidInput("plan holds an orientation outside the grid");
        const OrientedShape* s = find_shape(ctx->shapes[object], *i, *jy);
        if (!s) throw InvalidInput("plan holds an orientation the object does not have");
        const int r = s->footprint_rows(), c = s->footprint_cols();
        const int x0 = static_cast<int>(std::lround(pj.at("x_mm").get<double>() / cell - r / 2.0));
        const int y0 = static_cast<int>(std::lround(pj.at("y_mm").get<double>() / cell - c / 2.0));
        Placement p{object, *i, *jy, footprint_center(x0, r), footprint_center(y0, c), 0, 0.0};
        p.z = compute_z(state.box, s->views.bottom, p.x, p.y);
        state = apply_placement(state, p, *s);
        frames.push_back(state.box);
    }
    return frames;
}

void export_plan(const ExperimentConfig& cfg, const EpisodeRun& run, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    const std::string text = plan_json(cfg, run);
    write_file(d / "plan.json", text);
    const std::vector<Heightmap> frames = run.report.frames.empty() ? replay_plan(text) : run.report.frames;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.pgm", k);
        write_file(d / name, heightmap_pgm(frames[k]));
    }
}

}  // namespace packbench
