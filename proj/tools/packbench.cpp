#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "packbench/runner.hpp"
#include "packbench/voxel_io.hpp"

namespace fs = std::filesystem;
using namespace packbench;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string difficulty;
    std::optional<int> episodes;
    std::string box;
    std::optional<int> resolution;
    std::string planner;
    std::string checkpoint;

    void add_to(CLI::App* app) {
        app->add_option("--config", config_file, "Config file (key = value lines)");
        app->add_option("--set", sets, "Override one key, as key=value (repeatable)");
        app->add_option("--seed", seed, "Master seed");
        app->add_option("--difficulty", difficulty, "easy or hard")->check(CLI::IsMember({"easy", "hard"}));
        app->add_option("--episodes", episodes, "Number of episodes");
        app->add_option("--box", box, "Box size in mm, LxWxH");
        app->add_option("--resolution", resolution, "Cells along the box length");
        app->add_option("--checkpoint", checkpoint, "Checkpoint directory");
    }

    ExperimentConfig build() const {
        ExperimentConfig cfg = config_file.empty() ? ExperimentConfig{} : read_config_file(config_file);
        if (!planner.empty()) apply_preset(cfg, planner);
        if (seed) cfg.seed = *seed;
        if (!difficulty.empty()) cfg.difficulty = difficulty_from_name(difficulty);
        if (episodes) cfg.episodes = *episodes;
        if (resolution) cfg.resolution = *resolution;
        if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
        if (!box.empty()) {
            double l = 0, w = 0, h = 0;
            char x1 = 0, x2 = 0;
            std::istringstream in(box);
            if (!(in >> l >> x1 >> w >> x2 >> h) || x1 != 'x' || x2 != 'x' || !in.eof())
                throw InvalidInput("--box expects LxWxH in mm, got '" + box + "'");
            cfg.box_length_mm = l;
            cfg.box_width_mm = w;
            cfg.box_height_mm = h;
        }
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got '" + s + "'");
            set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
        }
        validate(cfg);
        return cfg;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::optional<Policies> maybe_load(const ExperimentConfig& cfg) {
    if (!needs_learned(cfg)) return std::nullopt;
    return load_policies(cfg);
}

void print_rows(const std::vector<SweepRow>& rows, const std::string& out) {
    std::string csv = sweep_csv_header();
    for (const auto& r : rows) csv += sweep_csv_row(r);
    std::cout << csv;
    if (!out.empty()) write_text(out, csv);
}

int cmd_gen(const Common& c, const std::string& out, bool voxels) {
    const ExperimentConfig cfg = c.build();
    fs::create_directories(out);
    for (int k = 0; k < cfg.episodes; ++k) {
        const std::uint64_t seed = episode_seed(cfg, static_cast<std::uint64_t>(k));
        const EpisodeSet e = make_episode_set(cfg, seed);
        char name[32];
        std::snprintf(name, sizeof name, "episode_%03d", k);
        write_text(fs::path(out) / (std::string(name) + ".json"), episode_to_json(e, cell_mm(cfg)));
        if (voxels) {
            const fs::path dir = fs::path(out) / name;
            fs::create_directories(dir);
            for (const auto& obj : e.objects) write_pkvx_file((dir / (obj.id + ".pkvx")).string(), obj.grid);
        }
        std::cout << name << " seed=" << seed << " objects=" << e.objects.size() << "\n";
    }
    return 0;
}

int cmd_pack(const Common& c, const std::string& export_dir) {
    ExperimentConfig cfg = c.build();
    cfg.episodes = 1;
    const auto learned = maybe_load(cfg);
    auto runs = run_episodes(cfg, learned ? &*learned : nullptr, !export_dir.empty());
    const EpisodeRun& run = runs.front();
    if (!export_dir.empty()) export_plan(cfg, run, export_dir);
    print_rows({aggregate(cfg, cfg.planner, runs)}, "");
    std::cerr << "termination=" << termination_name(run.report.termination) << " J=" << run.report.j_final << "\n";
    if (!run.report.error.empty()) {
        std::cerr << "planner error: " << run.report.error << "\n";
        return 1;
    }
    return 0;
}

int cmd_train(const Common& c, const std::string& stage, std::optional<int> epochs, std::uint64_t init_seed) {
    ExperimentConfig cfg = c.build();
    if (cfg.checkpoint.empty()) throw InvalidInput("train needs --checkpoint");
    TrainOptions opt;
    opt.weights = cfg.weights;
    opt.term = cfg.stability_reward;
    opt.run_stage1 = stage == "1" || stage == "both";
    opt.run_stage2 = stage == "2" || stage == "both";
    if (epochs) {
        if (opt.run_stage1) cfg.schedule.stage1_epochs = *epochs;
        if (opt.run_stage2) cfg.schedule.stage2_epochs = *epochs;
    }
    Policies p = opt.run_stage1 ? make_policies(cfg.hrl, init_seed) : load_policies(cfg);
    const ExperimentConfig base = cfg;
    const EpisodeSource source = [&base](std::uint64_t k) {
        return make_episode_context(base, Rng::mix(base.seed ^ 0x7a11, k));
    };
    const auto log = train(p, source, cfg.schedule, cfg.hrl, opt, cfg.seed);
    save_policies(cfg, p, cfg.checkpoint);
    write_text(fs::path(cfg.checkpoint) / "train_log.csv", train_log_csv(log));
    if (!log.empty())
        std::cout << "epochs=" << log.size() << " final_mean_J=" << log.back().mean_j << " checkpoint=" << cfg.checkpoint
                  << "\n";
    return 0;
}

int cmd_eval(const Common& c, std::vector<std::string> baselines, const std::string& out) {
    const ExperimentConfig cfg = c.build();
    const Policies learned = load_policies(cfg);
    std::vector<SweepRow> rows;
    std::vector<std::string> planners{cfg.planner};
    planners.insert(planners.end(), baselines.begin(), baselines.end());
    for (const auto& name : planners) {
        ExperimentConfig pc = cfg;
        apply_preset(pc, name);
        rows.push_back(aggregate(pc, name, run_episodes(pc, needs_learned(pc) ? &learned : nullptr)));
    }
    print_rows(rows, out);
    return 0;
}

int cmd_sweep(const Common& c, const std::string& out) {
    const ExperimentConfig cfg = c.build();
    const auto configs = expand_sweep(cfg);
    std::optional<Policies> learned;
    for (const auto& [label, pc] : configs)
        if (needs_learned(pc) && !learned) learned = load_policies(pc);
    print_rows(run_sweep(configs, learned ? &*learned : nullptr), out);
    return 0;
}

int cmd_render(const std::string& plan, const std::string& out) {
    const auto frames = replay_plan(read_text(plan));
    fs::create_directories(out);
    for (std::size_t k = 0; k < frames.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.pgm", k);
        write_text(fs::path(out) / name, heightmap_pgm(frames[k]));
    }
    std::cout << frames.size() << " frames -> " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heightmap-based 3D packing planners and benchmarks"};
    app.require_subcommand(1);

    Common gen_c, pack_c, train_c, eval_c, sweep_c;

    auto* gen = app.add_subcommand("gen", "Generate episode pools");
    gen_c.add_to(gen);
    std::string gen_out = "episodes";
    bool gen_voxels = false;
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_flag("--voxels", gen_voxels, "Also write one PKVX file per object");

    auto* pack = app.add_subcommand("pack", "Run one episode");
    pack_c.add_to(pack);
    pack->add_option("--planner", pack_c.planner, "Planner preset")->check(CLI::IsMember(planner_presets()));
    std::string pack_export;
    pack->add_option("--export", pack_export, "Write plan.json and PGM frames here");

    auto* tr = app.add_subcommand("train", "Train the learned planner");
    train_c.add_to(tr);
    std::string stage = "1";
    std::optional<int> epochs;
    std::uint64_t init_seed = 1;
    tr->add_option("--stage", stage, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));
    tr->add_option("--epochs", epochs, "Epochs for the selected stage(s)");
    tr->add_option("--init-seed", init_seed, "Seed for network initialization");

    auto* ev = app.add_subcommand("eval", "Compare a checkpoint against baselines");
    eval_c.add_to(ev);
    eval_c.planner = "learned";
    std::vector<std::string> baselines{"random", "bbox-hm", "packit", "stable-hm"};
    std::string eval_out;
    ev->add_option("--planner", eval_c.planner, "Learned preset")->check(CLI::IsMember(planner_presets()));
    ev->add_option("--baselines", baselines, "Baseline presets")->delimiter(',');
    ev->add_option("--out", eval_out, "Also write the CSV here");

    auto* sw = app.add_subcommand("sweep", "Run a config-driven sweep");
    sweep_c.add_to(sw);
    std::string sweep_out;
    sw->add_option("--out", sweep_out, "Also write the CSV here");

    auto* rd = app.add_subcommand("render", "Replay a plan into PGM frames");
    std::string plan, render_out = "frames";
    rd->add_option("plan", plan, "plan.json")->required();
    rd->add_option("--out", render_out, "Output directory");

    auto* keys = app.add_subcommand("keys", "List config keys with their defaults");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) return cmd_gen(gen_c, gen_out, gen_voxels);
        if (*pack) return cmd_pack(pack_c, pack_export);
        if (*tr) return cmd_train(train_c, stage, epochs, init_seed);
        if (*ev) return cmd_eval(eval_c, baselines, eval_out);
        if (*sw) return cmd_sweep(sweep_c, sweep_out);
        if (*rd) return cmd_render(plan, render_out);
        if (*keys) {
            std::cout << canonical_config(ExperimentConfig{});
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
