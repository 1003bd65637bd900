// Acceptance checks for the library and the CLI. Prints one PASS/FAIL line
// per criterion and exits non-zero when any fails. Criterion numbers given
// as arguments restrict the run to those.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support.hpp"
#include "packbench/hrl.hpp"
#include "packbench/runner.hpp"

using namespace packbench;
namespace fs = std::filesystem;

namespace {

constexpr double kTelescopeTol = 1e-9;
constexpr double kBaselineRatio = 1.3;
constexpr double kGapTolerance = 0.9;
constexpr double kFdTol = 1e-3;
constexpr double kToyHmFraction = 0.9;
constexpr double kZSeconds = 10.0;
constexpr double kBaselineSeconds = 300.0;

struct Result {
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Result guarded(const std::function<Result()>& body) {
    const auto t0 = Clock::now();
    Result r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r = {false, std::string("exception: ") + e.what()};
    }
    r.seconds = since(t0);
    return r;
}

// Shared across the episode-level criteria.
struct EpisodeStats {
    int episodes = 0;
    double worst_telescope = 0.0;
    long states = 0;
    long c_above_p = 0;
};

EpisodeStats g_stats;

/// Runs one episode, checking telescoping and C <= P at every state.
EpisodeReport observed_episode(const ExperimentConfig& cfg, const EpisodeContext& ctx, const Policies* learned,
                               std::uint64_t seed) {
    Planner p = make_planner(cfg, learned, seed);
    RunOptions ro;
    ro.weights = cfg.weights;
    ro.term = cfg.stability_reward;
    ro.timing = false;
    ro.observer = [](const StepRecord& r) {
        ++g_stats.states;
        if (compactness(r.after) > pyramidality(r.after) + 1e-12) ++g_stats.c_above_p;
    };
    EpisodeReport rep = run_episode(ctx, *p.sequence, *p.placement, ro);
    double sum = 0.0;
    for (double r : rep.rewards) sum += r;
    ++g_stats.episodes;
    g_stats.worst_telescope = std::max(g_stats.worst_telescope, std::abs(sum - rep.j_final));
    return rep;
}

ExperimentConfig bench_config(const std::string& planner, Difficulty d, std::uint64_t seed, int episodes) {
    ExperimentConfig c;
    c.resolution = 50;
    c.difficulty = d;
    c.seed = seed;
    c.episodes = episodes;
    c.timing = false;
    c.hrl.worker_resolution = 25;
    c.hrl.worker_width = 8;
    apply_preset(c, planner);
    validate(c);
    return c;
}

Result criterion_1() {
    Rng rng(101);
    const auto t0 = Clock::now();
    int mismatches = 0, biggest = 0;
    for (int k = 0; k < 1000; ++k) {
        const VoxelGrid g = pbt::random_blob(rng, 12, 2000, 0.5);
        const auto d = g.dims();
        const int rows = d.nx + static_cast<int>(rng.below(31 - d.nx));
        const int cols = d.ny + static_cast<int>(rng.below(31 - d.ny));
        biggest = std::max(biggest, std::max(rows, cols));
        Heightmap terrain(rows, cols, 2.0);
        const Height top = static_cast<Height>(rng.below(400));
        for (int x = 0; x < rows; ++x)
            for (int y = 0; y < cols; ++y) terrain.at(x, y) = static_cast<Height>(rng.below(top + 1));
        const int x0 = static_cast<int>(rng.below(rows - d.nx + 1)), y0 = static_cast<int>(rng.below(cols - d.ny + 1));
        const ViewPair v = column_views(g);
        const Height z = compute_z(terrain, v.bottom, footprint_center(x0, d.nx), footprint_center(y0, d.ny));
        if (z != pbt::descending_drop(terrain, g, x0, y0)) ++mismatches;
    }
    const double s = since(t0);
    return {mismatches == 0 && s < kZSeconds,
            fmt("1000 cases up to %dx%d cells, %d mismatches, %.2f s (limit %.0f s)", biggest, biggest, mismatches, s,
                kZSeconds)};
}

Result criterion_2() {
    const std::vector<std::string> planners{"random", "bbox-hm", "packit", "stable-hm", "learned"};
    const Policies untrained = make_policies(bench_config("learned", Difficulty::easy, 0, 1).hrl, 5);
    pbt::VoxelAudit total;
    std::map<std::string, int> per_planner;
    for (int k = 0; k < 200; ++k) {
        const std::string& name = planners[k % planners.size()];
        const Difficulty d = (k / planners.size()) % 2 ? Difficulty::hard : Difficulty::easy;
        const ExperimentConfig cfg = bench_config(name, d, 9000 + k, 1);
        const auto ctx = make_episode_context(cfg, episode_seed(cfg, 0));
        const EpisodeReport rep = observed_episode(cfg, *ctx, &untrained, static_cast<std::uint64_t>(k));
        if (!rep.error.empty()) throw std::runtime_error(name + ": " + rep.error);
        const auto a = pbt::audit_scene(rep.final_state, *ctx);
        total.overlaps += a.overlaps;
        total.above_cap += a.above_cap;
        total.outside += a.outside;
        total.misaligned += a.misaligned;
        ++per_planner[name];
    }
    return {total.overlaps == 0 && total.above_cap == 0 && total.outside == 0 && total.misaligned == 0,
            fmt("200 episodes over %zu planners, easy and hard: %lld overlapping voxels, %lld above the cap, %lld "
                "outside, %lld misaligned",
                per_planner.size(), static_cast<long long>(total.overlaps), static_cast<long long>(total.above_cap),
                static_cast<long long>(total.outside), static_cast<long long>(total.misaligned))};
}

Result criterion_3() {
    return {g_stats.episodes > 0 && g_stats.worst_telescope < kTelescopeTol,
            fmt("%d episodes, max |sum r - J_final| = %.3g (limit %.0e)", g_stats.episodes, g_stats.worst_telescope,
                kTelescopeTol)};
}

Result criterion_4() {
    // 2 x 2 tiles of 10 x 10 x 5 cells, then a second layer of two 20 x 10 x 5 slabs.
    const BoxSpec box{20, 20, 2.0, 400};
    std::vector<VoxelGrid> grids(4, pbt::box_grid(10, 10, 5));
    grids.push_back(pbt::box_grid(20, 10, 5));
    grids.push_back(pbt::box_grid(20, 10, 5));
    const auto ctx = pbt::context_from_grids(grids, box, pbt::upright_only());
    PackingState s = PackingState::empty(box, grids.size());
    const std::vector<std::pair<int, int>> at{{5, 5}, {5, 15}, {15, 5}, {15, 15}, {10, 5}, {10, 15}};
    bool exact = true;
    for (std::size_t k = 0; k < grids.size(); ++k) {
        const OrientedShape& sh = ctx->shapes[k].front();
        const Height z = compute_z(s.box, sh.views.bottom, at[k].first, at[k].second);
        s = apply_placement(s, Placement{k, 0, 0, at[k].first, at[k].second, z, 0.0}, sh);
        if (k == 3 || k == 5) exact = exact && compactness(s) == 1.0 && pyramidality(s) == 1.0;
    }

    ExperimentConfig cfg;
    apply_preset(cfg, "bbox-hm");
    Planner p = make_planner(cfg, nullptr, 0);
    const EpisodeReport hm = run_episode(*ctx, *p.sequence, *p.placement, {});
    const bool hm_tiles = hm.metrics.C == 1.0 && hm.metrics.P == 1.0 && hm.metrics.packed_count == 6;

    return {exact && hm_tiles && g_stats.states > 0 && g_stats.c_above_p == 0,
            fmt("tilings give C = P = 1 exactly: %s (hand-placed), %s (hm); C <= P on %ld/%ld visited states",
                exact ? "yes" : "no", hm_tiles ? "yes" : "no", g_stats.states - g_stats.c_above_p, g_stats.states)};
}

struct PairedMeans {
    double c_random = 0.0, c_hm = 0.0;
    double n_random = 0.0, n_hm = 0.0;
};

PairedMeans paired(Difficulty d) {
    PairedMeans m;
    const int n = 50;
    for (const std::string name : {"random", "bbox-hm"}) {
        const ExperimentConfig cfg = bench_config(name, d, 11, n);
        double c = 0.0, count = 0.0;
        for (int k = 0; k < n; ++k) {
            const auto ctx = make_episode_context(cfg, episode_seed(cfg, static_cast<std::uint64_t>(k)));
            const EpisodeReport rep = observed_episode(cfg, *ctx, nullptr, cfg.seed);
            if (!rep.error.empty()) throw std::runtime_error(name + ": " + rep.error);
            c += rep.metrics.C;
            count += rep.metrics.packed_count;
        }
        (name == "random" ? m.c_random : m.c_hm) = c / n;
        (name == "random" ? m.n_random : m.n_hm) = count / n;
    }
    return m;
}

PairedMeans g_easy, g_hard;

Result criterion_5() {
    const auto t0 = Clock::now();
    g_easy = paired(Difficulty::easy);
    const double s = since(t0);
    const double ratio = g_easy.c_hm / g_easy.c_random;
    return {ratio >= kBaselineRatio && g_easy.n_hm > g_easy.n_random && s < kBaselineSeconds,
            fmt("50 paired easy episodes: C hm %.4f vs random %.4f (ratio %.3f, need >= %.1f); packed %.2f vs %.2f; "
                "%.1f s (limit %.0f s)",
                g_easy.c_hm, g_easy.c_random, ratio, kBaselineRatio, g_easy.n_hm, g_easy.n_random, s,
                kBaselineSeconds)};
}

Result criterion_6() {
    g_hard = paired(Difficulty::hard);
    const double easy_gap = g_easy.c_hm / g_easy.c_random - 1.0;
    const double hard_gap = g_hard.c_hm / g_hard.c_random - 1.0;
    return {easy_gap > 0.0 && hard_gap >= kGapTolerance * easy_gap,
            fmt("relative C gap easy %.3f, hard %.3f (C hm %.4f vs random %.4f); need hard >= %.1f x easy",
                easy_gap, hard_gap, g_hard.c_hm, g_hard.c_random, kGapTolerance)};
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

nn::Tensor random_tensor(Rng& rng, int c, int h, int w) {
    nn::Tensor t(c, h, w);
    for (double& v : t.v) v = rng.uniform(-1.0, 1.0);
    return t;
}

template <typename Net, typename Loss, typename Grad>
double fd_worst(Net& net, Loss loss, Grad grad) {
    std::vector<double> g(net.params.size(), 0.0);
    grad(g);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t k = 0; k < net.params.size(); ++k) {
        const double keep = net.params[k];
        net.params[k] = keep + h;
        const double up = loss();
        net.params[k] = keep - h;
        const double down = loss();
        net.params[k] = keep;
        worst = std::max(worst, rel_err(g[k], (up - down) / (2 * h)));
    }
    return worst;
}

Result criterion_7() {
    Rng rng(707);
    double worker_worst = 0.0, manager_worst = 0.0;
    std::size_t wp = 0, mp = 0;
    for (int point = 0; point < 10; ++point) {
        nn::WorkerNet w(kWorkerChannels, 4);
        for (double& p : w.params) p = rng.uniform(-0.5, 0.5);
        wp = w.params.size();
        const nn::Tensor x = random_tensor(rng, kWorkerChannels, 7, 9);
        const nn::Tensor wt = random_tensor(rng, 1, 7, 9);
        worker_worst = std::max(worker_worst, fd_worst(
            w,
            [&] {
                const nn::Tensor o = w.forward(x);
                double s = 0.0;
                for (std::size_t k = 0; k < o.v.size(); ++k) s += o.v[k] * wt.v[k];
                return s;
            },
            [&](std::vector<double>& g) {
                nn::WorkerNet::Cache c;
                w.forward(x, &c);
                w.backward(c, wt, g);
            }));

        nn::ManagerNet m(5, kManagerChannels, 4, 8);
        for (double& p : m.params) p = rng.uniform(-0.5, 0.5);
        mp = m.params.size();
        std::vector<std::optional<nn::Tensor>> in(5);
        for (int s = 0; s < 5; ++s)
            if (s != 3) in[s] = random_tensor(rng, kManagerChannels, 6, 6);
        std::vector<double> mw(5);
        for (double& v : mw) v = rng.uniform(-1.0, 1.0);
        manager_worst = std::max(manager_worst, fd_worst(
            m,
            [&] {
                const auto o = m.forward(in);
                double s = 0.0;
                for (int k = 0; k < 5; ++k) s += o[k] * mw[k];
                return s;
            },
            [&](std::vector<double>& g) {
                nn::ManagerNet::Cache c;
                m.forward(in, &c);
                m.backward(c, mw, g);
            }));
    }
    return {worker_worst < kFdTol && manager_worst < kFdTol,
            fmt("10 random parameter points; worst relative error worker %.2e (%zu params), manager %.2e (%zu "
                "params); limit %.0e",
                worker_worst, wp, manager_worst, mp, kFdTol)};
}

// Same settings as configs/toy.conf.
constexpr const char* kToyConfig =
    "task = toy\n"
    "box_length_mm = 200\n"
    "box_width_mm = 200\n"
    "box_height_mm = 120\n"
    "resolution = 10\n"
    "pool_size = 20\n"
    "worker_resolution = 10\n"
    "worker_width = 8\n"
    "top_k = 20\n"
    "stage1_epochs = 500\n"
    "batch_size = 128\n"
    "updates_per_epoch = 4\n"
    "discount = 0.9\n"
    "seed = 3\n"
    "episodes = 30\n"
    "timing = off\n";

Result criterion_8() {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = parse_config(kToyConfig);
    validate(cfg);
    Policies trained = make_policies(cfg.hrl, 1);
    const Policies untrained = trained;
    TrainOptions opt;
    opt.weights = cfg.weights;
    opt.term = cfg.stability_reward;
    const ExperimentConfig base = cfg;
    const EpisodeSource source = [&base](std::uint64_t k) {
        return make_episode_context(base, Rng::mix(base.seed ^ 0x7a11, k));
    };
    train(trained, source, cfg.schedule, cfg.hrl, opt, cfg.seed);
    const double train_s = since(t0);

    auto mean_j = [&](const std::string& planner, const Policies* p) {
        ExperimentConfig c = cfg;
        apply_preset(c, planner);
        double sum = 0.0;
        for (int k = 0; k < cfg.episodes; ++k) {
            const auto ctx = make_episode_context(c, episode_seed(c, static_cast<std::uint64_t>(k)));
            sum += observed_episode(c, *ctx, p, c.seed).j_final;
        }
        return sum / cfg.episodes;
    };
    const double learned = mean_j("bbox-learned", &trained);
    const double before = mean_j("bbox-learned", &untrained);
    const double hm = mean_j("bbox-hm", nullptr);
    return {learned > before && learned >= kToyHmFraction * hm,
            fmt("10x10 toy, %d stage-1 epochs in %.0f s; mean J over %d paired seeds: learned %.4f, untrained %.4f, "
                "hm %.4f (learned/hm %.3f, need >= %.1f)",
                cfg.schedule.stage1_epochs, train_s, cfg.episodes, learned, before, hm, learned / hm,
                kToyHmFraction)};
}

Result criterion_9() {
    using pbt::drop;
    using pbt::upright;
    const pbt::Scene full = drop(Heightmap(10, 10, 10.0), upright(pbt::box_grid(3, 3, 3, 10000)), 5, 5);
    Heightmap post(12, 12, 10.0);
    post.at(2, 5) = 500;
    const pbt::Scene overhang = drop(post, upright(pbt::box_grid(8, 1, 1, 10000)), footprint_center(2, 8), 5);
    Heightmap towers(12, 12, 10.0);
    for (int y = 3; y < 7; ++y) {
        towers.at(1, y) = 400;
        towers.at(8, y) = 400;
    }
    const pbt::Scene bridge =
        drop(towers, upright(pbt::box_grid(8, 4, 1, 10000)), footprint_center(1, 8), footprint_center(3, 4));
    const int s_full = pbt::check(full), s_over = pbt::check(overhang), s_bridge = pbt::check(bridge);
    const bool scenes = s_full == 1 && s_over == 0 && s_bridge == 1;

    Rng rng(909);
    const auto og = pbt::right_angles();
    int broken = 0, stable = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const VoxelGrid g = pbt::random_blob(rng, 5, 10000, 0.5);
        const int j = static_cast<int>(rng.below(4));
        const OrientedShape shape = orient_shape(g, og, 0, j);
        const int r = shape.footprint_rows(), c = shape.footprint_cols();
        const int rows = r + 6, cols = c + 6;
        Heightmap t(rows, cols, 10.0);
        for (int x = 0; x < rows; ++x)
            for (int y = 0; y < cols; ++y) t.at(x, y) = static_cast<Height>(100 * rng.below(4));
        const int x0 = static_cast<int>(rng.below(rows - r + 1)), y0 = static_cast<int>(rng.below(cols - c + 1));
        const pbt::Scene s = drop(t, shape, footprint_center(x0, r), footprint_center(y0, c));
        const int base = pbt::check(s);
        stable += base;

        const int dx = static_cast<int>(rng.below(7)), dy = static_cast<int>(rng.below(7));
        Heightmap moved(rows + dx + 3, cols + dy + 3, 10.0);
        for (int x = 0; x < rows; ++x)
            for (int y = 0; y < cols; ++y) moved.at(x + dx, y + dy) = t.at(x, y);
        const pbt::Scene ms = drop(moved, shape, footprint_center(x0 + dx, r), footprint_center(y0 + dy, c));

        Heightmap marker(rows, cols, 10.0);
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < c; ++b) marker.at(x0 + a, y0 + b) = 1;
        const Heightmap rm = pbt::rotate_map(marker);
        int nx0 = rm.rows(), ny0 = rm.cols();
        for (int x = 0; x < rm.rows(); ++x)
            for (int y = 0; y < rm.cols(); ++y)
                if (rm.at(x, y)) {
                    nx0 = std::min(nx0, x);
                    ny0 = std::min(ny0, y);
                }
        const pbt::Scene rs = drop(pbt::rotate_map(t), orient_shape(g, og, 0, (j + 1) % 4), footprint_center(nx0, c),
                                   footprint_center(ny0, r));
        if (ms.p.z != s.p.z || pbt::check(ms) != base || rs.p.z != s.p.z || pbt::check(rs) != base) ++broken;
    }
    return {scenes && broken == 0,
            fmt("full support / overhang / bridge give S = %d / %d / %d; %d of 100 random scenes change under "
                "translation or quarter turn (%d stable, %d unstable)",
                s_full, s_over, s_bridge, broken, stable, 100 - stable)};
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return out;
}

int run_cli(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd = std::string("\"") + PACKBENCH_CLI_PATH + "\" " + args + " > \"" + stdout_file.string() +
                            "\" 2> /dev/null";
    return std::system(cmd.c_str());
}

Result criterion_10() {
    const fs::path root = fs::temp_directory_path() / "packbench_acceptance_cli";
    fs::remove_all(root);
    const std::string toy =
        "--set task=toy --box 200x200x120 --resolution 10 --set pool_size=6 --set worker_resolution=10 "
        "--set worker_width=4 --set top_k=6 --set batch_size=8 --seed 2 --set timing=off";
    const fs::path ck = root / "checkpoint";
    struct Invocation {
        std::string name;
        std::function<std::string(const fs::path&)> args;
    };
    const std::vector<Invocation> calls{
        {"gen", [](const fs::path& d) { return "gen --resolution 50 --seed 4 --episodes 2 --voxels --out \"" +
                                               (d / "out").string() + "\""; }},
        {"pack", [](const fs::path& d) { return "pack --planner bbox-hm --resolution 50 --seed 4 --set timing=off "
                                                "--export \"" + (d / "out").string() + "\""; }},
        {"sweep", [](const fs::path& d) {
             return "sweep --resolution 50 --episodes 3 --seed 6 --set timing=off --set sweep_planners=random,packit "
                    "--set sweep_axis=difficulty --set sweep_values=easy,hard --out \"" + (d / "out" / "s.csv").string() +
                    "\"";
         }},
        {"train", [&](const fs::path&) { return "train " + toy + " --epochs 3 --checkpoint \"" + ck.string() + "\""; }},
        {"eval", [&](const fs::path& d) {
             return "eval " + toy + " --episodes 3 --planner bbox-learned --checkpoint \"" + ck.string() +
                    "\" --out \"" + (d / "out" / "e.csv").string() + "\"";
         }},
        {"render", [](const fs::path& d) {
             return "render \"" + (d.parent_path() / "pack" / "out" / "plan.json").string() + "\" --out \"" +
                    (d / "out").string() + "\"";
         }},
    };
    int identical = 0, files = 0;
    std::string bad;
    for (const auto& call : calls) {
        std::map<std::string, std::string> first;
        for (int pass = 0; pass < 2; ++pass) {
            const fs::path dir = root / call.name;
            fs::remove_all(dir);
            if (call.name == "train") fs::remove_all(ck);
            fs::create_directories(dir / "out");
            if (run_cli(call.args(dir), dir / "stdout.txt") != 0) {
                bad += " " + call.name + "(exit)";
                break;
            }
            auto tree = read_tree(dir);
            if (call.name == "train" || call.name == "eval") {
                for (auto& [k, v] : read_tree(ck)) tree["checkpoint/" + k] = v;
            }
            if (pass == 0) {
                first = std::move(tree);
                continue;
            }
            if (tree == first && tree.size() > 1) {
                ++identical;
                files += static_cast<int>(tree.size());
            } else {
                bad += " " + call.name;
            }
        }
    }
    fs::remove_all(root);
    return {identical == static_cast<int>(calls.size()),
            fmt("%d/%zu subcommands byte-identical across two runs (%d files incl. stdout)%s%s", identical,
                calls.size(), files, bad.empty() ? "" : "; differing:", bad.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, std::function<Result()>>> order{
        {1, criterion_1}, {2, criterion_2}, {5, criterion_5}, {6, criterion_6}, {7, criterion_7},
        {8, criterion_8}, {9, criterion_9}, {3, criterion_3}, {4, criterion_4}, {10, criterion_10}};
    std::set<int> only;
    for (int a = 1; a < argc; ++a) only.insert(std::atoi(argv[a]));
    std::map<int, Result> results;
    for (const auto& [n, f] : order) {
        if (!only.empty() && !only.count(n)) continue;
        results[n] = guarded(f);
        std::fprintf(stderr, "criterion %d done in %.1f s\n", n, results[n].seconds);
    }
    int failed = 0;
    for (const auto& [n, r] : results) {
        std::printf("%s criterion %2d: %s [%.1f s]\n", r.pass ? "PASS" : "FAIL", n, r.detail.c_str(), r.seconds);
        failed += !r.pass;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
    return failed ? 1 : 0;
}
