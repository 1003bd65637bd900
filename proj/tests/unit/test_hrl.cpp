#include <cmath>
#include <map>

#include "doctest.h"
#include "packbench/hrl.hpp"
#include "support.hpp"

using namespace packbench;

namespace {

const BoxSpec kToyBox{10, 10, 20.0, 1200};

std::shared_ptr<const EpisodeContext> toy_context(std::uint64_t seed, int pool = 6) {
    auto set = std::make_shared<EpisodeSet>(generate_toy_episode(seed, pool, 20.0));
    return std::make_shared<const EpisodeContext>(make_context(std::move(set), pbt::right_angles(), kToyBox));
}

HrlConfig toy_cfg() {
    HrlConfig c;
    c.top_k = 6;
    c.worker_resolution = 10;
    c.worker_width = 4;
    c.manager_width = 4;
    c.manager_hidden = 8;
    c.manager_resolution = 8;
    return c;
}

TrainSchedule short_schedule() {
    TrainSchedule s;
    s.stage1_epochs = 4;
    s.stage2_epochs = 4;
    s.batch_size = 8;
    s.updates_per_epoch = 2;
    s.manager_update_period = 1;
    s.replay_capacity = 64;
    s.target_refresh = 3;
    return s;
}

EpisodeSource toy_source() {
    return [](std::uint64_t k) { return toy_context(Rng::mix(77, k)); };
}

/// Every legal cell of the view, in (shape, u, v) order.
std::vector<std::tuple<int, int, int>> legal_cells(const WorkerView& view) {
    std::vector<std::tuple<int, int, int>> out;
    for (std::size_t s = 0; s < view.shapes.size(); ++s)
        for (int u = 0; u < view.legal[s].rows(); ++u)
            for (int v = 0; v < view.legal[s].cols(); ++v)
                if (view.legal[s](u, v)) out.emplace_back(static_cast<int>(s), u, v);
    return out;
}

double chi_square(const std::map<int, int>& counts, int categories, int draws) {
    const double expect = static_cast<double>(draws) / categories;
    double chi = 0.0;
    for (int c = 0; c < categories; ++c) {
        const auto it = counts.find(c);
        const double n = it == counts.end() ? 0.0 : it->second;
        chi += (n - expect) * (n - expect) / expect;
    }
    return chi;
}

}  // namespace

TEST_CASE("manager greedy selection, exploration and a single live slot") {
    Rng rng(1);
    const std::vector<double> scores{0.2, 0.9, 0.1};
    const std::vector<std::uint8_t> all{1, 1, 1};
    CHECK(select_slot(scores, all, 0.0, rng) == 1);

    std::vector<double> shifted = scores;
    for (double& s : shifted) s += 123.5;
    CHECK(select_slot(shifted, all, 0.0, rng) == 1);

    const std::vector<std::uint8_t> no_best{1, 0, 1};
    CHECK(select_slot(scores, no_best, 0.0, rng) == 0);
    CHECK(select_slot(std::vector<double>{0.5, 0.5, 0.5}, all, 0.0, rng) == 0);

    const std::vector<std::uint8_t> live{1, 0, 1, 1, 0};
    const std::vector<double> five{5, 4, 3, 2, 1};
    std::map<int, int> counts;
    const int draws = 9000;
    for (int k = 0; k < draws; ++k) ++counts[select_slot(five, live, 1.0, rng)];
    CHECK(counts.count(1) == 0);
    CHECK(counts.count(4) == 0);
    std::map<int, int> dense{{0, counts[0]}, {1, counts[2]}, {2, counts[3]}};
    CHECK(chi_square(dense, 3, draws) < 13.82);  // 2 dof, p = 0.001

    const std::vector<std::uint8_t> one{0, 0, 1};
    for (double eps : {0.0, 0.5, 1.0}) CHECK(select_slot(scores, one, eps, rng) == 2);
    CHECK_THROWS_AS(select_slot(scores, std::vector<std::uint8_t>{0, 0, 0}, 0.0, rng), InvalidInput);
}

TEST_CASE("manager view keeps the top-K by bounding-box volume") {
    const auto ctx = toy_context(5, 8);
    HrlConfig cfg = toy_cfg();
    cfg.top_k = 3;
    PackingState state = PackingState::empty(kToyBox, ctx->episode->objects.size());
    std::vector<std::size_t> cands(ctx->episode->objects.size());
    for (std::size_t k = 0; k < cands.size(); ++k) cands[k] = k;

    const ManagerView view = manager_view(state, cands, *ctx, cfg, 5);
    REQUIRE(view.slot_objects.size() == 5);
    CHECK(view.live() == 3);
    CHECK(!view.slot_objects[3]);
    CHECK(!view.inputs[4]);
    const auto order = bbox_sequence(ctx->episode->objects, cands);
    for (int s = 0; s < 3; ++s) {
        CHECK(*view.slot_objects[s] == order[s]);
        CHECK(view.inputs[s]->c == kManagerChannels);
        CHECK(view.inputs[s]->h == cfg.manager_resolution);
    }

    const std::vector<std::size_t> two{cands[0], cands[1]};
    CHECK(manager_view(state, two, *ctx, cfg).live() == 2);
    CHECK_THROWS_AS(manager_view(state, cands, *ctx, cfg, 2), InvalidInput);

    nn::ManagerNet net(5, kManagerChannels, 4, 8);
    Rng rng(3);
    net.init(rng);
    const auto scores = net.forward(view.inputs);
    int best = 0;
    for (int s = 1; s < 3; ++s)
        if (scores[s] > scores[best]) best = s;
    CHECK(manager_select(view, net, 0.0, rng) == best);

    const ManagerView single = manager_view(state, std::vector<std::size_t>{cands[4]}, *ctx, cfg, 5);
    for (double eps : {0.0, 1.0}) CHECK(manager_select(single, net, eps, rng) == 0);
}

TEST_CASE("worker view, masked scores and greedy selection against enumeration") {
    const auto ctx = toy_context(9);
    const HrlConfig cfg = toy_cfg();
    PackingState state = PackingState::empty(kToyBox, ctx->episode->objects.size());
    const WorkerView view = worker_view(state, ctx->shapes[0], cfg.worker_resolution);
    REQUIRE(view.any_legal());
    for (std::size_t s = 0; s < view.shapes.size(); ++s) {
        CHECK(view.inputs[s].c == kWorkerChannels);
        if (s > 0) {
            const auto a = std::pair{view.shapes[s - 1]->rp_index, view.shapes[s - 1]->yaw_index};
            CHECK(a < std::pair{view.shapes[s]->rp_index, view.shapes[s]->yaw_index});
        }
    }

    nn::WorkerNet net(kWorkerChannels, 4);
    Rng rng(4);
    net.init(rng);
    for (double& p : net.params) p += rng.uniform(-0.2, 0.2);

    const ScoreMatrix scores = worker_scores(view, net);
    double best = -1e300;
    std::tuple<int, int, int> arg{};
    for (const auto& [s, u, v] : legal_cells(view)) {
        const double q = net.forward(view.inputs[s]).at(0, u, v);
        if (q > best) best = q, arg = {s, u, v};
    }
    for (std::size_t s = 0; s < view.shapes.size(); ++s)
        for (int u = 0; u < view.legal[s].rows(); ++u)
            for (int v = 0; v < view.legal[s].cols(); ++v)
                if (!view.legal[s](u, v)) CHECK(scores.scores[s](u, v) == 0.0);

    const auto a = worker_select(view, net, 0.0, rng);
    REQUIRE(a);
    CHECK(std::tuple{a->shape, a->u, a->v} == arg);
    CHECK(a->score == doctest::Approx(best));

    const Placement p = worker_placement(view, state, 0, *a);
    const OrientedShape* shape = find_shape(ctx->shapes[0], p.i, p.j);
    REQUIRE(shape);
    CHECK(is_legal(state.box, *shape, p.x, p.y, state.height_cap));
    CHECK(p.z == compute_z(state.box, shape->views.bottom, p.x, p.y));
}

TEST_CASE("worker ties go to the smallest cell and a lone legal cell is always taken") {
    const auto ctx = toy_context(10);
    const HrlConfig cfg = toy_cfg();
    PackingState state = PackingState::empty(kToyBox, ctx->episode->objects.size());
    WorkerView view = worker_view(state, ctx->shapes[0], cfg.worker_resolution);

    nn::WorkerNet flat(kWorkerChannels, 4);
    std::fill(flat.params.begin(), flat.params.end(), 0.0);
    flat.params.back() = 0.7;
    Rng rng(5);
    const auto cells = legal_cells(view);
    REQUIRE(cells.size() > 1);
    const auto t = worker_select(view, flat, 0.0, rng);
    REQUIRE(t);
    CHECK(std::tuple{t->shape, t->u, t->v} == cells.front());

    const auto [ls, lu, lv] = cells[cells.size() / 2];
    for (std::size_t s = 0; s < view.legal.size(); ++s)
        for (int u = 0; u < view.legal[s].rows(); ++u)
            for (int v = 0; v < view.legal[s].cols(); ++v)
                view.legal[s](u, v) = static_cast<int>(s) == ls && u == lu && v == lv;
    nn::WorkerNet net(kWorkerChannels, 4);
    net.init(rng);
    for (double eps : {0.0, 0.3, 1.0}) {
        const auto a = worker_select(view, net, eps, rng);
        REQUIRE(a);
        CHECK(std::tuple{a->shape, a->u, a->v} == std::tuple{ls, lu, lv});
    }

    for (auto& m : view.legal) std::fill(m.data().begin(), m.data().end(), 0);
    CHECK(!worker_select(view, net, 0.0, rng));
}

TEST_CASE("epsilon-greedy worker draws stay legal and cover the legal set") {
    const auto ctx = toy_context(12);
    const HrlConfig cfg = toy_cfg();
    PackingState state = PackingState::empty(kToyBox, ctx->episode->objects.size());
    const WorkerView view = worker_view(state, ctx->shapes[1], cfg.worker_resolution);
    nn::WorkerNet net(kWorkerChannels, 4);
    Rng rng(6);
    net.init(rng);
    const auto cells = legal_cells(view);
    std::map<std::tuple<int, int, int>, int> seen;
    for (int k = 0; k < 4000; ++k) {
        const auto a = worker_select(view, net, 1.0, rng);
        REQUIRE(a);
        REQUIRE(view.legal[a->shape](a->u, a->v));
        ++seen[{a->shape, a->u, a->v}];
    }
    CHECK(seen.size() == cells.size());
}

TEST_CASE("terminal transition at its target gives zero loss and leaves parameters unchanged") {
    const auto ctx = toy_context(13);
    const HrlConfig cfg = toy_cfg();
    nn::WorkerNet net(kWorkerChannels, 4);
    Rng rng(7);
    net.init(rng);
    PackingState state = PackingState::empty(kToyBox, ctx->episode->objects.size());
    const WorkerView view = worker_view(state, ctx->shapes[0], cfg.worker_resolution);
    const auto a = worker_select(view, net, 0.0, rng);
    REQUIRE(a);

    WorkerTransition t;
    t.ctx = ctx;
    t.state = state;
    t.object = 0;
    t.action = *a;
    t.reward = a->score;
    t.terminal = true;
    t.next_state = state;
    const WorkerTransition* batch[] = {&t};
    const auto before = net.params;
    nn::Adam opt(net.param_count());
    const nn::WorkerNet target = net;
    CHECK(worker_td_update(net, target, opt, batch, 0.9, 1e-2, cfg) == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(net.params == before);

    std::vector<double> grad(net.param_count(), 0.0);
    const std::vector<WorkerSample> samples{{view.inputs[a->shape], a->u, a->v, a->score}};
    CHECK(worker_loss(net, samples, grad) == doctest::Approx(0.0));
    for (double g : grad) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("one-step bandit with zero discount converges to the reward") {
    const auto ctx = toy_context(14);
    const HrlConfig cfg = toy_cfg();
    nn::WorkerNet net(kWorkerChannels, 4);
    Rng rng(8);
    net.init(rng);
    PackingState state = PackingState::empty(kToyBox, ctx->episode->objects.size());
    const WorkerView view = worker_view(state, ctx->shapes[0], cfg.worker_resolution);
    const auto a = worker_select(view, net, 0.0, rng);
    REQUIRE(a);

    const double reward = 0.37;
    WorkerTransition t;
    t.ctx = ctx;
    t.state = state;
    t.action = *a;
    t.reward = reward;
    t.next_state = state;
    t.next_object = 1;
    const WorkerTransition* batch[] = {&t};
    nn::Adam opt(net.param_count());
    const nn::WorkerNet target = net;
    for (int k = 0; k < 500; ++k) worker_td_update(net, target, opt, batch, 0.0, 1e-2, cfg);
    CHECK(std::abs(net.forward(view.inputs[a->shape]).at(0, a->u, a->v) - reward) < 1e-3);
}

TEST_CASE("manager bandit with zero discount converges to the reward") {
    const auto ctx = toy_context(15);
    const HrlConfig cfg = toy_cfg();
    nn::ManagerNet net(cfg.top_k, kManagerChannels, cfg.manager_width, cfg.manager_hidden);
    Rng rng(9);
    net.init(rng);
    PackingState state = PackingState::empty(kToyBox, ctx->episode->objects.size());
    ManagerTransition t;
    t.ctx = ctx;
    t.state = state;
    for (std::size_t k = 0; k < ctx->episode->objects.size(); ++k) t.candidates.push_back(k);
    t.slot = 2;
    t.reward = -0.25;
    t.next_state = state;
    t.next_candidates = t.candidates;
    const ManagerTransition* batch[] = {&t};
    nn::Adam opt(net.param_count());
    const nn::ManagerNet target = net;
    for (int k = 0; k < 500; ++k) manager_td_update(net, target, opt, batch, 0.0, 1e-2, cfg);
    const ManagerView view = manager_view(state, t.candidates, *ctx, cfg, net.slots());
    CHECK(std::abs(net.forward(view.inputs)[2] - t.reward) < 1e-3);
}

TEST_CASE("training with zero learning rates leaves both networks unchanged") {
    const HrlConfig cfg = toy_cfg();
    Policies p = make_policies(cfg, 1);
    const auto w = p.worker.params, m = p.manager.params;
    TrainSchedule s = short_schedule();
    s.lr_stage1 = s.lr_stage2 = 0.0;
    TrainOptions o;
    o.run_stage2 = true;
    const auto log = train(p, toy_source(), s, cfg, o, 2);
    CHECK(log.size() == 8);
    CHECK(p.worker.params == w);
    CHECK(p.manager.params == m);
}

TEST_CASE("training is reproducible and stage one leaves the manager untouched") {
    const HrlConfig cfg = toy_cfg();
    const TrainSchedule s = short_schedule();
    TrainOptions o;

    Policies a = make_policies(cfg, 1), b = make_policies(cfg, 1);
    const auto manager = a.manager.params, worker = a.worker.params;
    const auto la = train(a, toy_source(), s, cfg, o, 4);
    const auto lb = train(b, toy_source(), s, cfg, o, 4);
    CHECK(train_log_csv(la) == train_log_csv(lb));
    CHECK(a.worker.params == b.worker.params);
    CHECK(a.manager.params == manager);
    CHECK(a.worker.params != worker);
    for (const auto& r : la) CHECK(r.stage == TrainStage::worker_pretrain);

    o.run_stage1 = false;
    o.run_stage2 = true;
    const auto lc = train(a, toy_source(), s, cfg, o, 4);
    CHECK(lc.front().stage == TrainStage::joint);
    CHECK(a.manager.params != manager);
}

TEST_CASE("step rewards are consecutive objective differences under the learned policies") {
    const HrlConfig cfg = toy_cfg();
    const Policies p = make_policies(cfg, 6);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ctx = toy_context(100 + seed);
        LearnedSequence seq(p.manager, cfg, 0.2, seed);
        LearnedPlacement place(p.worker, cfg, 0.2, seed + 50);
        std::vector<std::pair<double, double>> steps;
        RunOptions ro;
        ro.timing = false;
        ro.observer = [&](const StepRecord& r) {
            if (r.placement) steps.emplace_back(r.j_before, r.j_after);
        };
        const EpisodeReport rep = run_episode(*ctx, seq, place, ro);
        REQUIRE(rep.rewards.size() == steps.size());
        REQUIRE(rep.j_trace.size() == steps.size() + 1);
        for (std::size_t k = 0; k < steps.size(); ++k) {
            CHECK(rep.rewards[k] == step_reward(steps[k].second, steps[k].first));
            CHECK(rep.rewards[k] == rep.j_trace[k + 1] - rep.j_trace[k]);
        }
        const auto audit = pbt::audit_scene(rep.final_state, *ctx);
        CHECK(audit.overlaps == 0);
        CHECK(audit.above_cap == 0);
        CHECK(audit.outside == 0);
        CHECK(audit.misaligned == 0);
    }
}

TEST_CASE("epsilon and step-size schedules, replay buffer and log format") {
    TrainSchedule s;
    CHECK(s.epsilon(0, 100) == doctest::Approx(0.5));
    CHECK(s.epsilon(25, 100) == doctest::Approx(0.275));
    CHECK(s.epsilon(50, 100) == doctest::Approx(0.05));
    CHECK(s.epsilon(99, 100) == doctest::Approx(0.05));
    for (int e = 1; e < 100; ++e) CHECK(s.epsilon(e, 100) <= s.epsilon(e - 1, 100));

    CHECK(s.lr(1e-3, 0, 100) == 1e-3);
    CHECK(s.lr(1e-3, 99, 100) == 1e-3);
    s.lr_end_fraction = 0.1;
    CHECK(s.lr(1e-3, 0, 100) == doctest::Approx(1e-3));
    CHECK(s.lr(1e-3, 99, 100) == doctest::Approx(1e-4));
    CHECK(s.lr(1e-3, 33, 67) == doctest::Approx(5.5e-4));
    CHECK(s.lr(1e-3, 0, 1) == 1e-3);

    ReplayBuffer<int> buf(3);
    for (int k = 0; k < 5; ++k) buf.push(k);
    CHECK(buf.size() == 3);
    std::vector<int> items = buf.items();
    std::sort(items.begin(), items.end());
    CHECK(items == std::vector<int>{2, 3, 4});
    Rng rng(1);
    for (const int* p : buf.sample(50, rng)) CHECK(*p >= 2);
    CHECK_THROWS_AS(ReplayBuffer<int>(0), InvalidInput);

    const std::vector<TrainLogRow> rows{{0, TrainStage::worker_pretrain, 0.5, 0.1, 0.01, 0.0, 0.5},
                                        {1, TrainStage::joint, 0.6, 0.2, 0.02, 0.03, 0.4}};
    const std::string csv = train_log_csv(rows);
    CHECK(csv.rfind("epoch,stage,mean_J,mean_reward,loss_worker,loss_manager,epsilon\n", 0) == 0);
    CHECK(csv.find("\n1,joint,0.6,") != std::string::npos);

    TrainSchedule bad;
    bad.batch_size = 0;
    Policies p = make_policies(toy_cfg(), 1);
    CHECK_THROWS_AS(train(p, toy_source(), bad, toy_cfg(), {}, 1), InvalidInput);
}
