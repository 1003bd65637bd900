#include "packbench/hrl.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <tuple>

namespace packbench {

bool WorkerView::any_legal() const {
    for (const auto& m : legal)
        for (auto v : m.data())
            if (v) return true;
    return false;
}

WorkerView worker_view(const PackingState& state, std::span<const OrientedShape> shapes, int resolution) {
    const Heightmap& box = state.box;
    const int rows = box.rows(), cols = box.cols();
    const int rx = std::min(resolution, rows), ry = std::min(resolution, cols);
    WorkerView view;
    view.xs = coarse_positions(rows, rx);
    view.ys = coarse_positions(cols, ry);
    const int sx = rows / rx, sy = cols / ry;
    const double cap = std::max<Height>(1, state.height_cap);

    nn::Tensor base(kWorkerChannels, rx, ry);
    for (int u = 0; u < rx; ++u)
        for (int v = 0; v < ry; ++v) {
            Height m = 0;
            for (int a = u * sx; a < (u + 1) * sx; ++a)
                for (int b = v * sy; b < (v + 1) * sy; ++b) m = std::max(m, box.at(a, b));
            base.at(0, u, v) = m / cap;
        }

    for (const auto& s : shapes) view.shapes.push_back(&s);
    std::sort(view.shapes.begin(), view.shapes.end(), [](const OrientedShape* a, const OrientedShape* b) {
        return std::tie(a->rp_index, a->yaw_index) < std::tie(b->rp_index, b->yaw_index);
    });

    for (const OrientedShape* s : view.shapes) {
        nn::Tensor t = base;
        Mask legal(rx, ry, 0);
        const auto& top = s->views.top;
        const auto& bottom = s->views.bottom;
        const int r = top.rows(), c = top.cols();
        for (int u = 0; u < rx; ++u)
            for (int v = 0; v < ry; ++v) {
                const int x = view.xs[u], y = view.ys[v];
                if (!footprint_fits(box, r, c, x, y)) continue;
                const int x0 = footprint_origin(x, r), y0 = footprint_origin(y, c);
                const Height z = drop_height(box, bottom, x0, y0);
                double gap = 0.0;
                int n = 0;
                for (int a = 0; a < r; ++a)
                    for (int b = 0; b < c; ++b) {
                        if (top.at(a, b) == 0) continue;
                        gap += z + bottom.at(a, b) - box.at(x0 + a, y0 + b);
                        ++n;
                    }
                int ring = 0, touching = 0;
                for (int a = -1; a <= r; ++a)
                    for (int b = -1; b <= c; ++b) {
                        if (a >= 0 && a < r && b >= 0 && b < c) continue;
                        if ((a < 0 || a >= r) && (b < 0 || b >= c)) continue;
                        ++ring;
                        const int bx = x0 + a, by = y0 + b;
                        if (bx < 0 || by < 0 || bx >= rows || by >= cols || box.at(bx, by) > z) ++touching;
                    }
                const bool ok = z + s->peak <= state.height_cap;
                t.at(1, u, v) = z / cap;
                t.at(2, u, v) = (z + s->peak) / cap;
                t.at(3, u, v) = n ? gap / n / cap : 0.0;
                t.at(4, u, v) = ring ? static_cast<double>(touching) / ring : 0.0;
                t.at(5, u, v) = ok ? 1.0 : 0.0;
                legal(u, v) = ok ? 1 : 0;
            }
        view.inputs.push_back(std::move(t));
        view.legal.push_back(std::move(legal));
    }
    return view;
}

Placement worker_placement(const WorkerView& view, const PackingState& state, std::size_t object,
                           const WorkerAction& a) {
    const OrientedShape& s = *view.shapes.at(a.shape);
    const int x = view.xs.at(a.u), y = view.ys.at(a.v);
    return {object, s.rp_index, s.yaw_index, x, y, compute_z(state.box, s.views.bottom, x, y), a.score};
}

ScoreMatrix worker_scores(const WorkerView& view, const nn::WorkerNet& net) {
    ScoreMatrix m;
    for (std::size_t k = 0; k < view.inputs.size(); ++k) {
        const nn::Tensor out = net.forward(view.inputs[k]);
        Grid2<double> g(out.h, out.w);
        std::copy(out.v.begin(), out.v.end(), g.data().begin());
        m.scores.push_back(std::move(g));
        m.legal.push_back(view.legal[k]);
    }
    m.mask_illegal();
    return m;
}

std::optional<WorkerAction> worker_select(const WorkerView& view, const nn::WorkerNet& net, double epsilon, Rng& rng) {
    const int rx = static_cast<int>(view.xs.size()), ry = static_cast<int>(view.ys.size());
    const int res = std::max(rx, ry);
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
        std::vector<WorkerAction> legal;
        for (std::size_t k = 0; k < view.legal.size(); ++k)
            for (int u = 0; u < rx; ++u)
                for (int v = 0; v < ry; ++v)
                    if (view.legal[k](u, v)) legal.push_back({static_cast<int>(k), u, v, 0.0, res});
        if (legal.empty()) return std::nullopt;
        return legal[rng.below(legal.size())];
    }
    std::optional<WorkerAction> best;
    for (std::size_t k = 0; k < view.inputs.size(); ++k) {
        bool any = false;
        for (auto v : view.legal[k].data()) any = any || v;
        if (!any) continue;
        const nn::Tensor out = net.forward(view.inputs[k]);
        for (int u = 0; u < rx; ++u)
            for (int v = 0; v < ry; ++v) {
                if (!view.legal[k](u, v)) continue;
                const double s = out.at(0, u, v);
                if (!best || s > best->score) best = WorkerAction{static_cast<int>(k), u, v, s, res};
            }
    }
    return best;
}

std::size_t ManagerView::live() const {
    return static_cast<std::size_t>(std::count_if(slot_objects.begin(), slot_objects.end(),
                                                  [](const auto& o) { return o.has_value(); }));
}

namespace {

// Max-pools a map onto a res x res canvas spanning ref_rows x ref_cols cells;
// cells beyond the reference extent are dropped.
void pool_into(nn::Tensor& t, int channel, const Heightmap& map, int ref_rows, int ref_cols, double cap) {
    const int res_r = t.h, res_c = t.w;
    for (int a = 0; a < std::min(map.rows(), ref_rows); ++a)
        for (int b = 0; b < std::min(map.cols(), ref_cols); ++b) {
            const Height h = map.at(a, b);
            if (h == kNoSupport) continue;
            double& dst = t.at(channel, a * res_r / ref_rows, b * res_c / ref_cols);
            dst = std::max(dst, h / cap);
        }
}

}  // namespace

ManagerView manager_view(const PackingState& state, std::span<const std::size_t> candidates,
                         const EpisodeContext& ctx, const HrlConfig& cfg, int slots) {
    if (cfg.top_k < 1) throw InvalidInput("manager_view: top_k must be positive");
    if (slots == 0) slots = cfg.top_k;
    if (slots < cfg.top_k) throw InvalidInput("manager_view: fewer scorer slots than top_k");
    const int res = cfg.manager_resolution;
    const int rows = state.box.rows(), cols = state.box.cols();
    const double cap = std::max<Height>(1, state.height_cap);
    nn::Tensor box_plane(1, res, res);
    pool_into(box_plane, 0, state.box, rows, cols, cap);

    ManagerView view;
    view.slot_objects.assign(slots, std::nullopt);
    view.inputs.assign(slots, std::nullopt);
    const auto order = bbox_sequence(ctx.episode->objects, candidates);
    for (std::size_t s = 0; s < order.size() && s < static_cast<std::size_t>(cfg.top_k); ++s) {
        const ObjectModel& m = ctx.episode->objects[order[s]];
        nn::Tensor t(kManagerChannels, res, res);
        for (int v = 0; v < 6; ++v) pool_into(t, v, m.principal_views[v], rows, cols, cap);
        std::copy(box_plane.v.begin(), box_plane.v.end(), t.v.begin() + 6 * static_cast<std::ptrdiff_t>(t.plane()));
        view.slot_objects[s] = order[s];
        view.inputs[s] = std::move(t);
    }
    return view;
}

int select_slot(std::span<const double> scores, std::span<const std::uint8_t> live, double epsilon, Rng& rng) {
    std::vector<int> alive;
    for (std::size_t s = 0; s < live.size(); ++s)
        if (live[s]) alive.push_back(static_cast<int>(s));
    if (alive.empty()) throw InvalidInput("manager_select: no live candidate");
    if (epsilon > 0.0 && rng.uniform() < epsilon) return alive[rng.below(alive.size())];
    int best = alive.front();
    for (int s : alive)
        if (scores[s] > scores[best]) best = s;
    return best;
}

int manager_select(const ManagerView& view, const nn::ManagerNet& net, double epsilon, Rng& rng) {
    std::vector<std::uint8_t> live(view.slot_objects.size());
    for (std::size_t s = 0; s < live.size(); ++s) live[s] = view.slot_objects[s].has_value();
    if (view.live() == 1) return static_cast<int>(std::find(live.begin(), live.end(), 1) - live.begin());
    if (epsilon > 0.0 && rng.uniform() < epsilon) return select_slot(std::vector<double>(live.size()), live, 1.0, rng);
    return select_slot(net.forward(view.inputs), live, 0.0, rng);
}

double worker_loss(const nn::WorkerNet& net, std::span<const WorkerSample> batch, std::span<double> grad) {
    if (batch.empty()) return 0.0;
    const double n = static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& s : batch) {
        nn::WorkerNet::Cache cache;
        const nn::Tensor out = net.forward(s.input, grad.empty() ? nullptr : &cache);
        const double d = out.at(0, s.u, s.v) - s.target;
        loss += d * d;
        if (!grad.empty()) {
            nn::Tensor dout(1, out.h, out.w);
            dout.at(0, s.u, s.v) = 2.0 * d / n;
            net.backward(cache, dout, grad);
        }
    }
    return loss / n;
}

double manager_loss(const nn::ManagerNet& net, std::span<const ManagerSample> batch, std::span<double> grad) {
    if (batch.empty()) return 0.0;
    const double n = static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& s : batch) {
        nn::ManagerNet::Cache cache;
        const auto out = net.forward(s.inputs, grad.empty() ? nullptr : &cache);
        const double d = out[s.slot] - s.target;
        loss += d * d;
        if (!grad.empty()) {
            std::vector<double> dout(out.size(), 0.0);
            dout[s.slot] = 2.0 * d / n;
            net.backward(cache, dout, grad);
        }
    }
    return loss / n;
}

namespace {

double best_worker_value(const WorkerView& view, const nn::WorkerNet& net) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < view.inputs.size(); ++k) {
        bool any = false;
        for (auto v : view.legal[k].data()) any = any || v;
        if (!any) continue;
        const nn::Tensor out = net.forward(view.inputs[k]);
        for (int u = 0; u < out.h; ++u)
            for (int v = 0; v < out.w; ++v)
                if (view.legal[k](u, v)) best = std::max(best, out.at(0, u, v));
    }
    return best == -std::numeric_limits<double>::infinity() ? 0.0 : best;
}

}  // namespace

double worker_td_update(nn::WorkerNet& net, const nn::WorkerNet& target, nn::Adam& opt,
                        std::span<const WorkerTransition* const> batch, double discount, double lr,
                        const HrlConfig& cfg) {
    std::vector<WorkerSample> samples;
    samples.reserve(batch.size());
    for (const WorkerTransition* t : batch) {
        const auto& shapes = t->ctx->shapes;
        const int res = t->action.resolution > 0 ? t->action.resolution : cfg.worker_resolution;
        WorkerView view = worker_view(t->state, shapes[t->object], res);
        double y = t->reward;
        if (!t->terminal && t->next_object)
            y += discount * best_worker_value(worker_view(t->next_state, shapes[*t->next_object], cfg.worker_resolution),
                                              target);
        samples.push_back({std::move(view.inputs.at(t->action.shape)), t->action.u, t->action.v, y});
    }
    std::vector<double> grad(net.param_count(), 0.0);
    const double loss = worker_loss(net, samples, grad);
    opt.step(net.params, grad, lr);
    return loss;
}

double manager_td_update(nn::ManagerNet& net, const nn::ManagerNet& target, nn::Adam& opt,
                         std::span<const ManagerTransition* const> batch, double discount, double lr,
                         const HrlConfig& cfg) {
    std::vector<ManagerSample> samples;
    samples.reserve(batch.size());
    for (const ManagerTransition* t : batch) {
        ManagerView view = manager_view(t->state, t->candidates, *t->ctx, cfg, net.slots());
        double y = t->reward;
        if (!t->terminal && !t->next_candidates.empty()) {
            const ManagerView next = manager_view(t->next_state, t->next_candidates, *t->ctx, cfg, target.slots());
            const auto q = target.forward(next.inputs);
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < q.size(); ++s)
                if (next.slot_objects[s]) best = std::max(best, q[s]);
            y += discount * best;
        }
        samples.push_back({std::move(view.inputs), t->slot, y});
    }
    std::vector<double> grad(net.param_count(), 0.0);
    const double loss = manager_loss(net, samples, grad);
    opt.step(net.params, grad, lr);
    return loss;
}

double TrainSchedule::epsilon(int epoch, int total) const {
    const double half = total / 2.0;
    if (half <= 0.0 || epoch >= half) return total <= 1 ? epsilon_start : epsilon_end;
    return epsilon_start + (epsilon_end - epsilon_start) * (epoch / half);
}

double TrainSchedule::lr(double base, int epoch, int epochs) const {
    if (epochs <= 1) return base;
    return base * (1.0 + (lr_end_fraction - 1.0) * epoch / (epochs - 1));
}

std::string train_log_csv(std::span<const TrainLogRow> rows) {
    std::string out = "epoch,stage,mean_J,mean_reward,loss_worker,loss_manager,epsilon\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch,
                      r.stage == TrainStage::worker_pretrain ? "worker_pretrain" : "joint", r.mean_j, r.mean_reward,
                      r.loss_worker, r.loss_manager, r.epsilon);
        out += buf;
    }
    return out;
}

Policies make_policies(const HrlConfig& cfg, std::uint64_t seed) {
    Policies p{nn::WorkerNet(kWorkerChannels, cfg.worker_width),
               nn::ManagerNet(std::max(1, cfg.top_k), kManagerChannels, cfg.manager_width, cfg.manager_hidden)};
    Rng wr(Rng::mix(seed, 11)), mr(Rng::mix(seed, 12));
    p.worker.init(wr);
    p.manager.init(mr);
    return p;
}

namespace {

struct Step {
    PackingState before;
    PackingState after;
    std::vector<std::size_t> candidates;
    std::size_t object = 0;
    std::optional<WorkerAction> action;
    double j_before = 0.0;
    double j_after = 0.0;
};

}  // namespace

std::vector<TrainLogRow> train(Policies& policies, const EpisodeSource& source, const TrainSchedule& schedule,
                               const HrlConfig& cfg, const TrainOptions& options, std::uint64_t seed) {
    if (schedule.batch_size < 1 || schedule.updates_per_epoch < 0 || schedule.worker_update_period < 1 ||
        schedule.manager_update_period < 1 || schedule.target_refresh < 1)
        throw InvalidInput("train: invalid schedule");
    Rng sampler(Rng::mix(seed, 21));
    nn::WorkerNet worker_target = policies.worker;
    nn::ManagerNet manager_target = policies.manager;
    nn::Adam worker_opt(policies.worker.param_count()), manager_opt(policies.manager.param_count());
    ReplayBuffer<WorkerTransition> worker_replay(schedule.replay_capacity);
    ReplayBuffer<ManagerTransition> manager_replay(schedule.replay_capacity);
    long worker_updates = 0, manager_updates = 0;

    std::vector<std::pair<TrainStage, int>> stages;
    if (options.run_stage1) stages.emplace_back(TrainStage::worker_pretrain, schedule.stage1_epochs);
    if (options.run_stage2) stages.emplace_back(TrainStage::joint, schedule.stage2_epochs);
    int total = 0;
    for (const auto& s : stages) total += s.second;

    std::vector<TrainLogRow> log;
    int epoch = 0;
    for (const auto& [stage, epochs] : stages) {
        const bool joint = stage == TrainStage::joint;
        const double base_lr = joint ? schedule.lr_stage2 : schedule.lr_stage1;
        for (int k = 0; k < epochs; ++k, ++epoch) {
            const double lr = schedule.lr(base_lr, k, epochs);
            const double eps = schedule.epsilon(epoch, total);
            const auto ctx = source(static_cast<std::uint64_t>(epoch));

            BBoxSequence bbox;
            LearnedSequence learned_seq(policies.manager, cfg, eps, Rng::mix(seed, 1000 + 2 * epoch));
            LearnedPlacement learned_place(policies.worker, cfg, eps, Rng::mix(seed, 1001 + 2 * epoch));
            SequencePolicy& seq = joint && cfg.top_k > 0 ? static_cast<SequencePolicy&>(learned_seq) : bbox;

            std::vector<Step> steps;
            RunOptions ro;
            ro.weights = options.weights;
            ro.term = options.term;
            ro.timing = false;
            ro.observer = [&](const StepRecord& r) {
                steps.push_back({r.before, r.after, {r.candidates.begin(), r.candidates.end()}, r.object,
                                 r.placement ? learned_place.last_action() : std::nullopt, r.j_before, r.j_after});
            };
            const EpisodeReport rep = run_episode(*ctx, seq, learned_place, ro);

            for (std::size_t s = 0; s < steps.size(); ++s) {
                const Step& st = steps[s];
                if (st.action) {
                    WorkerTransition t;
                    t.ctx = ctx;
                    t.state = st.before;
                    t.object = st.object;
                    t.action = *st.action;
                    t.j_curr = st.j_before;
                    t.j_next = st.j_after;
                    t.reward = step_reward(st.j_after, st.j_before);
                    t.next_state = st.after;
                    for (std::size_t n = s + 1; n < steps.size(); ++n)
                        if (steps[n].action) {
                            t.next_object = steps[n].object;
                            break;
                        }
                    t.terminal = !t.next_object;
                    worker_replay.push(std::move(t));
                }
                if (joint && cfg.top_k > 0) {
                    ManagerTransition t;
                    t.ctx = ctx;
                    t.state = st.before;
                    t.candidates = st.candidates;
                    const auto order = bbox_sequence(ctx->episode->objects, st.candidates);
                    t.slot = static_cast<int>(std::find(order.begin(), order.end(), st.object) - order.begin());
                    if (t.slot >= cfg.top_k) continue;
                    t.j_curr = st.j_before;
                    t.j_next = st.j_after;
                    t.reward = step_reward(st.j_after, st.j_before);
                    t.next_state = st.after;
                    t.next_candidates = st.candidates;
                    t.next_candidates.erase(
                        std::find(t.next_candidates.begin(), t.next_candidates.end(), st.object));
                    t.terminal = t.next_candidates.empty();
                    manager_replay.push(std::move(t));
                }
            }

            TrainLogRow row;
            row.epoch = epoch;
            row.stage = stage;
            row.mean_j = rep.j_final;
            double rsum = 0.0;
            for (double r : rep.rewards) rsum += r;
            row.mean_reward = rep.rewards.empty() ? 0.0 : rsum / static_cast<double>(rep.rewards.size());
            row.epsilon = eps;

            if ((k + 1) % schedule.worker_update_period == 0 && worker_replay.size() > 0) {
                double l = 0.0;
                for (int u = 0; u < schedule.updates_per_epoch; ++u) {
                    const auto batch = worker_replay.sample(schedule.batch_size, sampler);
                    l += worker_td_update(policies.worker, worker_target, worker_opt, batch, schedule.discount, lr, cfg);
                    if (++worker_updates % schedule.target_refresh == 0) worker_target = policies.worker;
                }
                row.loss_worker = schedule.updates_per_epoch ? l / schedule.updates_per_epoch : 0.0;
            }
            if (joint && (k + 1) % schedule.manager_update_period == 0 && manager_replay.size() > 0) {
                double l = 0.0;
                for (int u = 0; u < schedule.updates_per_epoch; ++u) {
                    const auto batch = manager_replay.sample(schedule.batch_size, sampler);
                    l += manager_td_update(policies.manager, manager_target, manager_opt, batch, schedule.discount,
                                           lr, cfg);
                    if (++manager_updates % schedule.target_refresh == 0) manager_target = policies.manager;
                }
                row.loss_manager = schedule.updates_per_epoch ? l / schedule.updates_per_epoch : 0.0;
            }
            log.push_back(row);
            if (options.on_epoch) options.on_epoch(epoch, policies);
        }
    }
    return log;
}

std::size_t LearnedSequence::select(const PackingState& state, std::span<const std::size_t> candidates,
                                    const EpisodeContext& ctx) {
    const ManagerView view = manager_view(state, candidates, ctx, cfg_, net_.slots());
    return *view.slot_objects[manager_select(view, net_, epsilon_, rng_)];
}

std::optional<Placement> LearnedPlacement::place(const PackingState& state, std::size_t object,
                                                 const EpisodeContext& ctx) {
    last_.reset();
    WorkerView view = worker_view(state, ctx.shapes[object], cfg_.worker_resolution);
    if (!view.any_legal() && cfg_.worker_resolution < std::max(state.box.rows(), state.box.cols()))
        view = worker_view(state, ctx.shapes[object], std::max(state.box.rows(), state.box.cols()));
    const auto a = worker_select(view, net_, epsilon_, rng_);
    if (!a) return std::nullopt;
    last_ = a;
    return worker_placement(view, state, object, *a);
}

}  // namespace packbench
