#include "packbench/episode.hpp"

#include <algorithm>
#include <chrono>
#include <exception>

namespace packbench {

std::string_view termination_name(Termination t) { return t == Termination::all_packed ? "all_packed" : "no_space"; }

EpisodeReport run_episode(const EpisodeContext& ctx, SequencePolicy& sequence, PlacementPolicy& placement,
                          const RunOptions& options) {
    using Clock = std::chrono::steady_clock;
    EpisodeReport rep;
    PackingState state = PackingState::empty(ctx.box, ctx.size());
    std::vector<std::size_t> candidates = state.unpacked;
    double j = 0.0;
    rep.j_trace.push_back(j);
    if (options.keep_frames) rep.frames.push_back(state.box);
    bool discarded = false;

    while (!candidates.empty()) {
        std::size_t object = 0;
        std::optional<Placement> p;
        try {
            const auto t0 = Clock::now();
            object = sequence.select(state, candidates, ctx);
            if (!std::binary_search(candidates.begin(), candidates.end(), object))
                throw InvalidInput("sequence policy picked a non-candidate object");
            p = placement.place(state, object, ctx);
            rep.planning_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
        } catch (const std::exception& e) {
            rep.error = e.what();
            discarded = true;
            break;
        }

        if (!p) {
            const auto before = candidates;
            candidates.erase(std::find(candidates.begin(), candidates.end(), object));
            discarded = true;
            if (options.observer) options.observer({state, state, before, object, std::nullopt, j, j});
            continue;
        }

        PackingState next;
        try {
            const OrientedShape* shape = find_shape(ctx.shapes[object], p->i, p->j);
            if (!shape) throw InvalidInput("placement policy returned an unknown orientation");
            const int stable = stability_check(state.box, *p, *shape);
            next = apply_placement(state, *p, *shape, stable);
        } catch (const std::exception& e) {
            rep.error = e.what();
            discarded = true;
            break;
        }
        const double j_next = objective(next, options.weights, options.term);
        rep.rewards.push_back(step_reward(j_next, j));
        rep.j_trace.push_back(j_next);
        rep.plan.push_back(*p);
        const auto before = candidates;
        candidates.erase(std::find(candidates.begin(), candidates.end(), object));
        if (options.observer) options.observer({state, next, before, object, p, j, j_next});
        state = std::move(next);
        j = j_next;
        if (options.keep_frames) rep.frames.push_back(state.box);
    }

    rep.termination = discarded ? Termination::no_space : Termination::all_packed;
    rep.j_final = j;
    rep.metrics = measure(state);
    if (!options.timing) rep.planning_seconds = 0.0;
    rep.metrics.latency_per_object =
        rep.plan.empty() ? 0.0 : rep.planning_seconds / static_cast<double>(rep.plan.size());
    rep.final_state = std::move(state);
    return rep;
}

}  // namespace packbench
