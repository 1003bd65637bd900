#include "packbench/planners.hpp"

#include <algorithm>
#include <string>
#include <tuple>

#include "packbench/parallel.hpp"
#include "packbench/rewards.hpp"

namespace packbench {

std::string_view sequence_rule_name(SequenceRule r) {
    switch (r) {
        case SequenceRule::random: return "random";
        case SequenceRule::bbox_volume_desc: return "bbox_volume_desc";
        case SequenceRule::learned: return "learned";
    }
    return "?";
}

SequenceRule sequence_rule_from_name(std::string_view name) {
    for (auto r : {SequenceRule::random, SequenceRule::bbox_volume_desc, SequenceRule::learned})
        if (sequence_rule_name(r) == name) return r;
    throw InvalidInput("unknown sequence rule: " + std::string(name));
}

std::string_view placement_rule_name(PlacementRule r) {
    switch (r) {
        case PlacementRule::random: return "random";
        case PlacementRule::hm: return "hm";
        case PlacementRule::packit_blb: return "packit_blb";
        case PlacementRule::learned: return "learned";
    }
    return "?";
}

PlacementRule placement_rule_from_name(std::string_view name) {
    for (auto r : {PlacementRule::random, PlacementRule::hm, PlacementRule::packit_blb, PlacementRule::learned})
        if (placement_rule_name(r) == name) return r;
    throw InvalidInput("unknown placement rule: " + std::string(name));
}

EpisodeContext make_context(std::shared_ptr<const EpisodeSet> episode, const OrientationGrid& orientations,
                            const BoxSpec& box) {
    EpisodeContext ctx;
    ctx.orientations = orientations;
    ctx.box = box;
    ctx.shapes.resize(episode->objects.size());
    parallel_for(ctx.shapes.size(), [&](std::size_t k) {
        ctx.shapes[k] = enumerate_orientations(episode->objects[k].grid, orientations);
    });
    ctx.episode = std::move(episode);
    return ctx;
}

std::vector<std::size_t> bbox_sequence(std::span<const ObjectModel> objects, std::span<const std::size_t> indices) {
    std::vector<std::size_t> order(indices.begin(), indices.end());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = bbox_volume(objects[a]), vb = bbox_volume(objects[b]);
        if (va != vb) return va > vb;
        if (objects[a].id != objects[b].id) return objects[a].id < objects[b].id;
        return a < b;
    });
    return order;
}

std::vector<int> coarse_positions(int n, int parts) {
    if (parts <= 0 || n % parts != 0)
        throw InvalidInput("hm_downsample " + std::to_string(parts) + " does not divide " + std::to_string(n));
    const int stride = n / parts;
    std::vector<int> out(parts);
    for (int k = 0; k < parts; ++k) out[k] = k * stride + stride / 2;
    return out;
}

namespace {

std::vector<const OrientedShape*> by_index(std::span<const OrientedShape> shapes) {
    std::vector<const OrientedShape*> out;
    for (const auto& s : shapes) out.push_back(&s);
    std::sort(out.begin(), out.end(), [](const OrientedShape* a, const OrientedShape* b) {
        return std::tie(a->rp_index, a->yaw_index) < std::tie(b->rp_index, b->yaw_index);
    });
    return out;
}

struct Candidate {
    std::int64_t added = 0;  // growth of the heightmap volume, quanta x cells
    Height max_after = 0;
    const OrientedShape* shape = nullptr;
    int x = 0;
    int y = 0;
    Height z = 0;

    auto key() const { return std::make_tuple(added, max_after, shape->rp_index, shape->yaw_index, x, y); }
    bool operator<(const Candidate& o) const { return key() < o.key(); }

    Placement placement(std::size_t object) const { return {object, shape->rp_index, shape->yaw_index, x, y, z, 0.0}; }
};

std::optional<Candidate> evaluate(const PackingState& state, Height box_max, const OrientedShape& s, int x, int y) {
    const auto& top = s.views.top;
    const int r = top.rows(), c = top.cols();
    if (!footprint_fits(state.box, r, c, x, y)) return std::nullopt;
    const int x0 = footprint_origin(x, r), y0 = footprint_origin(y, c);
    const Height z = drop_height(state.box, s.views.bottom, x0, y0);
    if (z + s.peak > state.height_cap) return std::nullopt;
    std::int64_t added = 0;
    for (int a = 0; a < r; ++a) {
        const Height* hc = state.box.row(x0 + a) + y0;
        const Height* ht = top.row(a);
        for (int b = 0; b < c; ++b)
            if (ht[b] > 0) added += std::max(0, z + ht[b] - hc[b]);
    }
    return Candidate{added, std::max(box_max, z + s.peak), &s, x, y, z};
}

std::vector<Candidate> collect(const PackingState& state, std::span<const OrientedShape> shapes,
                               const std::vector<int>& xs, const std::vector<int>& ys) {
    const Height box_max = state.box.max();
    std::vector<Candidate> out;
    for (const OrientedShape* s : by_index(shapes))
        for (int x : xs)
            for (int y : ys)
                if (auto c = evaluate(state, box_max, *s, x, y)) out.push_back(*c);
    return out;
}

std::vector<int> iota_positions(int n) {
    std::vector<int> v(n);
    for (int k = 0; k < n; ++k) v[k] = k;
    return v;
}

// Candidates on the coarse lattice, or on the full lattice if the coarse one
// has none.
std::vector<Candidate> hm_candidates(const PackingState& state, std::span<const OrientedShape> shapes,
                                     int hm_downsample, bool& coarse) {
    const int rows = state.box.rows(), cols = state.box.cols();
    const int dx = std::min(hm_downsample, rows), dy = std::min(hm_downsample, cols);
    auto cands = collect(state, shapes, coarse_positions(rows, dx), coarse_positions(cols, dy));
    coarse = dx < rows || dy < cols;
    if (cands.empty() && coarse) {
        cands = collect(state, shapes, iota_positions(rows), iota_positions(cols));
        coarse = false;
    }
    return cands;
}

template <typename Accept>
Candidate refine(const PackingState& state, const Candidate& best, Accept accept) {
    const Height box_max = state.box.max();
    Candidate out = best;
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy) {
            auto c = evaluate(state, box_max, *best.shape, best.x + dx, best.y + dy);
            if (c && *c < out && accept(*c)) out = *c;
        }
    return out;
}

bool stable_candidate(const PackingState& state, const Candidate& c) {
    return stability_check(state.box, c.placement(0), *c.shape) == 1;
}

}  // namespace

std::optional<Placement> hm_place(const PackingState& state, std::size_t object,
                                  std::span<const OrientedShape> shapes, int hm_downsample) {
    bool coarse = false;
    const auto cands = hm_candidates(state, shapes, hm_downsample, coarse);
    if (cands.empty()) return std::nullopt;
    Candidate best = *std::min_element(cands.begin(), cands.end());
    if (coarse) best = refine(state, best, [](const Candidate&) { return true; });
    return best.placement(object);
}

StableHmResult stable_hm_place(const PackingState& state, std::size_t object, std::span<const OrientedShape> shapes,
                               int hm_downsample) {
    bool coarse = false;
    auto cands = hm_candidates(state, shapes, hm_downsample, coarse);
    if (cands.empty()) return {};
    std::sort(cands.begin(), cands.end());
    for (const auto& c : cands) {
        if (!stable_candidate(state, c)) continue;
        Candidate best = c;
        if (coarse) best = refine(state, best, [&](const Candidate& n) { return stable_candidate(state, n); });
        return {best.placement(object), false};
    }
    Candidate best = cands.front();
    if (coarse) best = refine(state, best, [](const Candidate&) { return true; });
    return {best.placement(object), true};
}

namespace {

std::optional<Placement> blb_position(const PackingState& state, std::size_t object, const OrientedShape& s) {
    std::optional<Placement> best;
    for (int y = 0; y < state.box.cols(); ++y)
        for (int x = 0; x < state.box.rows(); ++x) {
            if (!is_legal(state.box, s, x, y, state.height_cap)) continue;
            const Height z = compute_z(state.box, s.views.bottom, x, y);
            if (!best || z < best->z) best = Placement{object, s.rp_index, s.yaw_index, x, y, z, 0.0};
            if (z == 0) return best;
        }
    return best;
}

}  // namespace

std::optional<Placement> packit_place(const PackingState& state, std::size_t object,
                                      std::span<const OrientedShape> shapes) {
    const auto order = by_index(shapes);
    const double cell = state.box.cell_mm();
    const OrientedShape* preferred = nullptr;
    for (const OrientedShape* s : order) {
        const double ex = s->footprint_rows() * cell, ey = s->footprint_cols() * cell, ez = quanta_to_mm(s->peak);
        if (ex >= ey && ey >= ez) {
            preferred = s;
            break;
        }
    }
    if (preferred)
        if (auto p = blb_position(state, object, *preferred)) return p;
    for (const OrientedShape* s : order) {
        if (s == preferred) continue;
        if (auto p = blb_position(state, object, *s)) return p;
    }
    return std::nullopt;
}

std::optional<Placement> random_place(const PackingState& state, std::size_t object,
                                      std::span<const OrientedShape> shapes, Rng& rng) {
    if (shapes.empty()) return std::nullopt;
    const auto order = by_index(shapes);
    const int rows = state.box.rows(), cols = state.box.cols();
    const std::uint64_t per_shape = static_cast<std::uint64_t>(rows) * cols;
    auto make = [&](const OrientedShape& s, int x, int y) {
        return Placement{object, s.rp_index, s.yaw_index, x, y, compute_z(state.box, s.views.bottom, x, y), 0.0};
    };
    constexpr int kTries = 64;
    for (int t = 0; t < kTries; ++t) {
        const std::uint64_t k = rng.below(order.size() * per_shape);
        const OrientedShape& s = *order[k / per_shape];
        const int x = static_cast<int>(k % per_shape / cols), y = static_cast<int>(k % cols);
        if (is_legal(state.box, s, x, y, state.height_cap)) return make(s, x, y);
    }
    std::vector<std::tuple<const OrientedShape*, int, int>> legal;
    for (const OrientedShape* s : order)
        for (int x = 0; x < rows; ++x)
            for (int y = 0; y < cols; ++y)
                if (is_legal(state.box, *s, x, y, state.height_cap)) legal.emplace_back(s, x, y);
    if (legal.empty()) return std::nullopt;
    const auto& [s, x, y] = legal[rng.below(legal.size())];
    return make(*s, x, y);
}

RandomStep random_plan_step(const PackingState& state, std::span<const std::size_t> candidates,
                            const EpisodeContext& ctx, Rng& rng) {
    if (candidates.empty()) throw InvalidInput("random_plan_step: no candidates");
    RandomStep step;
    step.object = candidates[rng.below(candidates.size())];
    step.placement = random_place(state, step.object, ctx.shapes[step.object], rng);
    return step;
}

std::size_t BBoxSequence::select(const PackingState&, std::span<const std::size_t> candidates,
                                 const EpisodeContext& ctx) {
    return bbox_sequence(ctx.episode->objects, candidates).front();
}

std::size_t RandomSequence::select(const PackingState&, std::span<const std::size_t> candidates,
                                   const EpisodeContext&) {
    return candidates[rng_.below(candidates.size())];
}

std::optional<Placement> HmPlacement::place(const PackingState& state, std::size_t object,
                                            const EpisodeContext& ctx) {
    return hm_place(state, object, ctx.shapes[object], downsample_);
}

std::optional<Placement> StableHmPlacement::place(const PackingState& state, std::size_t object,
                                                  const EpisodeContext& ctx) {
    return stable_hm_place(state, object, ctx.shapes[object], downsample_).placement;
}

std::optional<Placement> PackItPlacement::place(const PackingState& state, std::size_t object,
                                                const EpisodeContext& ctx) {
    return packit_place(state, object, ctx.shapes[object]);
}

std::optional<Placement> RandomPlacement::place(const PackingState& state, std::size_t object,
                                                const EpisodeContext& ctx) {
    return random_place(state, object, ctx.shapes[object], rng_);
}

}  // namespace packbench
