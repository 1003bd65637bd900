#include "packbench/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "packbench/rng.hpp"

namespace packbench {

namespace {

struct FamilyInfo {
    Family family;
    const char* name;
    int nparams;
};

constexpr std::array<FamilyInfo, 9> kFamilies = {{
    {Family::cuboid, "cuboid", 3},
    {Family::cylinder, "cylinder", 2},
    {Family::l_solid, "l_solid", 4},
    {Family::t_solid, "t_solid", 4},
    {Family::u_channel, "u_channel", 4},
    {Family::bowl, "bowl", 3},
    {Family::plate, "plate", 2},
    {Family::sphere_cap, "sphere_cap", 2},
    {Family::peg, "peg", 2},
}};

const FamilyInfo& info(Family f) {
    for (const auto& i : kFamilies)
        if (i.family == f) return i;
    throw InvalidInput("unknown family");
}

double sq(double v) { return v * v; }

double cap_base_radius(double r, double h) { return h <= r ? std::sqrt(h * (2 * r - h)) : r; }

// Inside-predicate in the unscaled frame, p in [0, extents].
std::function<bool(double, double, double)> predicate(const ShapeSpec& s) {
    const auto& p = s.params;
    const auto ext = s.extents();
    switch (s.family) {
        case Family::cuboid:
            return [](double, double, double) { return true; };
        case Family::cylinder: {
            const double r = p[0];
            return [r](double x, double y, double) { return sq(x - r) + sq(y - r) <= r * r; };
        }
        case Family::l_solid: {
            const double t = p[3];
            return [t](double x, double, double z) { return z < t || x < t; };
        }
        case Family::t_solid: {
            const double w = p[0], h = p[2], t = p[3];
            return [w, h, t](double x, double, double z) { return z >= h - t || std::abs(x - w / 2) < t / 2; };
        }
        case Family::u_channel: {
            const double w = p[0], t = p[3];
            return [w, t](double x, double, double z) { return z < t || x < t || x > w - t; };
        }
        case Family::bowl: {
            const double r = p[0], t = p[2];
            return [r, t](double x, double y, double z) {
                const double rho2 = sq(x - r) + sq(y - r);
                if (rho2 > r * r) return false;
                return !(rho2 < sq(r - t) && z >= t);
            };
        }
        case Family::plate: {
            const double r = p[0];
            return [r](double x, double y, double) { return sq(x - r) + sq(y - r) <= r * r; };
        }
        case Family::sphere_cap: {
            const double r = p[0], h = p[1];
            const double cx = ext[0] / 2, cy = ext[1] / 2, cz = h - r;
            return [=](double x, double y, double z) { return sq(x - cx) + sq(y - cy) + sq(z - cz) <= r * r; };
        }
        case Family::peg: {
            const double r = p[0];
            return [r](double, double y, double z) { return sq(y - r) + sq(z - r) <= r * r; };
        }
    }
    throw InvalidInput("unknown family");
}

}  // namespace

std::string_view family_name(Family f) { return info(f).name; }

Family family_from_name(std::string_view name) {
    for (const auto& i : kFamilies)
        if (name == i.name) return i.family;
    throw InvalidInput("unknown shape family '" + std::string(name) + "'");
}

bool is_convex_family(Family f) {
    return f == Family::cuboid || f == Family::cylinder || f == Family::sphere_cap || f == Family::peg;
}

bool is_hard_family(Family f) {
    return f == Family::bowl || f == Family::u_channel || f == Family::plate || f == Family::t_solid;
}

std::array<double, 3> ShapeSpec::extents() const {
    const auto& p = params;
    switch (family) {
        case Family::cuboid:
        case Family::l_solid:
        case Family::t_solid:
        case Family::u_channel:
            return {p[0], p[1], p[2]};
        case Family::cylinder:
            return {2 * p[0], 2 * p[0], p[1]};
        case Family::bowl:
            return {2 * p[0], 2 * p[0], p[1]};
        case Family::plate:
            return {2 * p[0], 2 * p[0], p[1]};
        case Family::sphere_cap: {
            const double a = cap_base_radius(p[0], p[1]);
            return {2 * a, 2 * a, p[1]};
        }
        case Family::peg:
            return {p[1], 2 * p[0], 2 * p[0]};
    }
    throw InvalidInput("unknown family");
}

void ShapeSpec::validate() const {
    const auto& fi = info(family);
    if (static_cast<int>(params.size()) != fi.nparams)
        throw InvalidInput(std::string(fi.name) + ": expected " + std::to_string(fi.nparams) + " parameters");
    for (double v : params)
        if (!(v > 0) || !std::isfinite(v)) throw InvalidInput(std::string(fi.name) + ": parameters must be positive");
    for (double s : scale)
        if (s < 0.8 - 1e-12 || s > 1.2 + 1e-12) throw InvalidInput("scale must lie in [0.8, 1.2]");
    const auto& p = params;
    switch (family) {
        case Family::l_solid:
        case Family::t_solid:
            if (p[3] >= p[0] || p[3] >= p[2]) throw InvalidInput(std::string(fi.name) + ": thickness too large");
            break;
        case Family::u_channel:
            if (2 * p[3] >= p[0] || p[3] >= p[2]) throw InvalidInput("u_channel: thickness too large");
            break;
        case Family::bowl:
            if (p[2] >= p[0] || p[2] >= p[1]) throw InvalidInput("bowl: wall thickness too large");
            break;
        case Family::sphere_cap:
            if (p[1] > 2 * p[0]) throw InvalidInput("sphere_cap: height exceeds diameter");
            break;
        default:
            break;
    }
}

ObjectModel build_shape(const ShapeSpec& spec, double cell_mm, std::string id) {
    spec.validate();
    const auto cell_um = static_cast<std::uint32_t>(std::llround(cell_mm * 1000.0));
    const auto ext = spec.extents();
    std::array<int, 3> n{};
    for (int a = 0; a < 3; ++a) {
        n[a] = static_cast<int>(std::llround(ext[a] * spec.scale[a] / cell_mm));
        if (n[a] < 2) throw InvalidInput(std::string(family_name(spec.family)) + ": fewer than 2 cells along an axis");
    }
    VoxelGrid g({n[0], n[1], n[2]}, cell_um);
    const auto inside = predicate(spec);
    for (int z = 0; z < n[2]; ++z)
        for (int y = 0; y < n[1]; ++y)
            for (int x = 0; x < n[0]; ++x) {
                const double px = (x + 0.5) / n[0] * ext[0];
                const double py = (y + 0.5) / n[1] * ext[1];
                const double pz = (z + 0.5) / n[2] * ext[2];
                if (inside(px, py, pz)) g.set(x, y, z);
            }
    if (g.empty()) throw InvalidInput(std::string(family_name(spec.family)) + ": voxelization is empty");
    if (id.empty()) id = std::string(family_name(spec.family));
    ObjectModel m = make_object(std::move(id), g);
    const auto& d = m.grid.dims();
    if (d.nx < 2 || d.ny < 2 || d.nz < 2)
        throw InvalidInput(std::string(family_name(spec.family)) + ": fewer than 2 cells along an axis");
    return m;
}

// ---------------------------------------------------------------------------
// Meshes

VoxelGrid voxelize_mesh(const std::vector<Triangle>& tris, double cell_mm) {
    if (tris.empty()) throw InvalidInput("voxelize_mesh: no triangles");
    using Vtx = std::array<double, 3>;
    std::map<Vtx, int> ids;
    auto vid = [&](const Vtx& v) { return ids.emplace(v, static_cast<int>(ids.size())).first->second; };
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : tris) {
        const int a = vid(t[0]), b = vid(t[1]), c = vid(t[2]);
        if (a == b || b == c || a == c) throw InvalidInput("voxelize_mesh: degenerate triangle");
        ++directed[{a, b}];
        ++directed[{b, c}];
        ++directed[{c, a}];
    }
    for (const auto& [e, count] : directed) {
        if (count != 1)
            throw InvalidInput("voxelize_mesh: open or inconsistently oriented mesh (edge " + std::to_string(e.first) +
                               "->" + std::to_string(e.second) + " used " + std::to_string(count) + " times)");
        auto rev = directed.find({e.second, e.first});
        if (rev == directed.end() || rev->second != 1)
            throw InvalidInput("voxelize_mesh: open mesh (edge " + std::to_string(e.first) + "->" +
                               std::to_string(e.second) + " has no matching reverse edge)");
    }

    const auto cell_um = static_cast<std::uint32_t>(std::llround(cell_mm * 1000.0));
    Vtx lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const auto& t : tris)
        for (const auto& v : t)
            for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], v[a]), hi[a] = std::max(hi[a], v[a]);
    std::array<int, 3> n{};
    for (int a = 0; a < 3; ++a) n[a] = std::max(1, static_cast<int>(std::ceil((hi[a] - lo[a]) / cell_mm - 1e-9)));
    VoxelGrid g({n[0], n[1], n[2]}, cell_um);

    // The tiny offsets keep lattice-aligned rays off shared edges and vertices.
    const double ox = 1.2345e-7 * cell_mm, oy = 2.3456e-7 * cell_mm;
    std::vector<double> hits;
    for (int x = 0; x < n[0]; ++x)
        for (int y = 0; y < n[1]; ++y) {
            const double px = lo[0] + (x + 0.5) * cell_mm + ox;
            const double py = lo[1] + (y + 0.5) * cell_mm + oy;
            hits.clear();
            for (const auto& t : tris) {
                const double x0 = t[0][0], y0 = t[0][1], x1 = t[1][0], y1 = t[1][1], x2 = t[2][0], y2 = t[2][1];
                const double det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
                if (std::abs(det) < 1e-18) continue;  // vertical face
                const double l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / det;
                const double l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / det;
                const double l0 = 1.0 - l1 - l2;
                if (l0 < 0 || l1 < 0 || l2 < 0) continue;
                hits.push_back(l0 * t[0][2] + l1 * t[1][2] + l2 * t[2][2]);
            }
            if (hits.empty()) continue;
            std::sort(hits.begin(), hits.end());
            for (int z = 0; z < n[2]; ++z) {
                const double pz = lo[2] + (z + 0.5) * cell_mm;
                const auto below = std::lower_bound(hits.begin(), hits.end(), pz) - hits.begin();
                if (below % 2 == 1) g.set(x, y, z);
            }
        }
    if (g.empty()) throw InvalidInput("voxelize_mesh: mesh encloses no voxel centers");
    return g.tightened();
}

std::vector<Triangle> parse_ascii_stl(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string tok;
    in >> tok;
    if (tok != "solid") throw InvalidInput("stl: expected 'solid'");
    std::vector<Triangle> out;
    Triangle cur{};
    int nv = 0;
    while (in >> tok) {
        if (tok == "vertex") {
            if (nv >= 3) throw InvalidInput("stl: more than three vertices in a facet");
            auto& v = cur[static_cast<std::size_t>(nv++)];
            if (!(in >> v[0] >> v[1] >> v[2])) throw InvalidInput("stl: malformed vertex");
        } else if (tok == "endfacet") {
            if (nv != 3) throw InvalidInput("stl: facet without three vertices");
            out.push_back(cur);
            nv = 0;
        }
    }
    if (out.empty()) throw InvalidInput("stl: no facets");
    return out;
}

std::vector<Triangle> parse_triangle_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("mesh json: ") + e.what());
    }
    std::vector<Triangle> out;
    for (const auto& t : j.at("triangles")) {
        const auto v = t.get<std::vector<double>>();
        if (v.size() != 9) throw InvalidInput("mesh json: each triangle needs 9 coordinates");
        out.push_back({{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, {v[6], v[7], v[8]}}});
    }
    return out;
}

std::vector<Triangle> read_mesh_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    const std::string text{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return parse_triangle_json(text);
    return parse_ascii_stl(text);
}

// ---------------------------------------------------------------------------
// Episodes

std::string_view difficulty_name(Difficulty d) { return d == Difficulty::easy ? "easy" : "hard"; }

Difficulty difficulty_from_name(std::string_view name) {
    if (name == "easy") return Difficulty::easy;
    if (name == "hard") return Difficulty::hard;
    throw InvalidInput("difficulty must be 'easy' or 'hard'");
}

namespace {

ShapeSpec draw_spec(Family f, Rng& rng, bool per_axis) {
    ShapeSpec s;
    s.family = f;
    auto u = [&](double lo, double hi) { return rng.uniform(lo, hi); };
    switch (f) {
        case Family::cuboid:
            s.params = {u(60, 180), u(60, 180), u(60, 180)};
            break;
        case Family::cylinder:
            s.params = {u(30, 70), u(60, 180)};
            break;
        case Family::l_solid:
            s.params = {u(90, 180), u(90, 180), u(60, 150), u(20, 40)};
            break;
        case Family::t_solid:
            s.params = {u(90, 180), u(60, 150), u(70, 150), u(20, 40)};
            break;
        case Family::u_channel:
            s.params = {u(90, 180), u(90, 180), u(60, 120), u(10, 20)};
            break;
        case Family::bowl:
            s.params = {u(60, 100), u(40, 90), u(6, 12)};
            break;
        case Family::plate:
            s.params = {u(70, 130), u(10, 20)};
            break;
        case Family::sphere_cap: {
            const double r = u(45, 90);
            s.params = {r, r * u(0.5, 1.0)};
            break;
        }
        case Family::peg:
            s.params = {u(12, 20), u(120, 240)};
            break;
    }
    if (per_axis) {
        s.scale = {u(0.8, 1.2), u(0.8, 1.2), u(0.8, 1.2)};
    } else {
        const double k = u(0.8, 1.2);
        s.scale = {k, k, k};
    }
    return s;
}

bool fits_empty_box(const ObjectModel& m, const EpisodeOptions& o) {
    const auto& b = m.bbox_dims;
    const std::array<std::array<int, 3>, 6> perms = {{{0, 1, 2}, {1, 0, 2}, {0, 2, 1}, {2, 0, 1}, {1, 2, 0}, {2, 1, 0}}};
    for (const auto& p : perms)
        if (b[p[0]] <= o.box_length_mm + 1e-9 && b[p[1]] <= o.box_width_mm + 1e-9 &&
            b[p[2]] <= o.box_height_mm + 1e-9)
            return true;
    return false;
}

std::string object_id(std::size_t index, Family f) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%02zu-%s", index, std::string(family_name(f)).c_str());
    return buf;
}

}  // namespace

EpisodeSet generate_episode(std::uint64_t seed, Difficulty difficulty, int pool_size, const EpisodeOptions& opts) {
    if (pool_size < 1) throw InvalidInput("generate_episode: pool_size must be at least 1");
    Rng rng(Rng::mix(seed, 0x5eed));

    std::vector<Family> convex, hard;
    for (Family f : kAllFamilies) {
        if (is_convex_family(f)) convex.push_back(f);
        if (is_hard_family(f)) hard.push_back(f);
    }
    const auto n = static_cast<std::size_t>(pool_size);
    std::vector<Family> families;
    const std::size_t quota =
        difficulty == Difficulty::easy ? (n * 7 + 9) / 10 : (n + 1) / 2;  // ceil(0.7 n) / ceil(0.5 n)
    const auto& pool = difficulty == Difficulty::easy ? convex : hard;
    for (std::size_t k = 0; k < quota; ++k) families.push_back(pool[rng.below(pool.size())]);
    while (families.size() < n) families.push_back(kAllFamilies[rng.below(kAllFamilies.size())]);
    for (std::size_t k = families.size(); k > 1; --k) std::swap(families[k - 1], families[rng.below(k)]);

    EpisodeSet e;
    e.seed = seed;
    e.difficulty = difficulty;
    for (std::size_t k = 0; k < n; ++k) {
        bool done = false;
        for (int attempt = 0; attempt < 200 && !done; ++attempt) {
            ShapeSpec s = draw_spec(families[k], rng, opts.per_axis_scaling);
            try {
                ObjectModel m = build_shape(s, opts.cell_mm, object_id(k, s.family));
                if (!fits_empty_box(m, opts)) continue;
                e.objects.push_back(std::move(m));
                e.specs.push_back(std::move(s));
                done = true;
            } catch (const InvalidInput&) {
                // degenerate at this resolution; draw again
            }
        }
        if (!done)
            throw InvalidInput("generate_episode: cannot build a " + std::string(family_name(families[k])) +
                               " at this resolution");
    }
    return e;
}

EpisodeSet generate_toy_episode(std::uint64_t seed, int pool_size, double cell_mm) {
    if (pool_size < 1) throw InvalidInput("generate_toy_episode: pool_size must be at least 1");
    Rng rng(Rng::mix(seed, 0x70f));
    EpisodeSet e;
    e.seed = seed;
    for (int k = 0; k < pool_size; ++k) {
        const double side = (rng.below(2) == 0 ? 2 : 3) * cell_mm;
        ShapeSpec s{Family::cuboid, {side, side, side}, {1.0, 1.0, 1.0}};
        e.objects.push_back(build_shape(s, cell_mm, object_id(static_cast<std::size_t>(k), s.family)));
        e.specs.push_back(std::move(s));
    }
    return e;
}

std::string episode_to_json(const EpisodeSet& e, double cell_mm) {
    nlohmann::json objs = nlohmann::json::array();
    for (std::size_t k = 0; k < e.objects.size(); ++k) {
        const auto& s = e.specs.at(k);
        objs.push_back({{"id", e.objects[k].id},
                        {"family", family_name(s.family)},
                        {"params", s.params},
                        {"scale", s.scale},
                        {"volume_mm3", e.objects[k].volume}});
    }
    nlohmann::json j = {{"format", "packbench-episode"},
                        {"version", 1},
                        {"seed", e.seed},
                        {"difficulty", difficulty_name(e.difficulty)},
                        {"cell_um", std::llround(cell_mm * 1000.0)},
                        {"objects", objs}};
    return j.dump(1) + "\n";
}

EpisodeSet episode_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
        throw InvalidInput(std::string("episode manifest: ") + ex.what());
    }
    if (j.value("format", "") != "packbench-episode") throw InvalidInput("episode manifest: missing format tag");
    EpisodeSet e;
    e.seed = j.at("seed").get<std::uint64_t>();
    e.difficulty = difficulty_from_name(j.at("difficulty").get<std::string>());
    const double cell_mm = j.at("cell_um").get<double>() / 1000.0;
    for (const auto& o : j.at("objects")) {
        ShapeSpec s;
        s.family = family_from_name(o.at("family").get<std::string>());
        s.params = o.at("params").get<std::vector<double>>();
        s.scale = o.at("scale").get<std::array<double, 3>>();
        e.objects.push_back(build_shape(s, cell_mm, o.at("id").get<std::string>()));
        e.specs.push_back(std::move(s));
    }
    return e;
}

}  // namespace packbench
