#include "doctest.h"
#include "support.hpp"

using namespace packbench;

using pbt::check;
using pbt::drop;
using pbt::oracle;
using pbt::rotate_map;
using pbt::Scene;
using pbt::upright;

TEST_CASE("compactness examples") {
    SUBCASE("slab filling the base") {
        const auto ctx = pbt::context_from_grids({pbt::box_grid(40, 40, 10, 10000)}, BoxSpec{40, 40, 10.0, 3000},
                                                 pbt::upright_only());
        PackingState s = PackingState::empty(ctx->box, 1);
        s = apply_placement(s, {0, 0, 0, 20, 20, 0, 0.0}, ctx->shapes[0][0]);
        CHECK(compactness(s) == 1.0);
        CHECK(pyramidality(s) == 1.0);
    }
    SUBCASE("two 100 mm cubes") {
        const auto g = pbt::box_grid(10, 10, 10, 10000);
        const auto ctx = pbt::context_from_grids({g, g}, BoxSpec{40, 40, 10.0, 3000}, pbt::upright_only());
        PackingState s = PackingState::empty(ctx->box, 2);
        s = apply_placement(s, {0, 0, 0, 5, 5, 0, 0.0}, ctx->shapes[0][0]);
        s = apply_placement(s, {1, 0, 0, 5, 15, 0, 0.0}, ctx->shapes[1][0]);
        CHECK(compactness(s) == doctest::Approx(2e6 / (400.0 * 400.0 * 100.0)).epsilon(1e-12));
        CHECK(compactness(s) == doctest::Approx(0.125).epsilon(1e-12));
    }
    SUBCASE("empty") { CHECK(compactness(PackingState::empty(BoxSpec{}, 0)) == 0.0); }
}

TEST_CASE("pyramidality examples") {
    SUBCASE("aligned stack of solid cubes") {
        const auto g = pbt::box_grid(3, 3, 3);
        const auto ctx = pbt::context_from_grids({g, g}, BoxSpec{10, 10, 2.0, 3000}, pbt::upright_only());
        PackingState s = PackingState::empty(ctx->box, 2);
        s = apply_placement(s, {0, 0, 0, 4, 4, 0, 0.0}, ctx->shapes[0][0]);
        s = apply_placement(s, {1, 0, 0, 4, 4, 60, 0.0}, ctx->shapes[1][0]);
        CHECK(pyramidality(s) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("2x2 terrain at 20 mm holding 6 cm^3") {
        VoxelGrid t({2, 2, 2}, 10000);
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y) t.set(x, y, 1);
        t.set(0, 0, 0);
        t.set(1, 1, 0);
        const auto ctx = pbt::context_from_grids({t}, BoxSpec{2, 2, 10.0, 3000}, pbt::upright_only());
        PackingState s = PackingState::empty(ctx->box, 1);
        s = apply_placement(s, {0, 0, 0, 1, 1, 0, 0.0}, ctx->shapes[0][0]);
        for (Height h : s.box.data()) CHECK(h == 200);
        CHECK(pyramidality(s) == doctest::Approx(0.75).epsilon(1e-12));
    }
}

TEST_CASE("stability scenes") {
    SUBCASE("cube on flat floor") {
        const Scene s = drop(Heightmap(10, 10, 10.0), upright(pbt::box_grid(3, 3, 3, 10000)), 5, 5);
        CHECK(check(s) == 1);
        CHECK(oracle(s) == 1);
    }
    SUBCASE("slab overhanging its only support by 30 mm") {
        Heightmap t(12, 12, 10.0);
        t.at(2, 5) = 500;
        const OrientedShape slab = upright(pbt::box_grid(8, 1, 1, 10000));
        const Scene s = drop(t, slab, footprint_center(2, 8), 5);
        CHECK(s.p.z == 500);
        CHECK(slab.com_x - 1.0 == doctest::Approx(3.0));
        CHECK(check(s) == 0);
        CHECK(oracle(s) == 0);
    }
    SUBCASE("plate bridging two towers") {
        Heightmap t(12, 12, 10.0);
        for (int y = 3; y < 7; ++y) {
            t.at(1, y) = 400;
            t.at(8, y) = 400;
        }
        const Scene s = drop(t, upright(pbt::box_grid(8, 4, 1, 10000)), footprint_center(1, 8), footprint_center(3, 4));
        CHECK(s.p.z == 400);
        CHECK(check(s) == 1);
        CHECK(oracle(s) == 1);
    }
    SUBCASE("no contact is a logic error") {
        const OrientedShape c = upright(pbt::box_grid(2, 2, 2, 10000));
        CHECK_THROWS_AS(stability_check(Heightmap(6, 6, 10.0), Placement{0, 0, 0, 3, 3, 50, 0.0}, c), std::logic_error);
    }
}

TEST_CASE("property: stability matches the oracle and is invariant under translation and quarter turns") {
    Rng rng(2024);
    const auto og = pbt::right_angles();
    int stable = 0, unstable = 0;
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
        const Scene s = drop(t, shape, footprint_center(x0, r), footprint_center(y0, c));
        const int base = check(s);
        CHECK(base == oracle(s));
        (base ? stable : unstable)++;

        const int dx = static_cast<int>(rng.below(7)), dy = static_cast<int>(rng.below(7));
        Heightmap moved(rows + dx + 3, cols + dy + 3, 10.0);
        for (int x = 0; x < rows; ++x)
            for (int y = 0; y < cols; ++y) moved.at(x + dx, y + dy) = t.at(x, y);
        const Scene ms = drop(moved, shape, footprint_center(x0 + dx, r), footprint_center(y0 + dy, c));
        CHECK(ms.p.z == s.p.z);
        CHECK(check(ms) == base);

        // Quarter turn of the whole scene: the terrain and a marker map of the
        // footprint go through the same exact permutation.
        Heightmap marker(rows, cols, 10.0);
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < c; ++b) marker.at(x0 + a, y0 + b) = 1;
        const Heightmap rt = rotate_map(t), rm = rotate_map(marker);
        int nx0 = rm.rows(), ny0 = rm.cols();
        for (int x = 0; x < rm.rows(); ++x)
            for (int y = 0; y < rm.cols(); ++y)
                if (rm.at(x, y)) {
                    nx0 = std::min(nx0, x);
                    ny0 = std::min(ny0, y);
                }
        const OrientedShape turned = orient_shape(g, og, 0, (j + 1) % 4);
        REQUIRE(turned.footprint_rows() == c);
        const Scene rs = drop(rt, turned, footprint_center(nx0, c), footprint_center(ny0, r));
        CHECK(rs.p.z == s.p.z);
        CHECK(check(rs) == base);
    }
    CHECK(stable > 10);
    CHECK(unstable > 10);
}

TEST_CASE("property: convex hull membership agrees with brute force") {
    Rng rng(9);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Point2> pts;
        const int n = 1 + static_cast<int>(rng.below(9));
        for (int k = 0; k < n; ++k)
            pts.push_back({static_cast<double>(rng.below(6)) + 0.5, static_cast<double>(rng.below(6)) + 0.5});
        const auto hull = convex_hull(pts);
        for (int q = 0; q < 20; ++q) {
            const Point2 p{rng.below(13) * 0.5, rng.below(13) * 0.5};
            CHECK(hull_contains(hull, p) == pbt::in_hull_bruteforce(pts, p));
        }
    }
}

TEST_CASE("objective and step reward") {
    const ObjectiveWeights w;
    CHECK(w.alpha == 0.75);
    CHECK(w.beta == 0.25);
    CHECK(w.gamma == 0.25);
    CHECK(objective(PackingState::empty(BoxSpec{}, 3), w) == 0.0);
    CHECK(objective_value(0.4, 0.8, 1.0, w) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(objective_value(0.37, 0.9, 0.5, {1, 0, 0}) == 0.37);
    CHECK(step_reward(0.42, 0.30) == doctest::Approx(0.12).epsilon(1e-12));
    CHECK(step_reward(0.5, 0.5) == 0.0);
}

TEST_CASE("stability term switch") {
    PackingState s = PackingState::empty(BoxSpec{}, 0);
    s.packed = {{{}, 1.0, 1}, {{}, 1.0, 1}, {{}, 1.0, 0}};
    CHECK(stability_value(s, StabilityTerm::latest) == 0.0);
    CHECK(stability_value(s, StabilityTerm::mean) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("property: 0 <= C <= P <= 1 and order-independent C on random packings") {
    Rng rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<VoxelGrid> grids;
        for (int k = 0; k < 6; ++k) grids.push_back(pbt::random_blob(rng, 4, 2000, 0.7));
        const BoxSpec box{10, 10, 2.0, 400};
        const auto ctx = pbt::context_from_grids(grids, box, pbt::right_angles());
        PackingState s = PackingState::empty(box, grids.size());
        for (std::size_t obj = 0; obj < grids.size(); ++obj) {
            const auto p = random_place(s, obj, ctx->shapes[obj], rng);
            if (!p) continue;
            const OrientedShape& shape = *find_shape(ctx->shapes[obj], p->i, p->j);
            s = apply_placement(s, *p, shape, stability_check(s.box, *p, shape));
            const double C = compactness(s), P = pyramidality(s);
            CHECK(C >= 0.0);
            CHECK(C <= P + 1e-12);
            CHECK(P <= 1.0 + 1e-12);
            const double J = objective(s, {0, 0, 1});
            CHECK(J >= 0.0);
            CHECK(J <= 1.0);
        }
    }
    const auto g = pbt::box_grid(2, 3, 2);
    const auto ctx = pbt::context_from_grids({g, g}, BoxSpec{8, 8, 2.0, 400}, pbt::upright_only());
    PackingState a = PackingState::empty(ctx->box, 2), b = a;
    const Placement p0{0, 0, 0, 1, 1, 0, 0.0}, p1{1, 0, 0, 5, 5, 0, 0.0};
    a = apply_placement(apply_placement(a, p0, ctx->shapes[0][0]), p1, ctx->shapes[1][0]);
    b = apply_placement(apply_placement(b, p1, ctx->shapes[1][0]), p0, ctx->shapes[0][0]);
    CHECK(a.box == b.box);
    CHECK(compactness(a) == compactness(b));
}
