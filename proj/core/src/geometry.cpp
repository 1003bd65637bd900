#include "packbench/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace packbench {

namespace {

constexpr double kAngleTol = 1e-9;

double wrap_angle(double a) {
    double w = std::fmod(a, 2.0 * kPi);
    if (w < 0) w += 2.0 * kPi;
    if (std::abs(w - 2.0 * kPi) < kAngleTol) w = 0.0;
    return w;
}

bool same_angle(double a, double b) {
    double d = std::abs(wrap_angle(a) - wrap_angle(b));
    return d < kAngleTol || std::abs(d - 2.0 * kPi) < kAngleTol;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 mul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
    return r;
}

double snap(double v) {
    if (std::abs(v) < 1e-12) return 0.0;
    if (std::abs(v - 1.0) < 1e-12) return 1.0;
    if (std::abs(v + 1.0) < 1e-12) return -1.0;
    return v;
}

Mat3 rotation_matrix(const EulerAngles& e) {
    const double cr = snap(std::cos(e.roll)), sr = snap(std::sin(e.roll));
    const double cp = snap(std::cos(e.pitch)), sp = snap(std::sin(e.pitch));
    const double cy = snap(std::cos(e.yaw)), sy = snap(std::sin(e.yaw));
    const Mat3 rx{{{1, 0, 0}, {0, cr, -sr}, {0, sr, cr}}};
    const Mat3 ry{{{cp, 0, sp}, {0, 1, 0}, {-sp, 0, cp}}};
    const Mat3 rz{{{cy, -sy, 0}, {sy, cy, 0}, {0, 0, 1}}};
    Mat3 r = mul(rz, mul(ry, rx));
    for (auto& row : r)
        for (auto& v : row) v = snap(v);
    return r;
}

struct Com {
    double x = 0, y = 0, z = 0;
    std::int64_t n = 0;
};

Com center_of_mass(const VoxelGrid& g) {
    Com c;
    const auto& d = g.dims();
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x)
                if (g.occupied(x, y, z)) {
                    c.x += x + 0.5;
                    c.y += y + 0.5;
                    c.z += z + 0.5;
                    ++c.n;
                }
    if (c.n > 0) {
        c.x /= c.n;
        c.y /= c.n;
        c.z = c.z / c.n * g.cell_mm();
    }
    return c;
}

// Quarter turn: out(c-1-y, x) = in(x, y); continuous (px, py) -> (c - py, px).
Heightmap rot90(const Heightmap& in) {
    Heightmap out(in.cols(), in.rows(), in.cell_mm());
    for (int x = 0; x < in.rows(); ++x)
        for (int y = 0; y < in.cols(); ++y) out.at(in.cols() - 1 - y, x) = in.at(x, y);
    return out;
}

struct YawResult {
    ViewPair views;
    double com_x = 0, com_y = 0;
};

YawResult yaw_transform(const ViewPair& v, double psi, double com_x, double com_y) {
    if (v.top.rows() != v.bottom.rows() || v.top.cols() != v.bottom.cols())
        throw InvalidInput("rotate_yaw: top and bottom maps differ in size");
    YawResult r{v, com_x, com_y};
    const double w = wrap_angle(psi);
    if (is_right_angle(w)) {
        const int quarters = static_cast<int>(std::llround(w / (kPi / 2))) % 4;
        for (int q = 0; q < quarters; ++q) {
            const int c = r.views.top.cols();
            r.views.top = rot90(r.views.top);
            r.views.bottom = rot90(r.views.bottom);
            const double px = r.com_x, py = r.com_y;
            r.com_x = c - py;
            r.com_y = px;
        }
        return r;
    }

    // Nearest-cell resampling about the footprint center.
    const int rin = v.top.rows(), cin = v.top.cols();
    const double cs = std::cos(w), sn = std::sin(w);
    const double ext_r = std::abs(rin * cs) + std::abs(cin * sn);
    const double ext_c = std::abs(rin * sn) + std::abs(cin * cs);
    const int rout = std::max(1, static_cast<int>(std::ceil(ext_r - 1e-9)));
    const int cout = std::max(1, static_cast<int>(std::ceil(ext_c - 1e-9)));
    Heightmap top(rout, cout, v.top.cell_mm(), 0);
    Heightmap bottom(rout, cout, v.top.cell_mm(), kNoSupport);
    const double icx = rin / 2.0, icy = cin / 2.0;
    const double ocx = rout / 2.0, ocy = cout / 2.0;
    for (int u = 0; u < rout; ++u)
        for (int t = 0; t < cout; ++t) {
            const double dx = u + 0.5 - ocx, dy = t + 0.5 - ocy;
            // inverse rotation
            const double sx = cs * dx + sn * dy + icx;
            const double sy = -sn * dx + cs * dy + icy;
            const int ix = static_cast<int>(std::floor(sx));
            const int iy = static_cast<int>(std::floor(sy));
            if (ix < 0 || iy < 0 || ix >= rin || iy >= cin) continue;
            if (v.top.at(ix, iy) == 0) continue;
            top.at(u, t) = v.top.at(ix, iy);
            bottom.at(u, t) = v.bottom.at(ix, iy);
        }
    const double dx = com_x - icx, dy = com_y - icy;
    double ncx = cs * dx - sn * dy + ocx;
    double ncy = sn * dx + cs * dy + ocy;

    // Re-tighten to the non-empty columns.
    int x0 = rout, x1 = -1, y0 = cout, y1 = -1;
    for (int u = 0; u < rout; ++u)
        for (int t = 0; t < cout; ++t)
            if (top.at(u, t) > 0) {
                x0 = std::min(x0, u);
                x1 = std::max(x1, u);
                y0 = std::min(y0, t);
                y1 = std::max(y1, t);
            }
    if (x1 < 0) throw InvalidInput("rotate_yaw: empty footprint");
    Heightmap ct(x1 - x0 + 1, y1 - y0 + 1, top.cell_mm());
    Heightmap cb(x1 - x0 + 1, y1 - y0 + 1, top.cell_mm());
    for (int u = x0; u <= x1; ++u)
        for (int t = y0; t <= y1; ++t) {
            ct.at(u - x0, t - y0) = top.at(u, t);
            cb.at(u - x0, t - y0) = bottom.at(u, t);
        }
    r.views = {std::move(ct), std::move(cb)};
    r.com_x = ncx - x0;
    r.com_y = ncy - y0;
    return r;
}

std::int64_t column_volume(const ViewPair& v) {
    std::int64_t s = 0;
    for (int x = 0; x < v.top.rows(); ++x)
        for (int y = 0; y < v.top.cols(); ++y)
            if (v.top.at(x, y) > 0) s += v.top.at(x, y) - v.bottom.at(x, y);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Heightmap

Heightmap::Heightmap(int rows, int cols, double cell_mm, Height fill)
    : rows_(rows), cols_(cols), cell_mm_(cell_mm), heights_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows <= 0 || cols <= 0) throw InvalidInput("Heightmap: dimensions must be positive");
    if (!(cell_mm > 0)) throw InvalidInput("Heightmap: cell size must be positive");
    if (fill < 0) throw InvalidInput("Heightmap: heights must be non-negative");
}

Heightmap::Heightmap(int rows, int cols, double cell_mm, std::vector<Height> heights)
    : rows_(rows), cols_(cols), cell_mm_(cell_mm), heights_(std::move(heights)) {
    if (rows <= 0 || cols <= 0) throw InvalidInput("Heightmap: dimensions must be positive");
    if (!(cell_mm > 0)) throw InvalidInput("Heightmap: cell size must be positive");
    if (heights_.size() != static_cast<std::size_t>(rows) * cols)
        throw InvalidInput("Heightmap: heights length does not match dimensions");
    if (std::any_of(heights_.begin(), heights_.end(), [](Height h) { return h < 0; }))
        throw InvalidInput("Heightmap: heights must be non-negative");
}

Height Heightmap::max() const {
    Height m = 0;
    for (Height h : heights_)
        if (h != kNoSupport) m = std::max(m, h);
    return m;
}

std::int64_t Heightmap::sum() const {
    std::int64_t s = 0;
    for (Height h : heights_)
        if (h != kNoSupport) s += h;
    return s;
}

// ---------------------------------------------------------------------------
// VoxelGrid

VoxelGrid::VoxelGrid(GridDims dims, std::uint32_t cell_um) : dims_(dims), cell_um_(cell_um) {
    if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw InvalidInput("VoxelGrid: dimensions must be positive");
    if (cell_um == 0 || cell_um % 100 != 0)
        throw InvalidInput("VoxelGrid: cell size must be a positive multiple of 0.1 mm");
    occ_.assign(static_cast<std::size_t>(dims.nx) * dims.ny * dims.nz, 0);
}

std::int64_t VoxelGrid::count() const {
    return std::count(occ_.begin(), occ_.end(), std::uint8_t{1});
}

double VoxelGrid::volume_mm3() const {
    const double c = cell_mm();
    return static_cast<double>(count()) * c * c * c;
}

VoxelGrid VoxelGrid::tightened() const {
    int x0 = dims_.nx, y0 = dims_.ny, z0 = dims_.nz, x1 = -1, y1 = -1, z1 = -1;
    for (int z = 0; z < dims_.nz; ++z)
        for (int y = 0; y < dims_.ny; ++y)
            for (int x = 0; x < dims_.nx; ++x)
                if (occupied(x, y, z)) {
                    x0 = std::min(x0, x), x1 = std::max(x1, x);
                    y0 = std::min(y0, y), y1 = std::max(y1, y);
                    z0 = std::min(z0, z), z1 = std::max(z1, z);
                }
    if (x1 < 0) throw InvalidInput("VoxelGrid: no occupied voxels");
    VoxelGrid out({x1 - x0 + 1, y1 - y0 + 1, z1 - z0 + 1}, cell_um_);
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (occupied(x, y, z)) out.set(x - x0, y - y0, z - z0);
    return out;
}

bool VoxelGrid::is_tight() const {
    if (empty()) return false;
    return tightened().dims() == dims_;
}

// ---------------------------------------------------------------------------
// Objects and principal views

std::array<Heightmap, 6> render_principal_views(const VoxelGrid& input) {
    if (input.dims().nx <= 0 || input.empty()) throw InvalidInput("render_principal_views: empty voxel grid");
    const VoxelGrid g = input.tightened();
    const auto [nx, ny, nz] = g.dims();
    const Height h = g.layer_height();
    const double c = g.cell_mm();

    std::array<Heightmap, 6> v{
        Heightmap(nx, nz, c), Heightmap(nx, nz, c),  // front, rear
        Heightmap(ny, nz, c), Heightmap(ny, nz, c),  // left, right
        Heightmap(nx, ny, c), Heightmap(nx, ny, c),  // top, bottom
    };
    auto& front = v[static_cast<int>(View::front)];
    auto& rear = v[static_cast<int>(View::rear)];
    auto& left = v[static_cast<int>(View::left)];
    auto& right = v[static_cast<int>(View::right)];
    auto& top = v[static_cast<int>(View::top)];
    auto& bottom = v[static_cast<int>(View::bottom)];

    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                if (!g.occupied(x, y, z)) continue;
                top.at(x, y) = std::max(top.at(x, y), (z + 1) * h);
                bottom.at(x, y) = std::max(bottom.at(x, y), (nz - z) * h);
                rear.at(x, z) = std::max(rear.at(x, z), (y + 1) * h);
                front.at(x, z) = std::max(front.at(x, z), (ny - y) * h);
                right.at(y, z) = std::max(right.at(y, z), (x + 1) * h);
                left.at(y, z) = std::max(left.at(y, z), (nx - x) * h);
            }
    return v;
}

ObjectModel make_object(std::string id, const VoxelGrid& grid) {
    if (grid.dims().nx <= 0 || grid.empty()) throw InvalidInput("make_object: empty voxel grid");
    ObjectModel m;
    m.id = std::move(id);
    m.grid = grid.tightened();
    const auto& d = m.grid.dims();
    const double c = m.grid.cell_mm();
    m.bbox_dims = {d.nx * c, d.ny * c, d.nz * c};
    m.volume = m.grid.volume_mm3();
    m.principal_views = render_principal_views(m.grid);
    return m;
}

double bbox_volume(const ObjectModel& m) { return m.bbox_dims[0] * m.bbox_dims[1] * m.bbox_dims[2]; }

// ---------------------------------------------------------------------------
// Orientations

OrientationGrid::OrientationGrid(std::vector<std::pair<double, double>> rp_set, std::vector<double> yaw_set)
    : rp_(std::move(rp_set)), yaw_(std::move(yaw_set)) {
    if (rp_.empty() || yaw_.empty()) throw InvalidInput("OrientationGrid: empty angle set");
    auto in_range = [](double a) { return a >= 0.0 && a < 2.0 * kPi; };
    for (auto [r, p] : rp_)
        if (!in_range(r) || !in_range(p)) throw InvalidInput("OrientationGrid: roll/pitch outside [0, 2pi)");
    for (double y : yaw_)
        if (!in_range(y)) throw InvalidInput("OrientationGrid: yaw outside [0, 2pi)");
    if (yaw_.front() != 0.0) throw InvalidInput("OrientationGrid: yaw set must start at 0");
    if (yaw_.size() > 1) {
        const double step = yaw_[1] - yaw_[0];
        for (std::size_t k = 1; k < yaw_.size(); ++k)
            if (std::abs(yaw_[k] - yaw_[k - 1] - step) > kAngleTol)
                throw InvalidInput("OrientationGrid: yaw values must be equally spaced");
    }
}

OrientationGrid OrientationGrid::from_intervals(double rp_interval, double yaw_interval) {
    auto steps = [](double interval, const char* what) {
        if (!(interval > 0)) throw InvalidInput(std::string("OrientationGrid: non-positive ") + what + " interval");
        const double n = 2.0 * kPi / interval;
        const long k = std::lround(n);
        if (k < 1 || std::abs(k * interval - 2.0 * kPi) > 1e-9)
            throw InvalidInput(std::string("OrientationGrid: ") + what + " interval must divide 2*pi");
        return static_cast<int>(k);
    };
    const int nrp = steps(rp_interval, "roll/pitch");
    const int ny = steps(yaw_interval, "yaw");
    std::vector<std::pair<double, double>> rp;
    for (int a = 0; a < nrp; ++a)
        for (int b = 0; b < nrp; ++b) rp.emplace_back(a * rp_interval, b * rp_interval);
    std::vector<double> yaw;
    for (int k = 0; k < ny; ++k) yaw.push_back(k * yaw_interval);
    return OrientationGrid(std::move(rp), std::move(yaw));
}

std::optional<int> OrientationGrid::rp_index(double roll, double pitch) const {
    for (std::size_t i = 0; i < rp_.size(); ++i)
        if (same_angle(rp_[i].first, roll) && same_angle(rp_[i].second, pitch)) return static_cast<int>(i);
    return std::nullopt;
}

std::optional<int> OrientationGrid::yaw_index(double yaw) const {
    for (std::size_t j = 0; j < yaw_.size(); ++j)
        if (same_angle(yaw_[j], yaw)) return static_cast<int>(j);
    return std::nullopt;
}

EulerAngles OrientationGrid::euler(int i, int j) const {
    return {rp_.at(static_cast<std::size_t>(i)).first, rp_.at(static_cast<std::size_t>(i)).second,
            yaw_.at(static_cast<std::size_t>(j))};
}

bool is_right_angle(double radians) {
    const double q = radians / (kPi / 2);
    return std::abs(q - std::round(q)) < 1e-9;
}

VoxelGrid rotate_voxels(const VoxelGrid& grid, const EulerAngles& angles) {
    if (grid.empty()) throw InvalidInput("rotate_voxels: empty voxel grid");
    const Mat3 r = rotation_matrix(angles);
    const auto& d = grid.dims();

    std::vector<std::array<double, 3>> pts;
    pts.reserve(static_cast<std::size_t>(grid.count()));
    std::array<double, 3> lo{1e300, 1e300, 1e300};
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                if (!grid.occupied(x, y, z)) continue;
                const double c[3] = {x + 0.5, y + 0.5, z + 0.5};
                std::array<double, 3> p{};
                for (int a = 0; a < 3; ++a) {
                    p[a] = r[a][0] * c[0] + r[a][1] * c[1] + r[a][2] * c[2];
                    lo[a] = std::min(lo[a], p[a]);
                }
                pts.push_back(p);
            }

    std::array<long long, 3> hi{0, 0, 0};
    std::vector<std::array<int, 3>> idx(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k)
        for (int a = 0; a < 3; ++a) {
            const long long v = std::llround(pts[k][a] - lo[a]);
            idx[k][a] = static_cast<int>(v);
            hi[a] = std::max(hi[a], v);
        }

    VoxelGrid out({static_cast<int>(hi[0] + 1), static_cast<int>(hi[1] + 1), static_cast<int>(hi[2] + 1)},
                  grid.cell_um());
    for (const auto& i : idx) out.set(i[0], i[1], i[2]);
    return out;
}

ViewPair column_views(const VoxelGrid& input) {
    const VoxelGrid g = input.is_tight() ? input : input.tightened();
    const auto [nx, ny, nz] = g.dims();
    const Height h = g.layer_height();
    ViewPair v{Heightmap(nx, ny, g.cell_mm(), 0), Heightmap(nx, ny, g.cell_mm(), kNoSupport)};
    for (int x = 0; x < nx; ++x)
        for (int y = 0; y < ny; ++y)
            for (int z = 0; z < nz; ++z)
                if (g.occupied(x, y, z)) {
                    v.bottom.at(x, y) = std::min(v.bottom.at(x, y), z * h);
                    v.top.at(x, y) = std::max(v.top.at(x, y), (z + 1) * h);
                }
    return v;
}

ViewPair oriented_views(const VoxelGrid& grid, const OrientationGrid& orientations, double roll, double pitch) {
    if (!orientations.rp_index(roll, pitch))
        throw InvalidInput("oriented_views: (roll, pitch) is not in the orientation grid");
    return column_views(rotate_voxels(grid, {roll, pitch, 0.0}));
}

ViewPair rotate_yaw(const ViewPair& views, double psi) {
    return yaw_transform(views, psi, 0.0, 0.0).views;
}

namespace {

OrientedShape finish_shape(const VoxelGrid& rotated, const OrientationGrid& og, int i, int j) {
    const ViewPair base = column_views(rotated);
    const Com com = center_of_mass(rotated);
    const double yaw = og.yaw_set().at(static_cast<std::size_t>(j));
    YawResult y = yaw_transform(base, yaw, com.x, com.y);

    OrientedShape s;
    s.rp_index = i;
    s.yaw_index = j;
    s.voxel_count = com.n;
    if (!is_right_angle(yaw)) {
        // Resampling can change the column volume; scale the count with it so
        // the packed volume never exceeds the space the maps claim.
        const double before = static_cast<double>(column_volume(base));
        const double after = static_cast<double>(column_volume(y.views));
        s.voxel_count = static_cast<std::int64_t>(std::floor(com.n * std::min(1.0, after / before)));
    }
    s.views = std::move(y.views);
    s.peak = s.views.top.max();
    const double c = rotated.cell_mm();
    s.volume_mm3 = static_cast<double>(s.voxel_count) * c * c * c;
    s.com_x = y.com_x;
    s.com_y = y.com_y;
    s.com_z = com.z;
    return s;
}

}  // namespace

OrientedShape orient_shape(const VoxelGrid& grid, const OrientationGrid& orientations, int i, int j) {
    const EulerAngles e = orientations.euler(i, j);
    return finish_shape(rotate_voxels(grid, {e.roll, e.pitch, 0.0}), orientations, i, j);
}

std::vector<OrientedShape> enumerate_orientations(const VoxelGrid& grid, const OrientationGrid& orientations) {
    std::vector<OrientedShape> out;
    auto same = [](const OrientedShape& a, const OrientedShape& b) {
        return a.views.top == b.views.top && a.views.bottom == b.views.bottom &&
               std::abs(a.com_x - b.com_x) < 1e-9 && std::abs(a.com_y - b.com_y) < 1e-9 &&
               std::abs(a.com_z - b.com_z) < 1e-9 && a.voxel_count == b.voxel_count;
    };
    for (int i = 0; i < orientations.rp_count(); ++i) {
        const auto [roll, pitch] = orientations.rp_set()[static_cast<std::size_t>(i)];
        const VoxelGrid rotated = rotate_voxels(grid, {roll, pitch, 0.0});
        for (int j = 0; j < orientations.yaw_count(); ++j) {
            OrientedShape s = finish_shape(rotated, orientations, i, j);
            if (std::none_of(out.begin(), out.end(), [&](const OrientedShape& o) { return same(o, s); }))
                out.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace packbench
