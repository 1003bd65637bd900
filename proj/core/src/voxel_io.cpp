#include "packbench/voxel_io.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "json.hpp"

namespace packbench {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xff));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
    return v;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_pkvx(const VoxelGrid& grid) {
    const auto& d = grid.dims();
    std::vector<std::uint8_t> out = {'P', 'K', 'V', 'X'};
    put_u16(out, kPkvxVersion);
    put_u32(out, static_cast<std::uint32_t>(d.nx));
    put_u32(out, static_cast<std::uint32_t>(d.ny));
    put_u32(out, static_cast<std::uint32_t>(d.nz));
    put_u32(out, grid.cell_um());
    const std::size_t n = static_cast<std::size_t>(d.nx) * d.ny * d.nz;
    const std::size_t base = out.size();
    out.resize(base + (n + 7) / 8, 0);
    std::size_t bit = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x, ++bit)
                if (grid.occupied(x, y, z)) out[base + bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    return out;
}

VoxelGrid decode_pkvx(const std::vector<std::uint8_t>& in) {
    constexpr std::size_t header = 4 + 2 + 4 * 4;
    if (in.size() < header || in[0] != 'P' || in[1] != 'K' || in[2] != 'V' || in[3] != 'X')
        throw InvalidInput("pkvx: bad magic");
    const std::uint16_t version = static_cast<std::uint16_t>(in[4] | (in[5] << 8));
    if (version != kPkvxVersion) throw InvalidInput("pkvx: unsupported version " + std::to_string(version));
    const std::uint32_t nx = get_u32(in, 6), ny = get_u32(in, 10), nz = get_u32(in, 14), cell = get_u32(in, 18);
    if (nx == 0 || ny == 0 || nz == 0 || nx > 65536 || ny > 65536 || nz > 65536)
        throw InvalidInput("pkvx: bad dimensions");
    const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
    if (in.size() != header + (n + 7) / 8) throw InvalidInput("pkvx: payload size mismatch");
    VoxelGrid g({static_cast<int>(nx), static_cast<int>(ny), static_cast<int>(nz)}, cell);
    std::size_t bit = 0;
    for (std::uint32_t z = 0; z < nz; ++z)
        for (std::uint32_t y = 0; y < ny; ++y)
            for (std::uint32_t x = 0; x < nx; ++x, ++bit)
                if (in[header + bit / 8] & (1u << (bit % 8)))
                    g.set(static_cast<int>(x), static_cast<int>(y), static_cast<int>(z));
    return g;
}

std::string voxels_to_json(const VoxelGrid& grid) {
    const auto& d = grid.dims();
    nlohmann::json layers = nlohmann::json::array();
    for (int z = 0; z < d.nz; ++z) {
        nlohmann::json rows = nlohmann::json::array();
        for (int y = 0; y < d.ny; ++y) {
            std::string row(static_cast<std::size_t>(d.nx), '.');
            for (int x = 0; x < d.nx; ++x)
                if (grid.occupied(x, y, z)) row[static_cast<std::size_t>(x)] = '#';
            rows.push_back(row);
        }
        layers.push_back(rows);
    }
    nlohmann::json j = {{"format", "pkvx-json"},
                        {"version", kPkvxVersion},
                        {"dims", {d.nx, d.ny, d.nz}},
                        {"cell_um", grid.cell_um()},
                        {"layers", layers}};
    return j.dump(1) + "\n";
}

VoxelGrid voxels_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("pkvx-json: ") + e.what());
    }
    if (j.value("format", "") != "pkvx-json") throw InvalidInput("pkvx-json: missing format tag");
    if (j.value("version", 0) != kPkvxVersion) throw InvalidInput("pkvx-json: unsupported version");
    const auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() != 3) throw InvalidInput("pkvx-json: dims must have three entries");
    VoxelGrid g({dims[0], dims[1], dims[2]}, j.at("cell_um").get<std::uint32_t>());
    const auto& layers = j.at("layers");
    if (layers.size() != static_cast<std::size_t>(dims[2])) throw InvalidInput("pkvx-json: layer count != nz");
    for (int z = 0; z < dims[2]; ++z) {
        const auto& rows = layers[static_cast<std::size_t>(z)];
        if (rows.size() != static_cast<std::size_t>(dims[1])) throw InvalidInput("pkvx-json: row count != ny");
        for (int y = 0; y < dims[1]; ++y) {
            const auto row = rows[static_cast<std::size_t>(y)].get<std::string>();
            if (row.size() != static_cast<std::size_t>(dims[0])) throw InvalidInput("pkvx-json: row length != nx");
            for (int x = 0; x < dims[0]; ++x) {
                const char c = row[static_cast<std::size_t>(x)];
                if (c == '#')
                    g.set(x, y, z);
                else if (c != '.')
                    throw InvalidInput("pkvx-json: cells must be '#' or '.'");
            }
        }
    }
    return g;
}

void write_pkvx_file(const std::string& path, const VoxelGrid& grid) {
    const auto bytes = encode_pkvx(grid);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

VoxelGrid read_pkvx_file(const std::string& path) { return decode_pkvx(slurp(path)); }

VoxelGrid read_voxel_file(const std::string& path) {
    auto bytes = slurp(path);
    if (bytes.size() >= 4 && bytes[0] == 'P' && bytes[1] == 'K' && bytes[2] == 'V' && bytes[3] == 'X')
        return decode_pkvx(bytes);
    return voxels_from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace packbench
