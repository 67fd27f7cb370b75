#pragma once

// Voxel lattice, the directed acyclic graph of parent sets used by the
// spatial prior, and the Moore neighborhood used by tracking.
//
// Voxel ids are 0-based linear indices with x fastest, then y, then z. The
// DAG ranks voxels with z slowest, then y, then x, which makes rank(v) = v + 1.

#include <spdist/errors.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace spdist {

using VoxelId = std::size_t;

struct VoxelCoord {
    int x = 0;
    int y = 0;
    int z = 0;
    friend constexpr auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

struct GridDims {
    int nx = 1;
    int ny = 1;
    int nz = 1;

    constexpr std::size_t count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    constexpr bool contains(VoxelCoord c) const {
        return c.x >= 0 && c.x < nx && c.y >= 0 && c.y < ny && c.z >= 0 && c.z < nz;
    }
    constexpr VoxelId id(VoxelCoord c) const {
        return static_cast<VoxelId>(c.x) +
               static_cast<VoxelId>(nx) * (static_cast<VoxelId>(c.y) + static_cast<VoxelId>(ny) * static_cast<VoxelId>(c.z));
    }
    constexpr VoxelCoord coord(VoxelId v) const {
        const auto sx = static_cast<VoxelId>(nx), sy = static_cast<VoxelId>(ny);
        return {static_cast<int>(v % sx), static_cast<int>((v / sx) % sy), static_cast<int>(v / (sx * sy))};
    }
    void validate() const {
        if (nx < 1 || ny < 1 || nz < 1) {
            throw ConfigError("grid dimensions must be positive, got " + std::to_string(nx) + "x" +
                              std::to_string(ny) + "x" + std::to_string(nz));
        }
    }
    friend constexpr bool operator==(const GridDims&, const GridDims&) = default;
};

// Which lattice offsets count as adjacent in the model graph.
enum class Adjacency {
    Face,  // 4 in 2-D, 6 in 3-D
    Moore, // 8 in 2-D, 26 in 3-D
};

namespace detail {

inline std::vector<VoxelCoord> offsets(Adjacency adj) {
    std::vector<VoxelCoord> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
                if (nonzero == 0) continue;
                if (adj == Adjacency::Face && nonzero != 1) continue;
                out.push_back({dx, dy, dz});
            }
    return out;
}

inline std::vector<VoxelId> neighbors(VoxelId v, const GridDims& dims, Adjacency adj) {
    static const std::vector<VoxelCoord> face = offsets(Adjacency::Face);
    static const std::vector<VoxelCoord> moore = offsets(Adjacency::Moore);
    const VoxelCoord c = dims.coord(v);
    std::vector<VoxelId> out;
    for (const VoxelCoord& o : adj == Adjacency::Face ? face : moore) {
        const VoxelCoord n{c.x + o.x, c.y + o.y, c.z + o.z};
        if (dims.contains(n)) out.push_back(dims.id(n));
    }
    return out;
}

} // namespace detail

// Tracking neighborhood: all Moore neighbors clipped to the grid, in
// increasing id order.
inline std::vector<VoxelId> neighbors_tracking(VoxelId v, const GridDims& dims) {
    return detail::neighbors(v, dims, Adjacency::Moore);
}

struct DirectedEdge {
    VoxelId src = 0;
    VoxelId dst = 0;
    friend constexpr auto operator<=>(const DirectedEdge&, const DirectedEdge&) = default;
};

class VoxelGraph {
public:
    VoxelGraph() = default;

    const GridDims& dims() const { return dims_; }
    std::size_t size() const { return parents_.size(); }

    // 1-based position in the voxel ordering.
    std::size_t rank(VoxelId v) const { return v + 1; }

    const std::vector<VoxelId>& parents(VoxelId v) const { return parents_[v]; }
    const std::vector<VoxelId>& children(VoxelId v) const { return children_[v]; }

    std::size_t edge_count() const {
        std::size_t n = 0;
        for (const auto& p : parents_) n += p.size();
        return n;
    }

    // Edges sorted by (src, dst).
    std::vector<DirectedEdge> edges() const {
        std::vector<DirectedEdge> out;
        for (VoxelId u = 0; u < children_.size(); ++u)
            for (VoxelId v : children_[u]) out.push_back({u, v});
        return out;
    }

    friend VoxelGraph build_dag(const GridDims& dims, Adjacency adj);

private:
    GridDims dims_;
    std::vector<std::vector<VoxelId>> parents_;
    std::vector<std::vector<VoxelId>> children_;
};

// Orient every undirected lattice edge from the lower-ranked voxel to the
// higher-ranked one.
inline VoxelGraph build_dag(const GridDims& dims, Adjacency adj = Adjacency::Face) {
    dims.validate();
    VoxelGraph g;
    g.dims_ = dims;
    const std::size_t n = dims.count();
    g.parents_.assign(n, {});
    g.children_.assign(n, {});
    for (VoxelId v = 0; v < n; ++v) {
        for (VoxelId u : detail::neighbors(v, dims, adj)) {
            if (u < v) g.parents_[v].push_back(u);
            else g.children_[v].push_back(u);
        }
    }
    return g;
}

// Debug export: header "src,dst", one directed edge per row (voxel ids).
inline void write_edge_list(std::ostream& out, const VoxelGraph& g) {
    out << "src,dst\n";
    for (const DirectedEdge& e : g.edges()) out << e.src << ',' << e.dst << '\n';
}

} // namespace spdist
