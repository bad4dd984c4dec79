#pragma once

#include "bousfem/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace bousfem {

using Vec2 = Eigen::Vector2d;

enum class BoundaryMarker : std::uint8_t { left, right, bottom, top };

inline const char* to_string(BoundaryMarker m) {
    switch (m) {
        case BoundaryMarker::left: return "left";
        case BoundaryMarker::right: return "right";
        case BoundaryMarker::bottom: return "bottom";
        case BoundaryMarker::top: return "top";
    }
    return "?";
}

struct BoundaryEdge {
    int v0;
    int v1;
    BoundaryMarker marker;
};

/// Conforming triangulation of an axis-aligned rectangle.
/// Triangles are counterclockwise; immutable after construction.
struct TriMesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<BoundaryEdge> boundary_edges;
    double h_max = 0.0;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }

    double signed_area(int t) const {
        const auto& tri = triangles[t];
        const Vec2 a = vertices[tri[1]] - vertices[tri[0]];
        const Vec2 b = vertices[tri[2]] - vertices[tri[0]];
        return 0.5 * (a.x() * b.y() - a.y() * b.x());
    }

    double total_area() const {
        double s = 0.0;
        for (int t = 0; t < num_triangles(); ++t) s += signed_area(t);
        return s;
    }
};

namespace detail {

inline double longest_edge(const TriMesh& m, int t) {
    const auto& tri = m.triangles[t];
    double e = 0.0;
    for (int k = 0; k < 3; ++k) {
        e = std::max(e, (m.vertices[tri[k]] - m.vertices[tri[(k + 1) % 3]]).norm());
    }
    return e;
}

inline void compute_h_max(TriMesh& m) {
    m.h_max = 0.0;
    for (int t = 0; t < m.num_triangles(); ++t) {
        m.h_max = std::max(m.h_max, longest_edge(m, t));
    }
}

} // namespace detail

/// Structured triangulation of [x0,x1]x[y0,y1] with nx-by-ny cells, each cell
/// split along its lower-left to upper-right diagonal (fixed convention so
/// meshes are reproducible bit-for-bit).
inline TriMesh build_rect_mesh(double x0, double x1, double y0, double y1, int nx, int ny) {
    if (!(x1 > x0) || !(y1 > y0)) {
        throw MeshError("build_rect_mesh: degenerate range");
    }
    if (nx < 1 || ny < 1) {
        throw MeshError("build_rect_mesh: nx and ny must be >= 1");
    }

    TriMesh m;
    const int npx = nx + 1;
    const int npy = ny + 1;
    m.vertices.reserve(static_cast<std::size_t>(npx) * npy);
    for (int j = 0; j < npy; ++j) {
        for (int i = 0; i < npx; ++i) {
            const double x = x0 + (x1 - x0) * static_cast<double>(i) / nx;
            const double y = y0 + (y1 - y0) * static_cast<double>(j) / ny;
            m.vertices.emplace_back(x, y);
        }
    }

    auto vid = [npx](int i, int j) { return j * npx + i; };

    m.triangles.reserve(2u * nx * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int v00 = vid(i, j);
            const int v10 = vid(i + 1, j);
            const int v01 = vid(i, j + 1);
            const int v11 = vid(i + 1, j + 1);
            // both children counterclockwise, diagonal v00->v11
            m.triangles.push_back({v00, v10, v11});
            m.triangles.push_back({v00, v11, v01});
        }
    }

    for (int i = 0; i < nx; ++i) {
        m.boundary_edges.push_back({vid(i, 0), vid(i + 1, 0), BoundaryMarker::bottom});
        m.boundary_edges.push_back({vid(i, ny), vid(i + 1, ny), BoundaryMarker::top});
    }
    for (int j = 0; j < ny; ++j) {
        m.boundary_edges.push_back({vid(0, j), vid(0, j + 1), BoundaryMarker::left});
        m.boundary_edges.push_back({vid(nx, j), vid(nx, j + 1), BoundaryMarker::right});
    }

    detail::compute_h_max(m);
    return m;
}

/// Uniform red refinement: every triangle splits into 4 via edge midpoints.
/// Child boundary edges keep the parent marker; h_max halves exactly.
inline TriMesh refine_uniform(const TriMesh& mesh) {
    TriMesh out;
    out.vertices = mesh.vertices;

    std::map<std::pair<int, int>, int> midpoint; // sorted vertex pair -> new vertex id
    auto mid = [&](int a, int b) {
        auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const int id = out.num_vertices();
        out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
        midpoint.emplace(key, id);
        return id;
    };

    out.triangles.reserve(4u * mesh.triangles.size());
    for (const auto& tri : mesh.triangles) {
        const int a = tri[0], b = tri[1], c = tri[2];
        const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
        out.triangles.push_back({a, ab, ca});
        out.triangles.push_back({ab, b, bc});
        out.triangles.push_back({ca, bc, c});
        out.triangles.push_back({ab, bc, ca});
    }

    out.boundary_edges.reserve(2u * mesh.boundary_edges.size());
    for (const auto& e : mesh.boundary_edges) {
        const int m = mid(e.v0, e.v1);
        out.boundary_edges.push_back({e.v0, m, e.marker});
        out.boundary_edges.push_back({m, e.v1, e.marker});
    }

    out.h_max = 0.5 * mesh.h_max;
    return out;
}

} // namespace bousfem
