// Conforming triangulations of the three model domains with
// newest-vertex-bisection refinement (uniform and adaptive).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpg {

struct MeshError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DomainSpec { UnitSquare, LShape, Slit };

inline const char* domain_name(DomainSpec d) {
    switch (d) {
        case DomainSpec::UnitSquare: return "square";
        case DomainSpec::LShape: return "lshape";
        case DomainSpec::Slit: return "slit";
    }
    return "?";
}

inline double domain_area(DomainSpec d) {
    switch (d) {
        case DomainSpec::UnitSquare: return 1.0;
        case DomainSpec::LShape: return 3.0;
        case DomainSpec::Slit: return 4.0;
    }
    return 0.0;
}

struct Vertex {
    int id;
    double x, y;
};

struct Triangle {
    std::array<int, 3> v;  // counterclockwise
    int refinement_edge;   // local edge index, edge i is opposite vertex i
    int generation = 0;
};

struct Edge {
    std::array<int, 2> v;    // endpoint ids, v[0] < v[1]
    std::array<int, 2> tri;  // adjacent triangles, tri[1] = -1 on the boundary
    bool boundary = false;
    double nx = 0, ny = 0;  // unit normal (fixed global orientation)
    double tx = 0, ty = 0;  // unit tangent, from v[0] to v[1]
    double length = 0;
};

class Mesh {
public:
    Mesh() = default;

    /// Builds edge/adjacency data from vertices and triangles and audits
    /// conformity. Throws MeshError on a broken input.
    Mesh(DomainSpec domain, std::vector<Vertex> vertices, std::vector<Triangle> triangles)
        : domain_(domain), vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
        build_topology();
    }

    DomainSpec domain() const { return domain_; }
    const std::vector<Vertex>& vertices() const { return vertices_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    const std::vector<Edge>& edges() const { return edges_; }
    int n_vertices() const { return static_cast<int>(vertices_.size()); }
    int n_triangles() const { return static_cast<int>(triangles_.size()); }
    int n_edges() const { return static_cast<int>(edges_.size()); }

    /// Edge indices of triangle t; entry i is the edge opposite local vertex i.
    const std::array<int, 3>& triangle_edges(int t) const { return tri_edges_[t]; }

    /// Triangle across edge e of triangle t, or -1 on the boundary.
    int neighbor(int t, int local_edge) const {
        const Edge& e = edges_[tri_edges_[t][local_edge]];
        return e.tri[0] == t ? e.tri[1] : e.tri[0];
    }

    bool vertex_on_boundary(int v) const { return vertex_on_boundary_[v]; }

    double area(int t) const {
        const auto& T = triangles_[t];
        const Vertex &a = vertices_[T.v[0]], &b = vertices_[T.v[1]], &c = vertices_[T.v[2]];
        return 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
    }

    std::array<double, 2> barycenter(int t) const {
        const auto& T = triangles_[t];
        return {(vertices_[T.v[0]].x + vertices_[T.v[1]].x + vertices_[T.v[2]].x) / 3.0,
                (vertices_[T.v[0]].y + vertices_[T.v[1]].y + vertices_[T.v[2]].y) / 3.0};
    }

    double diameter(int t) const {
        double d = 0;
        for (int e : tri_edges_[t]) d = std::max(d, edges_[e].length);
        return d;
    }

    double h_max() const {
        double h = 0;
        for (const Edge& e : edges_) h = std::max(h, e.length);
        return h;
    }

    double min_angle() const {
        double amin = 4.0;
        for (int t = 0; t < n_triangles(); ++t) {
            const auto& T = triangles_[t];
            for (int i = 0; i < 3; ++i) {
                const Vertex &p = vertices_[T.v[i]], &q = vertices_[T.v[(i + 1) % 3]],
                             &r = vertices_[T.v[(i + 2) % 3]];
                double ux = q.x - p.x, uy = q.y - p.y, vx = r.x - p.x, vy = r.y - p.y;
                double ang = std::atan2(std::abs(ux * vy - uy * vx), ux * vx + uy * vy);
                amin = std::min(amin, ang);
            }
        }
        return amin;
    }

    double total_area() const {
        double s = 0;
        for (int t = 0; t < n_triangles(); ++t) s += area(t);
        return s;
    }

    /// Sign of the outward normal of triangle t on its local edge relative to
    /// the globally oriented edge normal: +1 or -1.
    int normal_sign(int t, int local_edge) const {
        const auto& T = triangles_[t];
        int a = T.v[(local_edge + 1) % 3], b = T.v[(local_edge + 2) % 3];
        const Edge& e = edges_[tri_edges_[t][local_edge]];
        // Outward normal of a CCW triangle on edge (a,b) is rot(-90) of b-a.
        double ex = vertices_[b].x - vertices_[a].x, ey = vertices_[b].y - vertices_[a].y;
        double onx = ey, ony = -ex;
        return (onx * e.nx + ony * e.ny) > 0 ? 1 : -1;
    }

    /// Conformity and orientation audit. Throws MeshError on violation.
    void audit() const {
        for (int t = 0; t < n_triangles(); ++t) {
            if (area(t) <= 0) throw MeshError("triangle " + std::to_string(t) + " not positively oriented");
            int r = triangles_[t].refinement_edge;
            if (r < 0 || r > 2) throw MeshError("bad refinement edge tag");
        }
        for (const Edge& e : edges_) {
            if (e.boundary != (e.tri[1] < 0)) throw MeshError("boundary flag mismatch");
        }
        // Euler relation on the (possibly cut) topology.
        if (n_vertices() - n_edges() + n_triangles() != 1)
            throw MeshError("Euler relation violated: mesh not conforming");
    }

    void dump(std::ostream& os) const {
        os << "vertices " << n_vertices() << "\n";
        for (const Vertex& v : vertices_) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%d %.17g %.17g\n", v.id, v.x, v.y);
            os << buf;
        }
        os << "triangles " << n_triangles() << "\n";
        for (int t = 0; t < n_triangles(); ++t) {
            const auto& T = triangles_[t];
            os << t << " " << T.v[0] << " " << T.v[1] << " " << T.v[2] << " "
               << T.refinement_edge << "\n";
        }
    }

private:
    void build_topology() {
        std::map<std::pair<int, int>, int> edge_index;
        tri_edges_.assign(triangles_.size(), {-1, -1, -1});
        for (int t = 0; t < n_triangles(); ++t) {
            if (area(t) <= 0)
                throw MeshError("triangle " + std::to_string(t) + " degenerate or misoriented");
            for (int i = 0; i < 3; ++i) {
                int a = triangles_[t].v[(i + 1) % 3], b = triangles_[t].v[(i + 2) % 3];
                auto key = std::minmax(a, b);
                auto it = edge_index.find(key);
                if (it == edge_index.end()) {
                    Edge e;
                    e.v = {key.first, key.second};
                    e.tri = {t, -1};
                    const Vertex &p = vertices_[key.first], &q = vertices_[key.second];
                    e.tx = q.x - p.x;
                    e.ty = q.y - p.y;
                    e.length = std::hypot(e.tx, e.ty);
                    e.tx /= e.length;
                    e.ty /= e.length;
                    e.nx = e.ty;
                    e.ny = -e.tx;
                    int idx = static_cast<int>(edges_.size());
                    edges_.push_back(e);
                    edge_index.emplace(key, idx);
                    tri_edges_[t][i] = idx;
                } else {
                    Edge& e = edges_[it->second];
                    if (e.tri[1] >= 0) throw MeshError("edge shared by more than two triangles");
                    e.tri[1] = t;
                    tri_edges_[t][i] = it->second;
                }
            }
        }
        vertex_on_boundary_.assign(vertices_.size(), false);
        for (Edge& e : edges_) {
            e.boundary = (e.tri[1] < 0);
            if (e.boundary) {
                vertex_on_boundary_[e.v[0]] = true;
                vertex_on_boundary_[e.v[1]] = true;
            }
        }
    }

    DomainSpec domain_ = DomainSpec::UnitSquare;
    std::vector<Vertex> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<Edge> edges_;
    std::vector<std::array<int, 3>> tri_edges_;
    std::vector<bool> vertex_on_boundary_;
};

namespace detail {

/// Longest edge as initial refinement edge; ties broken by the smallest
/// opposite-vertex id.
inline void tag_longest_edges(const std::vector<Vertex>& vs, std::vector<Triangle>& ts) {
    for (Triangle& T : ts) {
        double best = -1;
        int tag = 0;
        for (int i = 0; i < 3; ++i) {
            const Vertex &a = vs[T.v[(i + 1) % 3]], &b = vs[T.v[(i + 2) % 3]];
            double len = std::hypot(b.x - a.x, b.y - a.y);
            if (len > best + 1e-14 || (len > best - 1e-14 && T.v[i] < T.v[tag])) {
                best = std::max(best, len);
                tag = i;
            }
        }
        T.refinement_edge = tag;
    }
}

}  // namespace detail

/// Coarse meshes: square split along the (0,0)-(1,1) diagonal; L-shape and
/// slit as fans around the singular corner. The slit is modeled as a cut
/// topology with the vertex (1,0) duplicated into top/bottom copies.
inline Mesh build_domain(DomainSpec spec) {
    std::vector<Vertex> vs;
    std::vector<Triangle> ts;
    auto tri = [](int a, int b, int c) { return Triangle{{a, b, c}, 0, 0}; };
    switch (spec) {
        case DomainSpec::UnitSquare:
            vs = {{0, 0, 0}, {1, 1, 0}, {2, 1, 1}, {3, 0, 1}};
            ts = {tri(0, 1, 2), tri(0, 2, 3)};
            break;
        case DomainSpec::LShape:
            vs = {{0, 0, 0},  {1, 1, 0},   {2, 1, 1},  {3, 0, 1},
                  {4, -1, 1}, {5, -1, 0},  {6, -1, -1}, {7, 0, -1}};
            ts = {tri(0, 1, 2), tri(0, 2, 3), tri(0, 3, 4),
                  tri(0, 4, 5), tri(0, 5, 6), tri(0, 6, 7)};
            break;
        case DomainSpec::Slit:
            // 1 = top copy of (1,0), 9 = bottom copy; fan is open across the slit.
            vs = {{0, 0, 0},  {1, 1, 0},  {2, 1, 1},  {3, 0, 1},  {4, -1, 1},
                  {5, -1, 0}, {6, -1, -1}, {7, 0, -1}, {8, 1, -1}, {9, 1, 0}};
            ts = {tri(0, 1, 2), tri(0, 2, 3), tri(0, 3, 4), tri(0, 4, 5),
                  tri(0, 5, 6), tri(0, 6, 7), tri(0, 7, 8), tri(0, 8, 9)};
            break;
    }
    detail::tag_longest_edges(vs, ts);
    Mesh m(spec, std::move(vs), std::move(ts));
    m.audit();
    return m;
}

/// Newest-vertex bisection of the marked triangles with full closure.
/// Throws MeshError on an out-of-range id.
inline Mesh refine_adaptive(const Mesh& mesh, const std::vector<int>& marked) {
    for (int id : marked)
        if (id < 0 || id >= mesh.n_triangles())
            throw MeshError("marked triangle id out of range: " + std::to_string(id));
    if (marked.empty()) return mesh;

    const auto& tris = mesh.triangles();
    std::vector<char> edge_marked(mesh.n_edges(), 0);
    for (int id : marked) edge_marked[mesh.triangle_edges(id)[tris[id].refinement_edge]] = 1;

    // Closure: a triangle with any marked edge gets its refinement edge marked.
    bool changed = true;
    while (changed) {
        changed = false;
        for (int t = 0; t < mesh.n_triangles(); ++t) {
            const auto& te = mesh.triangle_edges(t);
            int re = te[tris[t].refinement_edge];
            if (edge_marked[re]) continue;
            if (edge_marked[te[0]] || edge_marked[te[1]] || edge_marked[te[2]]) {
                edge_marked[re] = 1;
                changed = true;
            }
        }
    }

    std::vector<Vertex> vs = mesh.vertices();
    std::map<std::pair<int, int>, int> midpoint;  // keyed by original vertex pair
    for (int e = 0; e < mesh.n_edges(); ++e) {
        if (!edge_marked[e]) continue;
        const Edge& E = mesh.edges()[e];
        int id = static_cast<int>(vs.size());
        vs.push_back({id, 0.5 * (vs[E.v[0]].x + vs[E.v[1]].x),
                      0.5 * (vs[E.v[0]].y + vs[E.v[1]].y)});
        midpoint[{E.v[0], E.v[1]}] = id;
    }

    std::vector<Triangle> out;
    out.reserve(tris.size() * 2);
    // Bisect while the refinement edge has a midpoint; children inherit the
    // parent's remaining original edges as refinement edges, so the recursion
    // terminates after at most two levels.
    auto bisect = [&](auto&& self, const Triangle& T) -> void {
        int r = T.refinement_edge;
        int p = T.v[r], a = T.v[(r + 1) % 3], b = T.v[(r + 2) % 3];
        auto it = midpoint.find(std::minmax(a, b));
        if (it == midpoint.end()) {
            out.push_back(T);
            return;
        }
        int m = it->second;
        // child layouts keep CCW orientation; refinement edge opposite m
        self(self, Triangle{{a, m, p}, 1, T.generation + 1});
        self(self, Triangle{{m, b, p}, 0, T.generation + 1});
    };
    for (const Triangle& T : tris) bisect(bisect, T);

    Mesh refined(mesh.domain(), std::move(vs), std::move(out));
    refined.audit();
    return refined;
}

/// Uniform refinement = mark-all newest-vertex bisection.
inline Mesh refine_uniform(const Mesh& mesh) {
    std::vector<int> all(mesh.n_triangles());
    for (int t = 0; t < mesh.n_triangles(); ++t) all[t] = t;
    return refine_adaptive(mesh, all);
}

}  // namespace dpg
