#pragma once

// Plain-text mesh format and VTK legacy export.
//
//   blt-mesh 1
//   dim <2|3> radius <R>
//   nodes <count>
//   <x y [z]>            one line per node, %.17g
//   elements <count>
//   <i0 .. iN tag>
//   facets <count>
//   <i0 .. i{N-1}>

#include "blt/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace blt {

template <int N>
void save_mesh(const Mesh<N>& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw parse_error("save_mesh: cannot open " + path);
    out << "blt-mesh 1\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", m.boundary_radius);
    out << "dim " << N << " radius " << buf << "\n";
    out << "nodes " << m.node_count() << "\n";
    for (const auto& p : m.nodes) {
        for (int k = 0; k < N; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", p[k]);
            out << (k ? " " : "") << buf;
        }
        out << "\n";
    }
    out << "elements " << m.element_count() << "\n";
    for (std::size_t i = 0; i < m.elements.size(); ++i) {
        for (int k = 0; k <= N; ++k) out << m.elements[i][k] << " ";
        out << m.element_region_tag[i] << "\n";
    }
    out << "facets " << m.facet_count() << "\n";
    for (const auto& f : m.boundary_facets) {
        for (int k = 0; k < N; ++k) out << (k ? " " : "") << f[k];
        out << "\n";
    }
    if (!out) throw parse_error("save_mesh: write failure on " + path);
}

namespace detail {

struct LineReader {
    std::istream& in;
    std::string path;
    int line_no = 0;

    std::string next() {
        std::string line;
        if (!std::getline(in, line))
            throw parse_error(path + ":" + std::to_string(line_no + 1) + ": unexpected end of file");
        ++line_no;
        return line;
    }

    [[noreturn]] void fail(const std::string& what) {
        throw parse_error(path + ":" + std::to_string(line_no) + ": " + what);
    }
};

}  // namespace detail

template <int N>
Mesh<N> load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("load_mesh: cannot open " + path);
    detail::LineReader rd{in, path};

    {
        std::istringstream h(rd.next());
        std::string magic;
        int version = 0;
        h >> magic >> version;
        if (magic != "blt-mesh") rd.fail("not a blt-mesh file");
        if (version != 1) rd.fail("unsupported blt-mesh version " + std::to_string(version));
    }
    Mesh<N> m;
    {
        std::istringstream h(rd.next());
        std::string kd, kr;
        int dim = 0;
        h >> kd >> dim >> kr >> m.boundary_radius;
        if (kd != "dim" || kr != "radius" || !h) rd.fail("malformed dim/radius line");
        if (dim != N) rd.fail("mesh dimension " + std::to_string(dim) + " does not match expected " + std::to_string(N));
    }
    auto read_count = [&rd](const char* key) {
        std::istringstream h(rd.next());
        std::string k;
        long n = -1;
        h >> k >> n;
        if (k != key || n < 0) rd.fail(std::string("expected '") + key + " <count>'");
        return n;
    };
    long nn = read_count("nodes");
    m.nodes.reserve(nn);
    for (long i = 0; i < nn; ++i) {
        std::istringstream h(rd.next());
        Vec<N> p;
        for (int k = 0; k < N; ++k) h >> p[k];
        if (!h) rd.fail("malformed node line");
        m.nodes.push_back(p);
    }
    long ne = read_count("elements");
    m.elements.reserve(ne);
    m.element_region_tag.reserve(ne);
    for (long i = 0; i < ne; ++i) {
        std::istringstream h(rd.next());
        std::array<int, N + 1> e;
        int tag;
        for (int k = 0; k <= N; ++k) h >> e[k];
        h >> tag;
        if (!h) rd.fail("malformed element line");
        m.elements.push_back(e);
        m.element_region_tag.push_back(tag);
    }
    long nf = read_count("facets");
    m.boundary_facets.reserve(nf);
    for (long i = 0; i < nf; ++i) {
        std::istringstream h(rd.next());
        std::array<int, N> f;
        for (int k = 0; k < N; ++k) h >> f[k];
        if (!h) rd.fail("malformed facet line");
        m.boundary_facets.push_back(f);
    }
    validate_mesh(m);
    return m;
}

// VTK legacy unstructured grid; optional nodal field "u" and per-cell scalars.
template <int N>
void write_vtk(const Mesh<N>& m, const std::string& path,
               const std::vector<std::pair<std::string, std::vector<double>>>& point_data = {},
               const std::vector<std::pair<std::string, std::vector<double>>>& cell_data = {}) {
    std::ofstream out(path);
    if (!out) throw parse_error("write_vtk: cannot open " + path);
    out << "# vtk DataFile Version 3.0\nblt mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << m.node_count() << " double\n";
    char buf[96];
    for (const auto& p : m.nodes) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p[0], p[1], N == 3 ? p[2] : 0.0);
        out << buf;
    }
    out << "CELLS " << m.element_count() << " " << std::size_t(m.element_count()) * (N + 2) << "\n";
    for (const auto& e : m.elements) {
        out << (N + 1);
        for (int k = 0; k <= N; ++k) out << " " << e[k];
        out << "\n";
    }
    out << "CELL_TYPES " << m.element_count() << "\n";
    for (int i = 0; i < m.element_count(); ++i) out << (N == 2 ? 5 : 10) << "\n";
    if (!point_data.empty()) {
        out << "POINT_DATA " << m.node_count() << "\n";
        for (const auto& [name, vals] : point_data) {
            out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (double v : vals) {
                std::snprintf(buf, sizeof buf, "%.9g\n", v);
                out << buf;
            }
        }
    }
    if (!cell_data.empty()) {
        out << "CELL_DATA " << m.element_count() << "\n";
        for (const auto& [name, vals] : cell_data) {
            out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (double v : vals) {
                std::snprintf(buf, sizeof buf, "%.9g\n", v);
                out << buf;
            }
        }
    }
}

}  // namespace blt
