#pragma once

#include "fractal/level_graph.hpp"

// Euclidean position of a vertex of the unit interval graph (F_0 x = x/2, F_1 x = (x+1)/2).
inline double interval_coordinate(const fractal::LevelGraph& g, int v) {
    int a = g.vaddr[g.vaddr_ptr[v]];
    std::int64_t c = a / g.nb();
    double x = a % g.nb();
    for (int i = 0; i < g.level; ++i) {
        x = (x + static_cast<double>(c % 2)) / 2.0;
        c /= 2;
    }
    return x;
}

// Vertex at the dyadic point i / 2^level.
inline int interval_vertex(const fractal::LevelGraph& g, std::int64_t i) {
    if (i == std::int64_t(1) << g.level) return 1;
    fractal::Word w(g.level);
    for (int k = g.level - 1; k >= 0; --k) {
        w[k] = static_cast<int>(i % 2);
        i /= 2;
    }
    return g.vertex(w, 0);
}

inline int interval_vertex_at(const fractal::LevelGraph& g, double x) {
    return interval_vertex(g, static_cast<std::int64_t>(std::llround(x * double(std::int64_t(1) << g.level))));
}
