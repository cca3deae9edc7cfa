#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <tuple>
#include <vector>

#include "fractal/errors.hpp"
#include "fractal/spec.hpp"

namespace fractal {

// Level-m approximation graph. Vertex ids are nested: the ids of V_n are 0..nv[n]-1 for
// every n <= level, and V0 point q has id q. Cells of level n are indexed base-J with the
// first letter most significant; addr[n][cell*nb + q] is the vertex F_cell(q).
struct LevelGraph {
    FractalSpec spec;
    int level = 0;
    std::vector<int> nv;
    std::vector<std::vector<int>> addr;
    std::vector<std::int64_t> cells_at;  // J^n
    std::vector<double> mass;
    std::vector<int> adj_ptr, adj_idx;
    std::vector<double> adj_c;
    std::vector<double> cell_ratio, cell_mass;  // level-m cells
    std::vector<int> vaddr_ptr, vaddr;        // level-m addresses (cell*nb+q) of each vertex

    int size() const { return nv[level]; }
    int nb() const { return spec.nb(); }
    int interior_size() const { return size() - nb(); }
    bool is_boundary(int v) const { return v < nb(); }

    int vertex_level(int v) const {
        for (int n = 0; n <= level; ++n)
            if (v < nv[n]) return n;
        return -1;
    }

    std::int64_t cell_index(const Word& w) const {
        std::int64_t c = 0;
        for (int j : w) c = c * spec.letters + j;
        return c;
    }

    Word cell_word(std::int64_t c, int n) const {
        Word w(n);
        for (int i = n - 1; i >= 0; --i) {
            w[i] = static_cast<int>(c % spec.letters);
            c /= spec.letters;
        }
        return w;
    }

    int vertex(const Word& w, int q) const {
        if (static_cast<int>(w.size()) > level) throw DomainError("address deeper than the graph level");
        if (q < 0 || q >= nb()) throw DomainError("boundary label out of range");
        for (int j : w)
            if (j < 0 || j >= spec.letters) throw DomainError("letter out of range");
        return addr[w.size()][cell_index(w) * nb() + q];
    }

    double ratio_of_cell(std::int64_t c, int n) const {
        double v = 1;
        for (int j : cell_word(c, n)) v *= spec.r[j];
        return v;
    }
    double mass_of_cell(std::int64_t c, int n) const {
        double v = 1;
        for (int j : cell_word(c, n)) v *= spec.mu[j];
        return v;
    }

    // Distinct level-n cells whose closure contains v.
    std::vector<std::int64_t> cells_containing(int v, int n) const {
        std::int64_t div = cells_at[level - n];
        std::vector<std::int64_t> out;
        for (int k = vaddr_ptr[v]; k < vaddr_ptr[v + 1]; ++k) out.push_back(vaddr[k] / nb() / div);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    // Id of F_cell^{-1}(v) in the level-(level-n) graph, or -1 when v is outside the cell.
    int local_vertex(int v, int n, std::int64_t cell) const {
        std::int64_t div = cells_at[level - n];
        for (int k = vaddr_ptr[v]; k < vaddr_ptr[v + 1]; ++k) {
            std::int64_t c = vaddr[k] / nb();
            if (c / div == cell) return addr[level - n][(c % div) * nb() + vaddr[k] % nb()];
        }
        return -1;
    }

    std::vector<int> addresses(int v) const {
        return std::vector<int>(vaddr.begin() + vaddr_ptr[v], vaddr.begin() + vaddr_ptr[v + 1]);
    }

    double conductance(int a, int b) const {
        for (int k = adj_ptr[a]; k < adj_ptr[a + 1]; ++k)
            if (adj_idx[k] == b) return adj_c[k];
        return 0.0;
    }
};

inline constexpr std::int64_t kMaxAddressEntries = 40'000'000;

inline LevelGraph build_level_graph(const FractalSpec& spec, int m) {
    if (m < 0) throw DomainError("level must be >= 0");
    LevelGraph g;
    g.spec = spec;
    g.level = m;
    const int J = spec.letters, nb = spec.nb();
    g.cells_at.resize(m + 1);
    g.cells_at[0] = 1;
    for (int n = 1; n <= m; ++n) {
        g.cells_at[n] = g.cells_at[n - 1] * J;
        if (g.cells_at[n] * nb > kMaxAddressEntries)
            throw CapacityError("level " + std::to_string(m) + " exceeds the memory budget");
    }

    // label -> boundary index, or -1
    std::vector<int> label_bq(spec.label_count, -1);
    for (int q = 0; q < nb; ++q) label_bq[spec.boundary[q]] = q;

    g.addr.resize(m + 1);
    g.nv.assign(m + 1, 0);
    g.addr[0].resize(nb);
    for (int q = 0; q < nb; ++q) g.addr[0][q] = q;
    g.nv[0] = nb;
    int next = nb;
    std::vector<int> lab(spec.label_count);
    for (int n = 1; n <= m; ++n) {
        auto& cur = g.addr[n];
        const auto& prev = g.addr[n - 1];
        cur.resize(g.cells_at[n] * nb);
        for (std::int64_t c = 0; c < g.cells_at[n - 1]; ++c) {
            for (int l = 0; l < spec.label_count; ++l)
                lab[l] = label_bq[l] >= 0 ? prev[c * nb + label_bq[l]] : next++;
            for (int j = 0; j < J; ++j)
                for (int q = 0; q < nb; ++q) cur[(c * J + j) * nb + q] = lab[spec.cell_boundary_map[j][q]];
        }
        g.nv[n] = next;
    }
    const int N = next;

    const std::int64_t C = g.cells_at[m];
    g.cell_ratio.assign(C, 1.0);
    g.cell_mass.assign(C, 1.0);
    for (std::int64_t c = 0; c < C; ++c) {
        std::int64_t t = c;
        for (int i = 0; i < m; ++i) {
            int j = static_cast<int>(t % J);
            t /= J;
            g.cell_ratio[c] *= spec.r[j];
            g.cell_mass[c] *= spec.mu[j];
        }
    }

    g.mass.assign(N, 0.0);
    std::vector<std::tuple<int, int, double>> edges;
    edges.reserve(C * nb * (nb - 1));
    const auto& top = g.addr[m];
    std::vector<int> cnt(N + 1, 0);
    for (std::int64_t c = 0; c < C; ++c) {
        for (int p = 0; p < nb; ++p) {
            int a = top[c * nb + p];
            g.mass[a] += g.cell_mass[c] / nb;
            cnt[a + 1]++;
            for (int q = 0; q < nb; ++q) {
                if (p == q || spec.c0(p, q) == 0) continue;
                edges.emplace_back(a, top[c * nb + q], spec.c0(p, q) / g.cell_ratio[c]);
            }
        }
    }
    std::sort(edges.begin(), edges.end(), [](auto& x, auto& y) {
        return std::tie(std::get<0>(x), std::get<1>(x)) < std::tie(std::get<0>(y), std::get<1>(y));
    });
    g.adj_ptr.assign(N + 1, 0);
    for (size_t k = 0; k < edges.size();) {
        auto [a, b, c] = edges[k];
        double sum = 0;
        while (k < edges.size() && std::get<0>(edges[k]) == a && std::get<1>(edges[k]) == b)
            sum += std::get<2>(edges[k++]);
        g.adj_idx.push_back(b);
        g.adj_c.push_back(sum);
        g.adj_ptr[a + 1]++;
    }
    for (int v = 0; v < N; ++v) g.adj_ptr[v + 1] += g.adj_ptr[v];

    for (int v = 0; v < N; ++v) cnt[v + 1] += cnt[v];
    g.vaddr_ptr = cnt;
    g.vaddr.resize(C * nb);
    std::vector<int> fill(cnt.begin(), cnt.end() - 1);
    for (std::int64_t c = 0; c < C; ++c)
        for (int p = 0; p < nb; ++p) g.vaddr[fill[top[c * nb + p]]++] = static_cast<int>(c * nb + p);
    return g;
}

// Shared graphs for every level up to a maximum, built on demand.
class GraphFamily {
public:
    explicit GraphFamily(FractalSpec spec) : spec_(std::move(spec)) {}
    const FractalSpec& spec() const { return spec_; }
    const LevelGraph& at(int m) {
        auto it = graphs_.find(m);
        if (it == graphs_.end())
            it = graphs_.emplace(m, std::make_shared<LevelGraph>(build_level_graph(spec_, m))).first;
        return *it->second;
    }

private:
    FractalSpec spec_;
    std::map<int, std::shared_ptr<LevelGraph>> graphs_;
};

// Parses "w:q" (letters as digits, '.'-separated when J > 10) into a vertex of lg.
inline int parse_point(const LevelGraph& lg, const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos) throw ConfigError("point '" + text + "' must look like word:label");
    std::string ws = text.substr(0, colon), qs = text.substr(colon + 1);
    Word w;
    try {
        if (lg.spec.letters > 10) {
            size_t pos = 0;
            while (pos < ws.size()) {
                size_t dot = ws.find('.', pos);
                if (dot == std::string::npos) dot = ws.size();
                w.push_back(std::stoi(ws.substr(pos, dot - pos)));
                pos = dot + 1;
            }
        } else {
            for (char ch : ws) {
                if (ch < '0' || ch > '9') throw ConfigError("bad letter in point '" + text + "'");
                w.push_back(ch - '0');
            }
        }
        int q = std::stoi(qs);
        return lg.vertex(w, q);
    } catch (const std::invalid_argument&) {
        throw ConfigError("cannot parse point '" + text + "'");
    } catch (const DomainError& e) {
        throw ConfigError("point '" + text + "': " + e.what());
    }
}

// Shortest address of a vertex, formatted as "w:q".
inline std::string point_name(const LevelGraph& lg, int v) {
    int n = lg.vertex_level(v);
    std::int64_t div = lg.cells_at[lg.level - n];
    for (int k = lg.vaddr_ptr[v]; k < lg.vaddr_ptr[v + 1]; ++k) {
        std::int64_t cn = lg.vaddr[k] / lg.nb() / div;
        for (int q = 0; q < lg.nb(); ++q)
            if (lg.addr[n][cn * lg.nb() + q] == v)
                return word_string(lg.cell_word(cn, n), lg.spec.letters) + ":" + std::to_string(q);
    }
    return "?";
}

}  // namespace fractal
