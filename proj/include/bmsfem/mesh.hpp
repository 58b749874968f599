#pragma once

// Nested Cartesian coarse/fine grids on [0,Lx]x[0,Ly].
//
// Numbering is row-major from the lower-left corner everywhere:
//   fine node (i,j)   -> j*(nx+1) + i
//   fine cell (i,j)   -> j*nx + i
//   coarse block/node -> same scheme on the coarse grid
//   edges             -> horizontal edges first (normal +y), index j*nx + i for
//                        j in [0,ny]; then vertical edges (normal +x), offset
//                        nx*(ny+1), index j*(nx+1) + i.

#include <algorithm>
#include <array>
#include <cstddef>
#include <iterator>
#include <string>
#include <vector>

#include "bmsfem/error.hpp"

namespace bmsfem {

/// A set of coarse blocks, kept sorted and unique.
struct Region {
  std::vector<int> blocks;

  bool contains(int block) const {
    return std::binary_search(blocks.begin(), blocks.end(), block);
  }
  bool empty() const { return blocks.empty(); }
  std::size_t size() const { return blocks.size(); }
  friend bool operator==(const Region&, const Region&) = default;
};

inline bool is_subset(const Region& a, const Region& b) {
  return std::includes(b.blocks.begin(), b.blocks.end(), a.blocks.begin(), a.blocks.end());
}

class MeshHierarchy {
 public:
  MeshHierarchy(int nx_fine, int ny_fine, int nx_coarse, int ny_coarse, double lx = 1.0,
                double ly = 1.0)
      : nxf_(nx_fine), nyf_(ny_fine), nxc_(nx_coarse), nyc_(ny_coarse), lx_(lx), ly_(ly) {
    if (nx_fine < 1 || ny_fine < 1 || nx_coarse < 1 || ny_coarse < 1)
      throw ConfigError("grid counts must be >= 1");
    if (!(lx > 0.0) || !(ly > 0.0)) throw ConfigError("domain extents must be > 0");
    if (nx_fine % nx_coarse != 0)
      throw ConfigError("fine x count " + std::to_string(nx_fine) +
                        " is not divisible by coarse x count " + std::to_string(nx_coarse));
    if (ny_fine % ny_coarse != 0)
      throw ConfigError("fine y count " + std::to_string(ny_fine) +
                        " is not divisible by coarse y count " + std::to_string(ny_coarse));
    rx_ = nx_fine / nx_coarse;
    ry_ = ny_fine / ny_coarse;
  }

  int nx_fine() const { return nxf_; }
  int ny_fine() const { return nyf_; }
  int nx_coarse() const { return nxc_; }
  int ny_coarse() const { return nyc_; }
  double lx() const { return lx_; }
  double ly() const { return ly_; }
  double hx() const { return lx_ / nxf_; }
  double hy() const { return ly_ / nyf_; }
  double coarse_hx() const { return lx_ / nxc_; }
  double coarse_hy() const { return ly_ / nyc_; }
  /// Fine cells per coarse block along x / y.
  int ratio_x() const { return rx_; }
  int ratio_y() const { return ry_; }

  int num_fine_nodes() const { return (nxf_ + 1) * (nyf_ + 1); }
  int num_fine_cells() const { return nxf_ * nyf_; }
  int num_fine_edges() const { return nxf_ * (nyf_ + 1) + nyf_ * (nxf_ + 1); }
  int num_blocks() const { return nxc_ * nyc_; }
  int num_coarse_nodes() const { return (nxc_ + 1) * (nyc_ + 1); }
  int num_coarse_edges() const { return nxc_ * (nyc_ + 1) + nyc_ * (nxc_ + 1); }

  int fine_node(int i, int j) const { return j * (nxf_ + 1) + i; }
  int fine_cell(int i, int j) const { return j * nxf_ + i; }
  int block(int bi, int bj) const { return bj * nxc_ + bi; }
  int coarse_node(int i, int j) const { return j * (nxc_ + 1) + i; }

  std::array<int, 2> fine_node_ij(int n) const { return {n % (nxf_ + 1), n / (nxf_ + 1)}; }
  std::array<int, 2> fine_cell_ij(int c) const { return {c % nxf_, c / nxf_}; }
  std::array<int, 2> block_ij(int b) const { return {b % nxc_, b / nxc_}; }
  std::array<int, 2> coarse_node_ij(int n) const { return {n % (nxc_ + 1), n / (nxc_ + 1)}; }

  std::array<double, 2> fine_node_coord(int n) const {
    auto [i, j] = fine_node_ij(n);
    return {i * hx(), j * hy()};
  }

  /// Fine node index of coarse node n.
  int coarse_node_to_fine(int n) const {
    auto [i, j] = coarse_node_ij(n);
    return fine_node(i * rx_, j * ry_);
  }

  /// Corner nodes of fine cell c, counter-clockwise from lower-left.
  std::array<int, 4> cell_nodes(int c) const {
    auto [i, j] = fine_cell_ij(c);
    return {fine_node(i, j), fine_node(i + 1, j), fine_node(i + 1, j + 1), fine_node(i, j + 1)};
  }

  int block_of_cell(int c) const {
    auto [i, j] = fine_cell_ij(c);
    return block(i / rx_, j / ry_);
  }

  std::vector<int> block_cells(int b) const {
    auto [bi, bj] = block_ij(b);
    std::vector<int> cells;
    cells.reserve(static_cast<std::size_t>(rx_ * ry_));
    for (int j = bj * ry_; j < (bj + 1) * ry_; ++j)
      for (int i = bi * rx_; i < (bi + 1) * rx_; ++i) cells.push_back(fine_cell(i, j));
    return cells;
  }

  /// Corner coarse nodes of block b, counter-clockwise from lower-left.
  std::array<int, 4> block_nodes(int b) const {
    auto [i, j] = block_ij(b);
    return {coarse_node(i, j), coarse_node(i + 1, j), coarse_node(i + 1, j + 1),
            coarse_node(i, j + 1)};
  }

  bool is_boundary_fine_node(int n) const {
    auto [i, j] = fine_node_ij(n);
    return i == 0 || j == 0 || i == nxf_ || j == nyf_;
  }

  // ---- edges -------------------------------------------------------------

  int fine_hedge(int i, int j) const { return j * nxf_ + i; }
  int fine_vedge(int i, int j) const { return nxf_ * (nyf_ + 1) + j * (nxf_ + 1) + i; }
  bool is_vertical_fine_edge(int e) const { return e >= nxf_ * (nyf_ + 1); }

  /// Edges of fine cell c in the order bottom, right, top, left.
  std::array<int, 4> cell_edges(int c) const {
    auto [i, j] = fine_cell_ij(c);
    return {fine_hedge(i, j), fine_vedge(i + 1, j), fine_hedge(i, j + 1), fine_vedge(i, j)};
  }

  bool is_boundary_fine_edge(int e) const {
    if (is_vertical_fine_edge(e)) {
      int k = e - nxf_ * (nyf_ + 1);
      int i = k % (nxf_ + 1);
      return i == 0 || i == nxf_;
    }
    int j = e / nxf_;
    return j == 0 || j == nyf_;
  }

  int coarse_hedge(int i, int j) const { return j * nxc_ + i; }
  int coarse_vedge(int i, int j) const { return nxc_ * (nyc_ + 1) + j * (nxc_ + 1) + i; }
  bool is_vertical_coarse_edge(int e) const { return e >= nxc_ * (nyc_ + 1); }

  bool is_boundary_coarse_edge(int e) const {
    if (is_vertical_coarse_edge(e)) {
      int i = (e - nxc_ * (nyc_ + 1)) % (nxc_ + 1);
      return i == 0 || i == nxc_;
    }
    int j = e / nxc_;
    return j == 0 || j == nyc_;
  }

  /// Fine edges lying on coarse edge e, ordered by increasing coordinate.
  std::vector<int> coarse_edge_fine_edges(int e) const {
    std::vector<int> out;
    if (is_vertical_coarse_edge(e)) {
      int k = e - nxc_ * (nyc_ + 1);
      int ci = k % (nxc_ + 1), cj = k / (nxc_ + 1);
      for (int j = cj * ry_; j < (cj + 1) * ry_; ++j) out.push_back(fine_vedge(ci * rx_, j));
    } else {
      int ci = e % nxc_, cj = e / nxc_;
      for (int i = ci * rx_; i < (ci + 1) * rx_; ++i) out.push_back(fine_hedge(i, cj * ry_));
    }
    return out;
  }

  // ---- neighborhoods -----------------------------------------------------

  /// omega_i: all coarse blocks having coarse node n as a vertex.
  Region node_region(int n) const {
    auto [i, j] = coarse_node_ij(n);
    Region r;
    for (int bj = j - 1; bj <= j; ++bj)
      for (int bi = i - 1; bi <= i; ++bi)
        if (bi >= 0 && bj >= 0 && bi < nxc_ && bj < nyc_) r.blocks.push_back(block(bi, bj));
    return r;
  }

  /// omega_E: the blocks (one or two) sharing coarse edge e.
  Region edge_region(int e) const {
    Region r;
    if (is_vertical_coarse_edge(e)) {
      int k = e - nxc_ * (nyc_ + 1);
      int i = k % (nxc_ + 1), j = k / (nxc_ + 1);
      if (i - 1 >= 0) r.blocks.push_back(block(i - 1, j));
      if (i < nxc_) r.blocks.push_back(block(i, j));
    } else {
      int i = e % nxc_, j = e / nxc_;
      if (j - 1 >= 0) r.blocks.push_back(block(i, j - 1));
      if (j < nyc_) r.blocks.push_back(block(i, j));
    }
    return r;
  }

  Region block_region(int b) const { return Region{{b}}; }

  /// Region grown by `layers` steps of block adjacency (8-neighbour), clipped to the domain.
  Region oversample(const Region& region, int layers) const {
    if (region.empty()) throw ConfigError("oversample: empty region");
    if (layers < 0) throw ConfigError("oversample: negative layer count");
    std::vector<char> in(static_cast<std::size_t>(num_blocks()), 0);
    for (int b : region.blocks) in[static_cast<std::size_t>(b)] = 1;
    for (int b : region.blocks) {
      auto [bi, bj] = block_ij(b);
      for (int dj = -layers; dj <= layers; ++dj)
        for (int di = -layers; di <= layers; ++di) {
          int i = bi + di, j = bj + dj;
          if (i >= 0 && j >= 0 && i < nxc_ && j < nyc_) in[static_cast<std::size_t>(block(i, j))] = 1;
        }
    }
    Region out;
    for (int b = 0; b < num_blocks(); ++b)
      if (in[static_cast<std::size_t>(b)]) out.blocks.push_back(b);
    return out;
  }

  // ---- fine-level views of regions ---------------------------------------

  std::vector<int> region_cells(const Region& r) const {
    std::vector<int> cells;
    for (int b : r.blocks) {
      auto bc = block_cells(b);
      cells.insert(cells.end(), bc.begin(), bc.end());
    }
    std::sort(cells.begin(), cells.end());
    return cells;
  }

  /// All fine nodes touched by the region's cells, sorted.
  std::vector<int> region_nodes(const Region& r) const {
    std::vector<int> nodes;
    for (int c : region_cells(r))
      for (int n : cell_nodes(c)) nodes.push_back(n);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    return nodes;
  }

  /// Fine nodes whose four surrounding cells all belong to the region.
  std::vector<int> region_interior_nodes(const Region& r) const {
    std::vector<char> in_cell(static_cast<std::size_t>(num_fine_cells()), 0);
    for (int c : region_cells(r)) in_cell[static_cast<std::size_t>(c)] = 1;
    std::vector<int> out;
    for (int n : region_nodes(r)) {
      auto [i, j] = fine_node_ij(n);
      if (i == 0 || j == 0 || i == nxf_ || j == nyf_) continue;
      bool all = in_cell[static_cast<std::size_t>(fine_cell(i - 1, j - 1))] &&
                 in_cell[static_cast<std::size_t>(fine_cell(i, j - 1))] &&
                 in_cell[static_cast<std::size_t>(fine_cell(i - 1, j))] &&
                 in_cell[static_cast<std::size_t>(fine_cell(i, j))];
      if (all) out.push_back(n);
    }
    return out;
  }

  std::vector<int> region_boundary_nodes(const Region& r) const {
    auto all = region_nodes(r);
    auto interior = region_interior_nodes(r);
    std::vector<int> out;
    std::set_difference(all.begin(), all.end(), interior.begin(), interior.end(),
                        std::back_inserter(out));
    return out;
  }

 private:
  int nxf_, nyf_, nxc_, nyc_;
  double lx_, ly_;
  int rx_ = 1, ry_ = 1;
};

inline MeshHierarchy build_hierarchy(int nx_fine, int ny_fine, int nx_coarse, int ny_coarse,
                                     double lx = 1.0, double ly = 1.0) {
  return MeshHierarchy(nx_fine, ny_fine, nx_coarse, ny_coarse, lx, ly);
}

}  // namespace bmsfem
