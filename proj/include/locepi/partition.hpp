#pragma once

// Nested genome partition: genome -> chromosomes -> contiguous subregions.

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ingest.hpp"

namespace locepi {

enum class SplitRule { EqualCount, EqualLength };

inline SplitRule parse_split_rule(std::string_view s) {
  if (s == "equal-count" || s == "EqualCount") return SplitRule::EqualCount;
  if (s == "equal-length" || s == "EqualLength") return SplitRule::EqualLength;
  fail(ErrorCode::InvalidArgument, "unknown split rule '" + std::string(s) + "' (expected equal-count|equal-length)");
}

inline std::string_view to_string(SplitRule r) {
  return r == SplitRule::EqualLength ? "equal-length" : "equal-count";
}

struct Region {
  std::string id;                    // path-like, e.g. "G/chr1/2"
  std::vector<Index> marker_indices;  // columns of the marker matrix, in map order
  int level = 0;
  std::optional<std::string> parent;
  std::vector<std::string> children;
  std::string chromosome;  // empty when the region spans several chromosomes
  double start_pos = std::numeric_limits<double>::quiet_NaN();
  double end_pos = std::numeric_limits<double>::quiet_NaN();

  bool is_leaf() const { return children.empty(); }
  std::size_t size() const { return marker_indices.size(); }
};

struct RegionHierarchy {
  std::vector<Region> regions;  // depth-first pre-order, children in genome order
  std::string root;
  std::vector<std::string> leaf_ids;  // genome order
  int depth = 0;
  int splits_per_level = 0;
  std::vector<Index> unmapped;  // markers without a map entry; members of the root only
  std::vector<std::string> warnings;

  const Region& at(const std::string& id) const {
    const auto it = index_.find(id);
    require(it != index_.end(), ErrorCode::InvalidArgument, "unknown region '" + id + "'");
    return regions[it->second];
  }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }
  const Region& root_region() const { return at(root); }

  std::vector<const Region*> level(int l) const {
    std::vector<const Region*> out;
    for (const auto& r : regions)
      if (r.level == l) out.push_back(&r);
    return out;
  }

  int max_level() const {
    int m = 0;
    for (const auto& r : regions) m = std::max(m, r.level);
    return m;
  }

  /// Rebuilds the id index, the leaf list and the levels from parent links.
  void finalize() {
    index_.clear();
    for (std::size_t i = 0; i < regions.size(); ++i) {
      require(index_.emplace(regions[i].id, i).second, ErrorCode::InvalidArgument,
              "duplicate region id '" + regions[i].id + "'");
    }
    leaf_ids.clear();
    std::function<void(const std::string&, int)> visit = [&](const std::string& id, int lvl) {
      auto& r = regions[index_.at(id)];
      r.level = lvl;
      if (r.children.empty()) leaf_ids.push_back(id);
      for (const auto& c : r.children) visit(c, lvl + 1);
    };
    visit(root, 0);
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

/// Boundaries (start offsets) for splitting `n` sorted positions into `parts`
/// runs of balanced size; the first n % parts runs get one extra marker.
/// A boundary falling inside a run of equal positions moves to the nearer
/// edge of that run when doing so keeps every part non-empty.
inline std::vector<std::size_t> equal_count_bounds(const std::vector<double>& pos, std::size_t parts) {
  const std::size_t n = pos.size();
  const std::size_t base = n / parts, rem = n % parts;
  std::vector<std::size_t> target(parts + 1, 0);
  for (std::size_t i = 0; i < parts; ++i) target[i + 1] = target[i] + base + (i < rem ? 1 : 0);
  std::vector<std::size_t> bounds{0};
  for (std::size_t i = 1; i < parts; ++i) {
    std::size_t b = target[i];
    if (b > 0 && b < n && pos[b - 1] == pos[b]) {
      std::size_t lo = b, hi = b;
      while (lo > 0 && pos[lo - 1] == pos[b]) --lo;
      while (hi < n && pos[hi] == pos[b]) ++hi;
      const std::size_t prev = bounds.back();
      const std::size_t next = target[i + 1];
      const bool lo_ok = lo > prev;
      const bool hi_ok = hi < next || (i + 1 == parts && hi < n);
      if (lo_ok && hi_ok) b = (b - lo <= hi - b) ? lo : hi;
      else if (lo_ok) b = lo;
      else if (hi_ok) b = hi;
    }
    bounds.push_back(b);
  }
  bounds.push_back(n);
  return bounds;
}

}  // namespace detail

/// Builds the hierarchy: level 0 is the genome, level 1 the chromosomes and
/// every further level splits each region into `splits` contiguous parts.
/// A region with fewer than `splits` markers stops subdividing (warning).
inline RegionHierarchy build_hierarchy(const GeneticMap& map, const MarkerMatrix& markers, int depth, int splits,
                                       SplitRule rule = SplitRule::EqualCount) {
  require(depth >= 1, ErrorCode::InvalidArgument, "depth must be >= 1");
  require(splits >= 2, ErrorCode::InvalidArgument, "splits must be >= 2");
  const auto col = markers.marker_lookup();

  struct Mapped {
    Index column;
    double position;
  };
  std::vector<std::string> chroms;
  std::vector<std::vector<Mapped>> by_chrom;
  std::vector<char> mapped(static_cast<std::size_t>(markers.n_markers()), 0);
  for (const auto& e : map.entries) {  // already sorted by (chromosome, position, id)
    const auto it = col.find(e.marker_id);
    if (it == col.end()) continue;
    if (chroms.empty() || chroms.back() != e.chromosome) {
      chroms.push_back(e.chromosome);
      by_chrom.emplace_back();
    }
    by_chrom.back().push_back({it->second, e.position});
    mapped[static_cast<std::size_t>(it->second)] = 1;
  }
  require(!chroms.empty(), ErrorCode::EmptyChromosome, "no marker of the genotype matrix appears on the map");

  RegionHierarchy h;
  h.depth = depth;
  h.splits_per_level = splits;
  for (Index j = 0; j < markers.n_markers(); ++j)
    if (!mapped[static_cast<std::size_t>(j)]) h.unmapped.push_back(j);
  if (!h.unmapped.empty())
    h.warnings.push_back(std::to_string(h.unmapped.size()) + " unmapped markers enter the root region only");

  Region root;
  root.id = h.root = "G";
  for (const auto& c : by_chrom)
    for (const auto& m : c) root.marker_indices.push_back(m.column);
  root.marker_indices.insert(root.marker_indices.end(), h.unmapped.begin(), h.unmapped.end());
  h.regions.push_back(root);

  bool any_split = false;
  // Recursively appends `r` and its descendants in pre-order.
  std::function<void(Region, std::vector<double>)> emit = [&](Region r, std::vector<double> pos) {
    const std::size_t self = h.regions.size();
    h.regions.push_back(r);
    if (r.level >= depth) return;
    const std::size_t n = r.marker_indices.size();
    if (n < static_cast<std::size_t>(splits)) {
      h.warnings.push_back("region " + r.id + " has " + std::to_string(n) + " markers; not subdivided below level " +
                           std::to_string(r.level));
      return;
    }
    std::vector<std::size_t> bounds;
    if (rule == SplitRule::EqualCount) {
      bounds = detail::equal_count_bounds(pos, static_cast<std::size_t>(splits));
    } else {
      const double lo = pos.front(), width = (pos.back() - pos.front()) / splits;
      bounds.push_back(0);
      std::size_t k = 0;
      for (int s = 1; s < splits; ++s) {
        const double edge = lo + width * s;
        while (k < n && pos[k] < edge) ++k;
        bounds.push_back(k);
      }
      bounds.push_back(n);
      if (!(width > 0.0)) bounds = {0, n};
    }
    std::vector<std::pair<std::size_t, std::size_t>> parts;
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s)
      if (bounds[s + 1] > bounds[s]) parts.emplace_back(bounds[s], bounds[s + 1]);
    if (parts.size() < 2) {
      h.warnings.push_back("region " + r.id + " cannot be split further (all markers share one position span)");
      return;
    }
    if (parts.size() < static_cast<std::size_t>(splits))
      h.warnings.push_back("region " + r.id + " produced " + std::to_string(parts.size()) + " non-empty parts");
    any_split = any_split || r.level >= 1;
    for (std::size_t s = 0; s < parts.size(); ++s) {
      Region c;
      c.id = r.id + "/" + std::to_string(s + 1);
      c.level = r.level + 1;
      c.parent = r.id;
      c.chromosome = r.chromosome;
      c.marker_indices.assign(r.marker_indices.begin() + static_cast<std::ptrdiff_t>(parts[s].first),
                              r.marker_indices.begin() + static_cast<std::ptrdiff_t>(parts[s].second));
      std::vector<double> cpos(pos.begin() + static_cast<std::ptrdiff_t>(parts[s].first),
                               pos.begin() + static_cast<std::ptrdiff_t>(parts[s].second));
      c.start_pos = cpos.front();
      c.end_pos = cpos.back();
      h.regions[self].children.push_back(c.id);
      emit(std::move(c), std::move(cpos));
    }
  };

  for (std::size_t c = 0; c < chroms.size(); ++c) {
    Region r;
    const auto& name = chroms[c];
    r.id = "G/" + (name.rfind("chr", 0) == 0 ? name : "chr" + name);
    r.level = 1;
    r.parent = "G";
    r.chromosome = name;
    std::vector<double> pos;
    for (const auto& m : by_chrom[c]) {
      r.marker_indices.push_back(m.column);
      pos.push_back(m.position);
    }
    r.start_pos = pos.front();
    r.end_pos = pos.back();
    h.regions[0].children.push_back(r.id);
    emit(std::move(r), std::move(pos));
  }
  if (depth >= 2 && !any_split)
    fail(ErrorCode::DepthTooLarge, "no chromosome has enough markers to split at depth " + std::to_string(depth));
  h.finalize();
  return h;
}

/// Leaf regions in genome order.
inline std::vector<const Region*> leaves(const RegionHierarchy& h) {
  std::vector<const Region*> out;
  out.reserve(h.leaf_ids.size());
  for (const auto& id : h.leaf_ids) out.push_back(&h.at(id));
  return out;
}

/// Regions that enter the local-GEBV matrix: leaves only, or every region.
inline std::vector<const Region*> model_regions(const RegionHierarchy& h, bool all_levels) {
  if (!all_levels) return leaves(h);
  std::vector<const Region*> out;
  for (const auto& r : h.regions) out.push_back(&r);
  return out;
}

// ---------------------------------------------------------------------------
// Region file: TSV (region_id, parent_id, marker_id), one row per membership.
// The root has parent ".".

inline void write_regions(const std::string& path, const RegionHierarchy& h, const MarkerMatrix& markers) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out << "region_id\tparent_id\tmarker_id\n";
  for (const auto& r : h.regions)
    for (Index j : r.marker_indices)
      out << r.id << '\t' << r.parent.value_or(".") << '\t' << markers.marker_ids[static_cast<std::size_t>(j)] << '\n';
}

/// Reads an explicit region file. Regions may overlap; each child must be a
/// subset of its parent. The map, when given, fills chromosome and span.
inline RegionHierarchy read_regions(const std::string& path, const MarkerMatrix& markers,
                                    const GeneticMap* map = nullptr) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open region file " + path);
  const auto col = markers.marker_lookup();
  RegionHierarchy h;
  std::unordered_map<std::string, std::size_t> pos_of;
  std::string line;
  bool header = true;
  while (detail::getline_trimmed(in, line)) {
    if (detail::blank(line)) continue;
    const auto f = split(line, '\t');
    require(f.size() == 3, ErrorCode::ParseError, "region rows need 3 tab-separated columns: '" + line + "'");
    if (header) {
      header = false;
      if (trim(f[0]) == "region_id") continue;
    }
    const std::string id(trim(f[0])), parent(trim(f[1])), marker(trim(f[2]));
    const auto mc = col.find(marker);
    require(mc != col.end(), ErrorCode::InvalidArgument, "region file names unknown marker '" + marker + "'");
    auto it = pos_of.find(id);
    if (it == pos_of.end()) {
      Region r;
      r.id = id;
      if (parent != "." && !parent.empty()) r.parent = parent;
      it = pos_of.emplace(id, h.regions.size()).first;
      h.regions.push_back(std::move(r));
    }
    auto& r = h.regions[it->second];
    require(r.parent.value_or(".") == (parent.empty() ? "." : parent), ErrorCode::InvalidArgument,
            "region '" + id + "' has conflicting parents");
    r.marker_indices.push_back(mc->second);
  }
  std::vector<std::string> roots;
  for (auto& r : h.regions) {
    if (!r.parent) {
      roots.push_back(r.id);
      continue;
    }
    const auto p = pos_of.find(*r.parent);
    require(p != pos_of.end(), ErrorCode::InvalidArgument, "region '" + r.id + "' has unknown parent '" + *r.parent + "'");
    h.regions[p->second].children.push_back(r.id);
  }
  require(roots.size() == 1, ErrorCode::InvalidArgument, "region file must have exactly one root");
  h.root = roots.front();
  for (const auto& r : h.regions) {
    if (!r.parent) continue;
    const auto& parent = h.regions[pos_of.at(*r.parent)].marker_indices;
    std::unordered_set<Index> pset(parent.begin(), parent.end());
    for (Index j : r.marker_indices)
      require(pset.count(j) > 0, ErrorCode::InvalidArgument,
              "region '" + r.id + "' contains a marker outside its parent '" + *r.parent + "'");
  }
  // Pre-order: reorder regions by a DFS from the root.
  std::vector<Region> ordered;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    ordered.push_back(h.regions[pos_of.at(id)]);
    for (const auto& c : h.regions[pos_of.at(id)].children) visit(c);
  };
  visit(h.root);
  require(ordered.size() == h.regions.size(), ErrorCode::InvalidArgument, "region file contains a parent cycle");
  h.regions = std::move(ordered);
  if (map) {
    const auto lk = map->lookup();
    for (auto& r : h.regions) {
      std::string chrom;
      bool single = true;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (Index j : r.marker_indices) {
        const auto e = lk.find(markers.marker_ids[static_cast<std::size_t>(j)]);
        if (e == lk.end()) {
          single = false;
          continue;
        }
        const auto& me = map->entries[e->second];
        if (chrom.empty()) chrom = me.chromosome;
        else if (chrom != me.chromosome) single = false;
        lo = std::min(lo, me.position);
        hi = std::max(hi, me.position);
      }
      if (single && !chrom.empty()) {
        r.chromosome = chrom;
        r.start_pos = lo;
        r.end_pos = hi;
      }
    }
  }
  h.depth = 0;
  h.finalize();
  h.depth = h.max_level();
  return h;
}

}  // namespace locepi
