#pragma once

// Genotype, map, phenotype and covariate tables: parsing, imputation and
// alignment of observations to genotyped lines.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "common.hpp"

namespace locepi {

enum class TableFormat { Csv, Tsv };

inline char delimiter(TableFormat f) { return f == TableFormat::Tsv ? '\t' : ','; }

/// Picks the format from the file extension (.tsv/.txt are tab separated).
inline TableFormat format_for(const std::string& path) {
  auto ends_with = [&](std::string_view suf) {
    return path.size() >= suf.size() && path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
  };
  return (ends_with(".tsv") || ends_with(".txt")) ? TableFormat::Tsv : TableFormat::Csv;
}

enum class GenotypeCoding { ZeroOne, ZeroOneTwo, MinusOnePlusOne };

inline std::string_view to_string(GenotypeCoding c) {
  switch (c) {
    case GenotypeCoding::ZeroOne: return "01";
    case GenotypeCoding::ZeroOneTwo: return "012";
    case GenotypeCoding::MinusOnePlusOne: return "-11";
  }
  return "01";
}

inline GenotypeCoding parse_coding(std::string_view s) {
  if (s == "01" || s == "zero-one") return GenotypeCoding::ZeroOne;
  if (s == "012" || s == "zero-one-two") return GenotypeCoding::ZeroOneTwo;
  if (s == "-11" || s == "minus-one-plus-one") return GenotypeCoding::MinusOnePlusOne;
  fail(ErrorCode::InvalidArgument, "unknown genotype coding '" + std::string(s) + "'");
}

struct MarkerMatrix {
  std::vector<std::string> line_ids;
  std::vector<std::string> marker_ids;
  MatrixXd values;  // lines x markers, column-major so region slices are contiguous
  GenotypeCoding coding = GenotypeCoding::ZeroOne;
  VectorXd imputed_fraction;  // per marker, fraction of entries filled by imputation
  std::vector<std::string> dropped_markers;

  Index n_lines() const { return values.rows(); }
  Index n_markers() const { return values.cols(); }

  std::unordered_map<std::string, Index> marker_lookup() const {
    std::unordered_map<std::string, Index> idx;
    idx.reserve(marker_ids.size());
    for (std::size_t j = 0; j < marker_ids.size(); ++j) idx.emplace(marker_ids[j], static_cast<Index>(j));
    return idx;
  }

  std::unordered_map<std::string, Index> line_lookup() const {
    std::unordered_map<std::string, Index> idx;
    idx.reserve(line_ids.size());
    for (std::size_t i = 0; i < line_ids.size(); ++i) idx.emplace(line_ids[i], static_cast<Index>(i));
    return idx;
  }

  /// Dense copy of the given rows and columns.
  MatrixXd slice(const std::vector<Index>& rows, const std::vector<Index>& cols) const {
    MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto col = values.col(cols[c]);
      for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r), static_cast<Index>(c)) = col[rows[r]];
    }
    return out;
  }

  MarkerMatrix select_lines(const std::vector<Index>& rows) const {
    MarkerMatrix out;
    out.marker_ids = marker_ids;
    out.coding = coding;
    out.imputed_fraction = imputed_fraction;
    out.values.resize(static_cast<Index>(rows.size()), values.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.line_ids.push_back(line_ids[static_cast<std::size_t>(rows[r])]);
      out.values.row(static_cast<Index>(r)) = values.row(rows[r]);
    }
    return out;
  }
};

/// Fills NaN entries with the column mean over observed entries. Columns with
/// no observed value are left untouched and reported through the return value.
inline std::vector<Index> impute_column_means(MatrixXd& values, VectorXd& imputed_fraction) {
  std::vector<Index> all_missing;
  imputed_fraction.resize(values.cols());
  for (Index j = 0; j < values.cols(); ++j) {
    auto col = values.col(j);
    double sum = 0.0;
    Index observed = 0;
    for (Index i = 0; i < col.size(); ++i) {
      if (!std::isnan(col[i])) {
        sum += col[i];
        ++observed;
      }
    }
    const Index missing = col.size() - observed;
    imputed_fraction[j] = col.size() ? static_cast<double>(missing) / static_cast<double>(col.size()) : 0.0;
    if (missing == 0) continue;
    if (observed == 0) {
      all_missing.push_back(j);
      continue;
    }
    const double m = sum / static_cast<double>(observed);
    for (Index i = 0; i < col.size(); ++i)
      if (std::isnan(col[i])) col[i] = m;
  }
  return all_missing;
}

namespace detail {

inline bool getline_trimmed(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

inline bool blank(std::string_view s) { return trim(s).empty(); }

}  // namespace detail

/// Reads a genotype table: header row of marker ids (first cell ignored),
/// then one row per line with the line id in the first column.
inline MarkerMatrix parse_markers(const std::string& path, TableFormat format, const std::string& missing_code = "NA",
                                  GenotypeCoding coding = GenotypeCoding::ZeroOne) {
  const char delim = delimiter(format);
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open marker file " + path);

  std::string line;
  require(detail::getline_trimmed(in, line), ErrorCode::ParseError, "marker file " + path + " is empty");
  MarkerMatrix mm;
  mm.coding = coding;
  {
    auto fields = split(line, delim);
    require(fields.size() >= 2, ErrorCode::ParseError, "marker header needs at least one marker column");
    std::unordered_set<std::string> seen;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      std::string id(trim(fields[j]));
      require(seen.insert(id).second, ErrorCode::DuplicateMarkerId, "marker '" + id + "' appears twice in " + path);
      mm.marker_ids.push_back(std::move(id));
    }
  }
  const auto m = static_cast<Index>(mm.marker_ids.size());

  // Count rows first so the matrix is allocated once at its final size.
  Index n = 0;
  while (detail::getline_trimmed(in, line))
    if (!detail::blank(line)) ++n;
  in.clear();
  in.seekg(0);
  detail::getline_trimmed(in, line);

  mm.values.resize(n, m);
  mm.line_ids.reserve(static_cast<std::size_t>(n));
  std::unordered_set<std::string> seen_lines;
  Index row = 0;
  std::size_t file_line = 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  while (detail::getline_trimmed(in, line)) {
    ++file_line;
    if (detail::blank(line)) continue;
    std::string_view rest(line);
    bool exhausted = false;
    auto next_field = [&]() -> std::string_view {
      const auto pos = rest.find(delim);
      std::string_view f = rest.substr(0, pos);
      if (pos == std::string_view::npos) {
        exhausted = true;
        rest = {};
      } else {
        rest = rest.substr(pos + 1);
      }
      return f;
    };
    std::string id(trim(next_field()));
    require(seen_lines.insert(id).second, ErrorCode::DuplicateLineId, "line '" + id + "' appears twice in " + path);
    mm.line_ids.push_back(id);
    for (Index j = 0; j < m; ++j) {
      require(!exhausted, ErrorCode::ParseError, "row for line '" + id + "' has fewer fields than the header");
      const auto raw = trim(next_field());
      double v;
      if (raw == missing_code || raw.empty()) {
        v = nan;
      } else if (!parse_double(raw, v) || !std::isfinite(v)) {
        fail(ErrorCode::NonNumericGenotype, "line '" + id + "', marker '" + mm.marker_ids[static_cast<std::size_t>(j)] +
                                                "': '" + std::string(raw) + "' (file line " + std::to_string(file_line) + ")");
      }
      mm.values(row, j) = v;
    }
    require(exhausted || detail::blank(rest), ErrorCode::ParseError,
            "row for line '" + id + "' has more fields than the header");
    ++row;
  }

  const auto all_missing = impute_column_means(mm.values, mm.imputed_fraction);
  if (!all_missing.empty()) {
    require(2 * all_missing.size() <= static_cast<std::size_t>(m), ErrorCode::AllMissingMarker,
            std::to_string(all_missing.size()) + " of " + std::to_string(m) + " markers have no observed genotype");
    std::vector<char> drop(static_cast<std::size_t>(m), 0);
    for (Index j : all_missing) drop[static_cast<std::size_t>(j)] = 1;
    std::vector<Index> keep;
    std::vector<std::string> kept_ids;
    for (Index j = 0; j < m; ++j) {
      if (drop[static_cast<std::size_t>(j)]) {
        mm.dropped_markers.push_back(mm.marker_ids[static_cast<std::size_t>(j)]);
      } else {
        keep.push_back(j);
        kept_ids.push_back(mm.marker_ids[static_cast<std::size_t>(j)]);
      }
    }
    MatrixXd kept(n, static_cast<Index>(keep.size()));
    VectorXd frac(static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
      kept.col(static_cast<Index>(c)) = mm.values.col(keep[c]);
      frac[static_cast<Index>(c)] = mm.imputed_fraction[keep[c]];
    }
    mm.values = std::move(kept);
    mm.imputed_fraction = std::move(frac);
    mm.marker_ids = std::move(kept_ids);
  }
  return mm;
}

inline void write_markers(const std::string& path, const MarkerMatrix& mm, TableFormat format) {
  const char delim = delimiter(format);
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out << "line_id";
  for (const auto& id : mm.marker_ids) out << delim << id;
  out << '\n';
  for (Index i = 0; i < mm.n_lines(); ++i) {
    out << mm.line_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < mm.n_markers(); ++j) out << delim << format_double(mm.values(i, j));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Genetic map

enum class MapUnit { cM, bp };

struct MapEntry {
  std::string marker_id;
  std::string chromosome;
  double position = 0.0;
  MapUnit unit = MapUnit::cM;
};

/// Orders chromosome names numerically by leading digits ("2" < "10",
/// "1A" < "1B" < "2A"), falling back to plain string order.
inline bool chromosome_less(const std::string& a, const std::string& b) {
  auto split_num = [](const std::string& s) {
    std::string_view v(s);
    if (v.size() > 3 && (v.substr(0, 3) == "chr" || v.substr(0, 3) == "Chr")) v.remove_prefix(3);
    std::size_t k = 0;
    while (k < v.size() && std::isdigit(static_cast<unsigned char>(v[k]))) ++k;
    long long num = -1;
    if (k > 0 && k < 18) num = std::stoll(std::string(v.substr(0, k)));
    return std::pair<long long, std::string>(num, std::string(v.substr(k)));
  };
  const auto [na, ra] = split_num(a);
  const auto [nb, rb] = split_num(b);
  if ((na >= 0) != (nb >= 0)) return na >= 0;  // numbered chromosomes first
  if (na != nb) return na < nb;
  if (ra != rb) return ra < rb;
  return a < b;
}

struct GeneticMap {
  std::vector<MapEntry> entries;  // sorted by (chromosome, position, marker_id)

  void sort() {
    std::stable_sort(entries.begin(), entries.end(), [](const MapEntry& x, const MapEntry& y) {
      if (x.chromosome != y.chromosome) return chromosome_less(x.chromosome, y.chromosome);
      if (x.position != y.position) return x.position < y.position;
      return x.marker_id < y.marker_id;
    });
  }

  std::vector<std::string> chromosomes() const {
    std::vector<std::string> out;
    for (const auto& e : entries)
      if (out.empty() || out.back() != e.chromosome) out.push_back(e.chromosome);
    return out;
  }

  const MapEntry* find(const std::string& marker_id) const {
    for (const auto& e : entries)
      if (e.marker_id == marker_id) return &e;
    return nullptr;
  }

  std::unordered_map<std::string, std::size_t> lookup() const {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < entries.size(); ++i) idx.emplace(entries[i].marker_id, i);
    return idx;
  }

  /// Markers of the matrix that have no map entry, in matrix order.
  std::vector<std::string> unmapped(const MarkerMatrix& mm) const {
    const auto idx = lookup();
    std::vector<std::string> out;
    for (const auto& id : mm.marker_ids)
      if (!idx.count(id)) out.push_back(id);
    return out;
  }
};

inline MapUnit parse_unit(std::string_view s) {
  const auto t = trim(s);
  if (t == "cM" || t == "cm" || t == "CM") return MapUnit::cM;
  if (t == "bp" || t == "BP") return MapUnit::bp;
  fail(ErrorCode::UnknownUnit, "unknown map unit '" + std::string(t) + "'");
}

inline std::string_view to_string(MapUnit u) { return u == MapUnit::bp ? "bp" : "cM"; }

/// Reads (marker, chromosome, position[, unit]) rows. A first row whose
/// position field is not numeric is taken as a header.
inline GeneticMap parse_map(const std::string& path, TableFormat format) {
  const char delim = delimiter(format);
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open map file " + path);
  GeneticMap map;
  std::unordered_set<std::string> seen;
  std::string line;
  bool first = true;
  while (detail::getline_trimmed(in, line)) {
    if (detail::blank(line) || trim(line).front() == '#') continue;
    const auto f = split(line, delim);
    require(f.size() == 3 || f.size() == 4, ErrorCode::ParseError, "map rows need 3 or 4 columns: '" + line + "'");
    double pos;
    const bool numeric = parse_double(f[2], pos);
    if (first && !numeric) {
      first = false;
      continue;
    }
    first = false;
    require(numeric && std::isfinite(pos), ErrorCode::ParseError, "bad map position in '" + line + "'");
    MapEntry e;
    e.marker_id = std::string(trim(f[0]));
    e.chromosome = std::string(trim(f[1]));
    require(pos >= 0.0, ErrorCode::NegativePosition, "marker '" + e.marker_id + "' has position " + format_double(pos));
    e.position = pos;
    if (f.size() == 4) e.unit = parse_unit(f[3]);
    require(seen.insert(e.marker_id).second, ErrorCode::DuplicateMarkerId, "marker '" + e.marker_id + "' mapped twice");
    map.entries.push_back(std::move(e));
  }
  map.sort();
  return map;
}

inline void write_map(const std::string& path, const GeneticMap& map, TableFormat format) {
  const char d = delimiter(format);
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out << "marker" << d << "chromosome" << d << "position" << d << "unit\n";
  for (const auto& e : map.entries)
    out << e.marker_id << d << e.chromosome << d << format_double(e.position) << d << to_string(e.unit) << '\n';
}

// ---------------------------------------------------------------------------
// Phenotypes and covariates

struct PhenotypeRecord {
  std::string line_id;
  std::string trait_id;
  double value = 0.0;
  std::optional<std::string> env_id;
};

struct PhenotypeTable {
  std::vector<PhenotypeRecord> records;
  std::vector<std::string> trait_ids;

  /// Appends a record, enforcing uniqueness of (line, trait, env) and finiteness.
  void add(PhenotypeRecord rec) {
    require(std::isfinite(rec.value), ErrorCode::NonFiniteEntry, "phenotype for '" + rec.line_id + "' is not finite");
    const std::string key = rec.line_id + '\x1f' + rec.trait_id + '\x1f' + rec.env_id.value_or("");
    require(keys_.insert(key).second, ErrorCode::DuplicateRecord,
            "duplicate phenotype record for line '" + rec.line_id + "', trait '" + rec.trait_id + "'" +
                (rec.env_id ? ", env '" + *rec.env_id + "'" : std::string()));
    if (std::find(trait_ids.begin(), trait_ids.end(), rec.trait_id) == trait_ids.end()) trait_ids.push_back(rec.trait_id);
    records.push_back(std::move(rec));
  }

 private:
  std::unordered_set<std::string> keys_;
};

/// Long-format phenotype table with header (line_id, trait, value[, env]).
/// Records whose value equals the missing code are skipped.
inline PhenotypeTable parse_phenotypes(const std::string& path, TableFormat format, const std::string& missing_code = "NA") {
  const char delim = delimiter(format);
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open phenotype file " + path);
  std::string line;
  require(detail::getline_trimmed(in, line), ErrorCode::ParseError, "phenotype file " + path + " is empty");
  const auto header = split(line, delim);
  int c_line = 0, c_trait = 1, c_value = 2, c_env = header.size() >= 4 ? 3 : -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const auto h = trim(header[j]);
    const int jj = static_cast<int>(j);
    if (h == "line_id" || h == "line") c_line = jj;
    else if (h == "trait_id" || h == "trait") c_trait = jj;
    else if (h == "value") c_value = jj;
    else if (h == "env_id" || h == "env") c_env = jj;
  }
  PhenotypeTable table;
  while (detail::getline_trimmed(in, line)) {
    if (detail::blank(line)) continue;
    const auto f = split(line, delim);
    require(f.size() >= 3 && static_cast<int>(f.size()) > std::max({c_line, c_trait, c_value}), ErrorCode::ParseError,
            "short phenotype row '" + line + "'");
    const auto raw = trim(f[static_cast<std::size_t>(c_value)]);
    if (raw == missing_code || raw.empty()) continue;
    PhenotypeRecord rec;
    rec.line_id = std::string(trim(f[static_cast<std::size_t>(c_line)]));
    rec.trait_id = std::string(trim(f[static_cast<std::size_t>(c_trait)]));
    require(parse_double(raw, rec.value), ErrorCode::ParseError, "non-numeric phenotype '" + std::string(raw) + "'");
    if (c_env >= 0 && static_cast<std::size_t>(c_env) < f.size() && !trim(f[static_cast<std::size_t>(c_env)]).empty())
      rec.env_id = std::string(trim(f[static_cast<std::size_t>(c_env)]));
    table.add(std::move(rec));
  }
  return table;
}

inline void write_phenotypes(const std::string& path, const PhenotypeTable& t, TableFormat format) {
  const char d = delimiter(format);
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot write " + path);
  out << "line_id" << d << "trait" << d << "value" << d << "env\n";
  for (const auto& r : t.records)
    out << r.line_id << d << r.trait_id << d << format_double(r.value) << d << r.env_id.value_or("") << '\n';
}

/// Line-level covariates: header (line_id, name1, name2, ...).
struct FixedEffectTable {
  std::vector<std::string> line_ids;
  std::vector<std::string> column_names;
  MatrixXd design;  // lines x p
};

inline FixedEffectTable parse_fixed_effects(const std::string& path, TableFormat format) {
  const char delim = delimiter(format);
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open covariate file " + path);
  std::string line;
  require(detail::getline_trimmed(in, line), ErrorCode::ParseError, "covariate file " + path + " is empty");
  FixedEffectTable t;
  const auto header = split(line, delim);
  for (std::size_t j = 1; j < header.size(); ++j) t.column_names.emplace_back(trim(header[j]));
  std::vector<std::vector<double>> rows;
  std::unordered_set<std::string> seen;
  while (detail::getline_trimmed(in, line)) {
    if (detail::blank(line)) continue;
    const auto f = split(line, delim);
    require(f.size() == header.size(), ErrorCode::ParseError, "covariate row has wrong width: '" + line + "'");
    std::string id(trim(f[0]));
    require(seen.insert(id).second, ErrorCode::DuplicateLineId, "covariates for '" + id + "' given twice");
    std::vector<double> r;
    for (std::size_t j = 1; j < f.size(); ++j) {
      double v;
      require(parse_double(f[j], v) && std::isfinite(v), ErrorCode::ParseError, "bad covariate in '" + line + "'");
      r.push_back(v);
    }
    t.line_ids.push_back(std::move(id));
    rows.push_back(std::move(r));
  }
  t.design.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.column_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.design(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return t;
}

/// Throws unless [1 | design] has full column rank.
inline void check_full_rank_with_intercept(const MatrixXd& design) {
  MatrixXd w(design.rows(), design.cols() + 1);
  w.col(0).setOnes();
  w.rightCols(design.cols()) = design;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(w);
  require(qr.rank() == w.cols(), ErrorCode::SingularXstar,
          "fixed-effect design is rank deficient after adding an intercept (rank " + std::to_string(qr.rank()) + " of " +
              std::to_string(w.cols()) + ")");
}

// ---------------------------------------------------------------------------
// Alignment

/// Observations of one trait mapped onto genotyped lines. Columns of the
/// incidence matrix are the phenotyped lines, in marker-file order.
struct Alignment {
  VectorXd y;
  std::vector<Index> lines;         // marker-matrix rows of the phenotyped lines
  std::vector<Index> obs_line;      // per observation, column of Z (position in `lines`)
  std::vector<Index> unphenotyped;  // marker rows without a record, kept for prediction
  std::vector<std::string> dropped_lines;  // phenotyped ids with no genotype

  Index n_obs() const { return y.size(); }
  Index n_lines() const { return static_cast<Index>(lines.size()); }

  MatrixXd incidence() const {
    MatrixXd z = MatrixXd::Zero(n_obs(), n_lines());
    for (std::size_t i = 0; i < obs_line.size(); ++i) z(static_cast<Index>(i), obs_line[i]) = 1.0;
    return z;
  }

  /// Z * v for a line-indexed vector v.
  VectorXd expand(const VectorXd& by_line) const {
    VectorXd out(n_obs());
    for (std::size_t i = 0; i < obs_line.size(); ++i) out[static_cast<Index>(i)] = by_line[obs_line[i]];
    return out;
  }

  MatrixXd expand_rows(const MatrixXd& by_line) const {
    MatrixXd out(n_obs(), by_line.cols());
    for (std::size_t i = 0; i < obs_line.size(); ++i) out.row(static_cast<Index>(i)) = by_line.row(obs_line[i]);
    return out;
  }
};

inline Alignment align(const MarkerMatrix& markers, const PhenotypeTable& phenos, const std::string& trait) {
  const auto line_idx = markers.line_lookup();
  std::vector<const PhenotypeRecord*> recs;
  std::set<std::string> dropped;
  std::vector<char> has_record(static_cast<std::size_t>(markers.n_lines()), 0);
  for (const auto& r : phenos.records) {
    if (r.trait_id != trait) continue;
    const auto it = line_idx.find(r.line_id);
    if (it == line_idx.end()) {
      dropped.insert(r.line_id);
      continue;
    }
    has_record[static_cast<std::size_t>(it->second)] = 1;
    recs.push_back(&r);
  }
  Alignment a;
  std::vector<Index> column_of(static_cast<std::size_t>(markers.n_lines()), -1);
  for (Index i = 0; i < markers.n_lines(); ++i) {
    if (has_record[static_cast<std::size_t>(i)]) {
      column_of[static_cast<std::size_t>(i)] = static_cast<Index>(a.lines.size());
      a.lines.push_back(i);
    } else {
      a.unphenotyped.push_back(i);
    }
  }
  require(a.lines.size() >= 2, ErrorCode::NoOverlap,
          "fewer than 2 lines have both genotypes and phenotypes for trait '" + trait + "'");
  a.y.resize(static_cast<Index>(recs.size()));
  for (std::size_t k = 0; k < recs.size(); ++k) {
    a.y[static_cast<Index>(k)] = recs[k]->value;
    a.obs_line.push_back(column_of[static_cast<std::size_t>(line_idx.at(recs[k]->line_id))]);
  }
  a.dropped_lines.assign(dropped.begin(), dropped.end());
  return a;
}

/// Observation-level covariate rows for an alignment.
inline MatrixXd covariates_for(const FixedEffectTable& fx, const MarkerMatrix& markers, const Alignment& a) {
  std::unordered_map<std::string, Index> row_of;
  for (std::size_t i = 0; i < fx.line_ids.size(); ++i) row_of.emplace(fx.line_ids[i], static_cast<Index>(i));
  MatrixXd out(a.n_obs(), fx.design.cols());
  for (std::size_t o = 0; o < a.obs_line.size(); ++o) {
    const auto& id = markers.line_ids[static_cast<std::size_t>(a.lines[static_cast<std::size_t>(a.obs_line[o])])];
    const auto it = row_of.find(id);
    require(it != row_of.end(), ErrorCode::InvalidArgument, "no covariates for line '" + id + "'");
    out.row(static_cast<Index>(o)) = fx.design.row(it->second);
  }
  return out;
}

}  // namespace locepi
