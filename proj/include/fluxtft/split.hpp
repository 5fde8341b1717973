#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/rng.hpp"
#include "fluxtft/core/text.hpp"

namespace fluxtft {

enum class Split { train, val, test };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

struct SiteAssignment {
  std::string site_id;
  std::string group;
  Split split = Split::train;
  int fold = 0;  // 1-based CV fold; 0 for test sites or when no folds exist

  friend bool operator==(const SiteAssignment&, const SiteAssignment&) = default;
};

/// Site-level partition; every site appears exactly once.
struct SplitAssignment {
  std::vector<SiteAssignment> sites;
  std::vector<std::string> warnings;

  std::vector<std::string> ids(Split s) const {
    std::vector<std::string> out;
    for (const auto& a : sites) {
      if (a.split == s) out.push_back(a.site_id);
    }
    return out;
  }

  std::size_t count(Split s) const { return ids(s).size(); }

  const SiteAssignment* find(const std::string& id) const {
    for (const auto& a : sites) {
      if (a.site_id == id) return &a;
    }
    return nullptr;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "site_id,split,fold\n";
    for (const auto& a : sites) os << a.site_id << ',' << split_name(a.split) << ',' << a.fold << '\n';
    return os.str();
  }

  void save(const std::string& path) const { text::write_file(path, to_csv()); }

  static SplitAssignment load(const std::string& path) {
    SplitAssignment out;
    std::istringstream in(text::read_file(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      const auto f = text::split_csv(line);
      if (line_no == 1) {
        if (f != std::vector<std::string_view>{"site_id", "split", "fold"}) throw DataError(path + ":1: expected header site_id,split,fold");
        continue;
      }
      if (f.size() != 3) throw DataError(path + ":" + std::to_string(line_no) + ": expected 3 fields");
      SiteAssignment a;
      a.site_id = std::string(f[0]);
      try {
        a.split = parse_split(f[1]);
        a.fold = std::stoi(std::string(f[2]));
      } catch (const std::exception& e) {
        throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
      out.sites.push_back(std::move(a));
    }
    return out;
  }
};

namespace detail {

/// Largest-remainder rounding of ratios * n; ties go to the earlier bucket.
inline std::vector<int> largest_remainder(int n, const std::vector<double>& ratios) {
  std::vector<int> out(ratios.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t s = 0; s < ratios.size(); ++s) {
    const double exact = ratios[s] * n;
    out[s] = static_cast<int>(std::floor(exact + 1e-9));
    assigned += out[s];
    rem.emplace_back(exact - out[s], s);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n && i < rem.size(); ++i) {
    if (ratios[rem[i].second] <= 0.0) continue;
    ++out[rem[i].second];
    ++assigned;
  }
  return out;
}

/// Rounds the table n_g * ratio_s to integers so that every row sums to n_g,
/// every cell is the floor or ceiling of its exact value, and column totals
/// equal the largest-remainder rounding of N * ratio_s (controlled rounding).
/// With `small_in_order`, rows smaller than the number of nonzero buckets
/// are instead filled in bucket order. Returns false in `exact_totals` if the column targets could not be
/// met, in which case rows fall back to independent largest-remainder.
inline std::vector<std::vector<int>> apportion(const std::vector<int>& sizes, const std::vector<double>& ratios,
                                               bool& exact_totals, std::vector<std::size_t>& small_rows,
                                               bool small_in_order = true) {
  const std::size_t G = sizes.size(), S = ratios.size();
  const int N = std::accumulate(sizes.begin(), sizes.end(), 0);
  const std::vector<int> totals = largest_remainder(N, ratios);
  std::size_t nonzero = 0;
  for (double r : ratios) nonzero += r > 0.0 ? 1 : 0;

  std::vector<std::vector<int>> cells(G, std::vector<int>(S, 0));
  std::vector<std::vector<int>> cap(G, std::vector<int>(S, 0));
  std::vector<std::vector<double>> frac(G, std::vector<double>(S, 0.0));
  std::vector<int> row_need(G, 0), col_need = totals;
  small_rows.clear();
  for (std::size_t g = 0; g < G; ++g) {
    if (small_in_order && static_cast<std::size_t>(sizes[g]) < nonzero) {
      small_rows.push_back(g);
      int left = sizes[g];
      for (std::size_t s = 0; s < S && left > 0; ++s) {
        if (ratios[s] > 0.0) {
          cells[g][s] = 1;
          --left;
        }
      }
    } else {
      int lower_sum = 0;
      for (std::size_t s = 0; s < S; ++s) {
        const double exact = ratios[s] * sizes[g];
        const int lo = static_cast<int>(std::floor(exact + 1e-9));
        cells[g][s] = lo;
        frac[g][s] = exact - lo;
        cap[g][s] = (ratios[s] > 0.0 && frac[g][s] > 1e-9) ? 1 : 0;
        lower_sum += lo;
      }
      row_need[g] = sizes[g] - lower_sum;
    }
    for (std::size_t s = 0; s < S; ++s) col_need[s] -= cells[g][s];
  }

  exact_totals = std::all_of(col_need.begin(), col_need.end(), [](int c) { return c >= 0; });
  if (exact_totals) {
    // Greedy by fractional part, then augmenting paths for what is left.
    std::vector<std::vector<int>> flow(G, std::vector<int>(S, 0));
    std::vector<std::tuple<double, std::size_t, std::size_t>> order;
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t s = 0; s < S; ++s) {
        if (cap[g][s]) order.emplace_back(-frac[g][s], g, s);
      }
    }
    std::stable_sort(order.begin(), order.end());
    std::vector<int> row_left = row_need, col_left = col_need;
    for (const auto& [negf, g, s] : order) {
      if (row_left[g] > 0 && col_left[s] > 0) {
        flow[g][s] = 1;
        --row_left[g];
        --col_left[s];
      }
    }
    auto augment = [&](auto&& self, std::size_t g, std::vector<char>& seen_col) -> bool {
      for (std::size_t s = 0; s < S; ++s) {
        if (!cap[g][s] || flow[g][s] || seen_col[s]) continue;
        seen_col[s] = 1;
        if (col_left[s] > 0) {
          flow[g][s] = 1;
          --col_left[s];
          return true;
        }
        for (std::size_t g2 = 0; g2 < G; ++g2) {
          if (g2 != g && flow[g2][s]) {
            flow[g2][s] = 0;
            if (self(self, g2, seen_col)) {
              flow[g][s] = 1;
              return true;
            }
            flow[g2][s] = 1;
          }
        }
      }
      return false;
    };
    for (std::size_t g = 0; g < G && exact_totals; ++g) {
      while (row_left[g] > 0) {
        std::vector<char> seen(S, 0);
        if (!augment(augment, g, seen)) {
          exact_totals = false;
          break;
        }
        --row_left[g];
      }
    }
    if (exact_totals) {
      for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t s = 0; s < S; ++s) cells[g][s] += flow[g][s];
      }
      return cells;
    }
  }
  // Infeasible column targets: independent per-row rounding.
  for (std::size_t g = 0; g < G; ++g) {
    if (std::find(small_rows.begin(), small_rows.end(), g) != small_rows.end()) continue;
    cells[g] = largest_remainder(sizes[g], ratios);
  }
  return cells;
}

/// Groups site indices by label, groups in sorted label order, sites in id order.
inline std::map<std::string, std::vector<std::size_t>> group_sites(const std::vector<SiteAssignment>& sites) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sites.size(); ++i) groups[sites[i].group].push_back(i);
  for (auto& [g, idx] : groups) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sites[a].site_id < sites[b].site_id; });
  }
  return groups;
}

}  // namespace detail

/// Stratified site-level split by group label (generic IGBP).
///
/// Within each group, sites are shuffled with the seeded RNG and apportioned
/// to train/val/test by controlled rounding: each group gets the floor or
/// ceiling of its share per split and the overall totals equal the
/// largest-remainder rounding of the ratios.
inline SplitAssignment stratified_split(const std::vector<std::pair<std::string, std::string>>& sites,
                                        std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw UsageError("stratified_split: ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw UsageError("stratified_split: ratios must sum to 1");
  SplitAssignment out;
  for (const auto& [id, group] : sites) {
    if (group.empty()) throw UsageError("stratified_split: site " + id + " has no group label");
    out.sites.push_back({id, group, Split::train, 0});
  }
  const auto groups = detail::group_sites(out.sites);
  std::vector<int> sizes;
  for (const auto& [g, idx] : groups) sizes.push_back(static_cast<int>(idx.size()));
  bool exact = true;
  std::vector<std::size_t> small;
  const auto cells = detail::apportion(sizes, {ratios.begin(), ratios.end()}, exact, small);
  if (!exact) out.warnings.push_back("split totals could not match the global rounding exactly");

  Rng rng(seed);
  std::size_t g = 0;
  for (const auto& [label, idx] : groups) {
    std::vector<std::size_t> order = idx;
    rng.shuffle(order);
    if (std::find(small.begin(), small.end(), g) != small.end()) {
      out.warnings.push_back("group " + label + " has fewer sites than split buckets; filled train, val, test in order");
    }
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (int c = 0; c < cells[g][s]; ++c) out.sites[order[pos++]].split = static_cast<Split>(s);
    }
    ++g;
  }
  return out;
}

/// Partitions the non-test sites into `n_folds` stratified folds. Element f
/// of the result validates on fold f+1 and trains on the other folds; test
/// sites keep their assignment. Groups smaller than `n_folds` are spread
/// over the folds by the same controlled rounding, so folds stay balanced.
inline std::vector<SplitAssignment> cv_groups(const SplitAssignment& split, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw UsageError("cv_groups: n_folds must be >= 2");
  std::vector<SiteAssignment> pool;
  for (const auto& a : split.sites) {
    if (a.split != Split::test) pool.push_back(a);
  }
  if (static_cast<std::size_t>(n_folds) > pool.size()) {
    throw UsageError("cv_groups: " + std::to_string(n_folds) + " folds exceed " + std::to_string(pool.size()) + " non-test sites");
  }
  const auto groups = detail::group_sites(pool);
  std::vector<int> sizes;
  for (const auto& [g, idx] : groups) sizes.push_back(static_cast<int>(idx.size()));
  bool exact = true;
  std::vector<std::size_t> small;
  const auto cells = detail::apportion(sizes, std::vector<double>(n_folds, 1.0 / n_folds), exact, small, false);

  std::map<std::string, int> fold_of;
  Rng rng(seed);
  std::size_t g = 0;
  for (const auto& [label, idx] : groups) {
    std::vector<std::size_t> order = idx;
    rng.shuffle(order);
    std::size_t pos = 0;
    for (int f = 0; f < n_folds; ++f) {
      for (int c = 0; c < cells[g][f]; ++c) fold_of[pool[order[pos++]].site_id] = f + 1;
    }
    ++g;
  }
  std::vector<SplitAssignment> out;
  for (int f = 1; f <= n_folds; ++f) {
    SplitAssignment a;
    a.warnings = split.warnings;
    if (!exact) a.warnings.push_back("fold sizes could not be balanced exactly");
    for (const auto& s : split.sites) {
      SiteAssignment c = s;
      if (s.split != Split::test) {
        c.fold = fold_of.at(s.site_id);
        c.split = c.fold == f ? Split::val : Split::train;
      } else {
        c.fold = 0;
      }
      a.sites.push_back(std::move(c));
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace fluxtft
