#include "cnm/mapping.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace cnm::mapping {

std::vector<uint64_t> Map::subspace_extents() const {
  if (tuples.empty()) return {};
  std::vector<uint64_t> ext(tuples[0].size(), 1);
  for (const auto& tup : tuples)
    for (size_t j = 0; j < tup.size(); j++)
      ext[j] = mul_checked(ext[j], tup[j], "map subspace extent");
  return ext;
}

std::vector<const Map*> MappingSet::by_order() const {
  std::vector<const Map*> out;
  for (const Map& m : maps) out.push_back(&m);
  std::sort(out.begin(), out.end(),
            [](const Map* a, const Map* b) { return a->order < b->order; });
  return out;
}

// ---------------------------------------------------------------------------
// .map format

MappingSet parse_mapping(std::string_view text) {
  MappingSet ms;
  LineScanner scan(text, '#');
  std::string_view line;
  int lineno = 0;
  std::set<uint32_t> orders;
  std::set<std::string> ids;

  auto parse_tuple = [&](std::string_view s) {
    s = trim(s);
    if (s.size() < 2 || s.front() != '(' || s.back() != ')')
      throw Error(strprintf("map:%d: expected (..,..), got '%.*s'", lineno, (int)s.size(), s.data()));
    std::vector<uint64_t> vals;
    for (auto part : split_char(s.substr(1, s.size() - 2), ',')) {
      uint64_t v = parse_u64(trim(part), "tuple entry");
      if (v == 0) throw Error(strprintf("map:%d: tuple entries must be positive", lineno));
      vals.push_back(v);
    }
    if (vals.empty()) throw Error(strprintf("map:%d: empty tuple", lineno));
    return vals;
  };

  while (scan.next(line, lineno)) {
    auto toks = split_ws(line);
    if (toks[0] == "space") {
      if (toks.size() != 2) throw Error(strprintf("map:%d: expected 'space (e1,..,eN)'", lineno));
      ms.space = parse_tuple(toks[1]);
      continue;
    }
    if (toks[0] == "map") {
      if (toks.size() != 4) throw Error(strprintf(
          "map:%d: expected 'map <id> order=<k> tuples=[..]'", lineno));
      Map m;
      m.id = std::string(toks[1]);
      if (!ids.insert(m.id).second)
        throw Error(strprintf("map:%d: duplicate map id '%s'", lineno, m.id.c_str()));
      if (toks[2].substr(0, 6) != "order=")
        throw Error(strprintf("map:%d: expected order=<k>", lineno));
      m.order = (uint32_t)parse_u64(toks[2].substr(6), "order");
      if (!orders.insert(m.order).second)
        throw Error(strprintf("map:%d: duplicate order %u", lineno, m.order));
      std::string_view ts = toks[3];
      if (ts.substr(0, 8) != "tuples=[" || ts.back() != ']')
        throw Error(strprintf("map:%d: expected tuples=[(..);..]", lineno));
      ts = ts.substr(8, ts.size() - 9);
      for (auto part : split_char(ts, ';')) {
        auto vals = parse_tuple(part);
        if (!m.tuples.empty() && vals.size() != m.tuples[0].size())
          throw Error(strprintf("map:%d: tuple arity mismatch in '%s'", lineno, m.id.c_str()));
        m.tuples.push_back(std::move(vals));
      }
      if (m.tuples.empty()) throw Error(strprintf("map:%d: no tuples", lineno));
      if (!ms.space.empty() && m.tuples[0].size() != ms.space.size())
        throw Error(strprintf("map:%d: tuple arity %zu != space dims %zu", lineno,
                              m.tuples[0].size(), ms.space.size()));
      ms.maps.push_back(std::move(m));
      continue;
    }
    throw Error(strprintf("map:%d: unexpected line '%.*s'", lineno, (int)line.size(), line.data()));
  }
  if (ms.space.empty()) throw Error("map: missing space line");
  if (ms.maps.empty()) throw Error("map: no maps");
  return ms;
}

std::string emit_mapping(const MappingSet& ms) {
  std::string out = "space (";
  for (size_t j = 0; j < ms.space.size(); j++)
    out += strprintf(j ? ",%llu" : "%llu", (unsigned long long)ms.space[j]);
  out += ")\n";
  for (const Map* m : ms.by_order()) {
    out += strprintf("map %s order=%u tuples=[", m->id.c_str(), m->order);
    for (size_t i = 0; i < m->tuples.size(); i++) {
      if (i) out += ';';
      out += '(';
      for (size_t j = 0; j < m->tuples[i].size(); j++)
        out += strprintf(j ? ",%llu" : "%llu", (unsigned long long)m->tuples[i][j]);
      out += ')';
    }
    out += "]\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// First-dimension-major placement over half-open boxes.

namespace {

struct Box {
  std::vector<uint64_t> lo, hi;
  uint64_t volume() const {
    uint64_t v = 1;
    for (size_t d = 0; d < lo.size(); d++) v = mul_checked(v, hi[d] - lo[d], "box volume");
    return v;
  }
};

// Scan-order key: dim 0 varies fastest, so compare from the last dim down.
bool corner_less(const std::vector<uint64_t>& a, const std::vector<uint64_t>& b) {
  for (size_t d = a.size(); d-- > 0;) {
    size_t i = d;
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return false;
}

std::optional<Box> intersect(const Box& a, const Box& b) {
  Box r;
  r.lo.resize(a.lo.size());
  r.hi.resize(a.lo.size());
  for (size_t d = 0; d < a.lo.size(); d++) {
    r.lo[d] = std::max(a.lo[d], b.lo[d]);
    r.hi[d] = std::min(a.hi[d], b.hi[d]);
    if (r.lo[d] >= r.hi[d]) return std::nullopt;
  }
  return r;
}

// B minus R as disjoint slabs.
std::vector<Box> subtract(const Box& b, const Box& r) {
  auto inter = intersect(b, r);
  if (!inter) return {b};
  std::vector<Box> out;
  Box cur = b;
  for (size_t d = 0; d < b.lo.size(); d++) {
    if (cur.lo[d] < inter->lo[d]) {
      Box frag = cur;
      frag.hi[d] = inter->lo[d];
      out.push_back(frag);
      cur.lo[d] = inter->lo[d];
    }
    if (inter->hi[d] < cur.hi[d]) {
      Box frag = cur;
      frag.lo[d] = inter->hi[d];
      out.push_back(frag);
      cur.hi[d] = inter->hi[d];
    }
  }
  return out;
}

struct Placement {
  std::vector<ir::Subspace> origins;  // per map, in precedence order
  std::string error;                  // empty on success
  uint64_t leftover = 0;              // uncovered points after all maps
};

Placement try_place(const MappingSet& ms) {
  Placement out;
  size_t n = ms.space.size();
  Box global;
  global.lo.assign(n, 0);
  global.hi = ms.space;
  std::vector<Box> free_boxes{global};

  for (const Map* m : ms.by_order()) {
    auto ext = m->subspace_extents();
    if (ext.size() != n) {
      out.error = strprintf("map %s: tuple arity %zu != space dims %zu", m->id.c_str(),
                            ext.size(), n);
      return out;
    }
    if (free_boxes.empty()) {
      out.error = strprintf("map %s: no free space left", m->id.c_str());
      return out;
    }
    const Box* best = &free_boxes[0];
    for (const Box& b : free_boxes)
      if (corner_less(b.lo, best->lo)) best = &b;
    Box rect;
    rect.lo = best->lo;
    rect.hi.resize(n);
    for (size_t d = 0; d < n; d++) {
      rect.hi[d] = rect.lo[d] + ext[d];
      if (rect.hi[d] > ms.space[d]) {
        out.error = strprintf("map %s: subspace exceeds the global space along dim %zu",
                              m->id.c_str(), d + 1);
        return out;
      }
    }
    uint64_t covered = 0;
    for (const Box& b : free_boxes)
      if (auto i = intersect(rect, b)) covered += i->volume();
    if (covered != rect.volume()) {
      out.error = strprintf("map %s: overlaps previously allocated subspaces", m->id.c_str());
      return out;
    }
    std::vector<Box> next;
    for (const Box& b : free_boxes)
      for (Box& f : subtract(b, rect)) next.push_back(std::move(f));
    free_boxes = std::move(next);
    out.origins.push_back(ir::Subspace{ext, rect.lo});
  }
  for (const Box& b : free_boxes) out.leftover += b.volume();
  return out;
}

}  // namespace

std::vector<ir::Subspace> place_maps(const MappingSet& ms) {
  Placement p = try_place(ms);
  if (!p.error.empty()) throw Error("mapping: " + p.error);
  if (p.leftover)
    throw Error(strprintf("mapping: %llu points left uncovered",
                          (unsigned long long)p.leftover));
  return p.origins;
}

// ---------------------------------------------------------------------------
// validate_mapping

std::vector<Diagnostic> validate_mapping(const MappingSet& ms, const target::TargetSpec& t) {
  std::vector<Diagnostic> diags;
  size_t levels = t.hierarchy.size();
  size_t n = ms.space.size();
  if (n == 0) {
    diags.push_back({"space", "empty iteration space"});
    return diags;
  }
  std::set<uint32_t> orders;
  for (const Map& m : ms.maps) {
    if (!orders.insert(m.order).second)
      diags.push_back({m.id, strprintf("duplicate order %u", m.order)});
    if (m.tuples.size() != levels + 1) {
      diags.push_back({m.id, strprintf("expected %zu tuples (hierarchy levels + 1), got %zu",
                                       levels + 1, m.tuples.size())});
      continue;
    }
    for (size_t i = 0; i < m.tuples.size(); i++) {
      if (m.tuples[i].size() != n)
        diags.push_back({m.id, strprintf("tuple %zu arity %zu != space dims %zu", i + 1,
                                         m.tuples[i].size(), n)});
      for (uint64_t v : m.tuples[i])
        if (v == 0) diags.push_back({m.id, strprintf("tuple %zu has a zero entry", i + 1)});
    }
    if (m.tuples.size() == levels + 1 && m.tuples[0].size() == n) {
      for (size_t i = 0; i < levels; i++) {
        uint64_t units = 1;
        for (uint64_t v : m.tuples[i]) units = mul_checked(units, v, "unit count");
        if (units > t.hierarchy[i].units)
          diags.push_back(
              {m.id, strprintf("level %s needs %llu units, target has %llu",
                               t.hierarchy[i].name.c_str(), (unsigned long long)units,
                               (unsigned long long)t.hierarchy[i].units)});
      }
    }
  }
  if (!diags.empty()) return diags;

  Placement p = try_place(ms);
  if (!p.error.empty()) diags.push_back({"tiling", p.error});
  else if (p.leftover)
    diags.push_back({"tiling", strprintf("%llu points of the global space are uncovered",
                                         (unsigned long long)p.leftover)});
  return diags;
}

// ---------------------------------------------------------------------------
// partition

namespace {

void emit_leaves(const Map& m, size_t level, std::vector<uint64_t> origin,
                 std::vector<uint64_t> extents, std::vector<uint64_t>& unit_prefix,
                 std::vector<LeafPartition>& out) {
  size_t levels = m.tuples.size() - 1;
  if (level == levels) {
    out.push_back({ir::Subspace{extents, origin}, UnitAssignment{unit_prefix}});
    return;
  }
  const auto& div = m.tuples[level];
  size_t n = div.size();
  std::vector<uint64_t> child(n);
  uint64_t total = 1;
  for (size_t j = 0; j < n; j++) {
    child[j] = extents[j] / div[j];
    total *= div[j];
  }
  // first-dimension-major: dim 1 varies fastest across sibling units
  for (uint64_t lin = 0; lin < total; lin++) {
    uint64_t rem = lin;
    std::vector<uint64_t> o = origin;
    for (size_t j = 0; j < n; j++) {
      uint64_t c = rem % div[j];
      rem /= div[j];
      o[j] += c * child[j];
    }
    unit_prefix.push_back(lin);
    emit_leaves(m, level + 1, o, child, unit_prefix, out);
    unit_prefix.pop_back();
  }
}

}  // namespace

std::vector<MapPartition> partition(const MappingSet& ms, const target::TargetSpec& t) {
  auto diags = validate_mapping(ms, t);
  if (!diags.empty())
    throw Error("partition: invalid mapping: " + diags[0].where + ": " + diags[0].message);
  std::vector<ir::Subspace> origins = place_maps(ms);
  std::vector<MapPartition> out;
  auto ordered = ms.by_order();
  for (size_t i = 0; i < ordered.size(); i++) {
    MapPartition mp;
    mp.map = *ordered[i];
    mp.map_subspace = origins[i];
    std::vector<uint64_t> prefix;
    emit_leaves(*ordered[i], 0, origins[i].origin, origins[i].extents, prefix, mp.leaves);
    out.push_back(std::move(mp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// reduction_plan

uint64_t AccumulationPlan::level_fan_in(std::string_view map_id, uint32_t level) const {
  uint64_t f = 1;
  for (const FanIn& e : entries)
    if (e.map_id == map_id && e.level == level) f = mul_checked(f, e.fan_in, "fan-in");
  return f;
}

AccumulationPlan reduction_plan(const MappingSet& ms,
                                const std::vector<uint32_t>& reduction_dims,
                                const target::TargetSpec& t) {
  AccumulationPlan plan;
  if (reduction_dims.empty()) return plan;
  size_t levels = t.hierarchy.size();
  for (const Map* m : ms.by_order()) {
    for (uint32_t dim : reduction_dims) {
      for (size_t i = 0; i < levels && i < m->tuples.size(); i++) {
        uint64_t d = dim < m->tuples[i].size() ? m->tuples[i][dim] : 1;
        if (d <= 1) continue;
        plan.entries.push_back(
            {m->id, dim, (uint32_t)i, d, !t.hierarchy[i].can_accumulate});
      }
    }
  }

  // Cross-map dependencies: the max number of map subspaces stacked along a
  // reduction dim over any output line. Maps run sequentially on the same
  // units, so merging can only happen at the hierarchy root (else the host).
  if (ms.maps.size() >= 2) {
    Placement p = try_place(ms);
    if (p.error.empty()) {
      size_t n = ms.space.size();
      for (uint32_t dim : reduction_dims) {
        // coordinate-compress the complementary dims and count coverage
        std::vector<std::vector<uint64_t>> cuts(n);
        for (const auto& sub : p.origins) {
          for (size_t d = 0; d < n; d++) {
            if (d == dim) continue;
            cuts[d].push_back(sub.origin[d]);
            cuts[d].push_back(sub.origin[d] + sub.extents[d]);
          }
        }
        for (auto& c : cuts) {
          std::sort(c.begin(), c.end());
          c.erase(std::unique(c.begin(), c.end()), c.end());
        }
        uint64_t max_stack = 0;
        std::vector<size_t> cell(n, 0);
        // iterate the cell grid over complementary dims
        auto advance = [&]() -> bool {
          for (size_t d = 0; d < n; d++) {
            if (d == dim) continue;
            if (cuts[d].size() < 2) continue;
            if (++cell[d] + 1 < cuts[d].size()) return true;
            cell[d] = 0;
          }
          return false;
        };
        bool any_cells = true;
        for (size_t d = 0; d < n && any_cells; d++)
          if (d != dim && cuts[d].size() < 2) any_cells = (n == 1);
        if (n == 1) {
          // 1-D space: all maps stack along the single dim
          max_stack = ms.maps.size();
        } else if (any_cells) {
          do {
            uint64_t count = 0;
            for (const auto& sub : p.origins) {
              bool covers = true;
              for (size_t d = 0; d < n; d++) {
                if (d == dim) continue;
                uint64_t point = cuts[d][cell[d]];
                if (point < sub.origin[d] || point >= sub.origin[d] + sub.extents[d])
                  covers = false;
              }
              if (covers) count++;
            }
            max_stack = std::max(max_stack, count);
          } while (advance());
        }
        if (max_stack >= 2)
          plan.cross_map.push_back({dim, max_stack, !t.hierarchy[0].can_accumulate});
      }
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// MappingEnumerator

namespace {

std::vector<uint64_t> divisors_of(uint64_t n) {
  std::vector<uint64_t> lo, hi;
  for (uint64_t d = 1; d * d <= n; d++) {
    if (n % d) continue;
    lo.push_back(d);
    if (d != n / d) hi.push_back(n / d);
  }
  lo.insert(lo.end(), hi.rbegin(), hi.rend());
  return lo;
}

void gen_factorizations(uint64_t n, size_t k, const std::vector<uint64_t>& divs,
                        std::vector<uint64_t>& prefix,
                        std::vector<std::vector<uint64_t>>& out) {
  if (k == 1) {
    prefix.push_back(n);
    out.push_back(prefix);
    prefix.pop_back();
    return;
  }
  for (uint64_t d : divs) {
    if (d > n || n % d) continue;
    prefix.push_back(d);
    gen_factorizations(n / d, k - 1, divs, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

MappingEnumerator::MappingEnumerator(std::vector<uint64_t> space, const target::TargetSpec& t,
                                     EnumConstraints constraints)
    : space_(std::move(space)), target_(t), constraints_(std::move(constraints)) {
  if (space_.empty()) throw Error("enumerate: empty space");
  size_t k = target_.hierarchy.size() + 1;
  total_ = 1;
  for (uint64_t e : space_) {
    if (e == 0) throw Error("enumerate: zero extent");
    std::vector<std::vector<uint64_t>> facts;
    std::vector<uint64_t> prefix;
    auto divs = divisors_of(e);
    gen_factorizations(e, k, divs, prefix, facts);
    total_ = mul_checked(total_, facts.size(), "mapping combinations");
    factorizations_.push_back(std::move(facts));
  }
}

MappingSet MappingEnumerator::decode(uint64_t index) const {
  MappingSet ms;
  ms.space = space_;
  Map m;
  m.id = strprintf("m%llu", (unsigned long long)index);
  m.order = 1;
  size_t k = target_.hierarchy.size() + 1;
  m.tuples.assign(k, std::vector<uint64_t>(space_.size(), 1));
  uint64_t rem = index;
  for (size_t j = 0; j < space_.size(); j++) {
    const auto& facts = factorizations_[j];
    uint64_t fi = rem % facts.size();
    rem /= facts.size();
    for (size_t i = 0; i < k; i++) m.tuples[i][j] = facts[fi][i];
  }
  ms.maps.push_back(std::move(m));
  return ms;
}

bool MappingEnumerator::valid(const MappingSet& ms) const {
  if (!validate_mapping(ms, target_).empty()) return false;
  for (const Map& m : ms.maps) {
    for (size_t i = 0; i < target_.hierarchy.size(); i++) {
      auto it = constraints_.level_caps.find(target_.hierarchy[i].name);
      if (it == constraints_.level_caps.end()) continue;
      uint64_t units = 1;
      for (uint64_t v : m.tuples[i]) units *= v;
      if (units > it->second) return false;
    }
  }
  return true;
}

std::optional<MappingSet> MappingEnumerator::next() {
  while (cursor_ < total_) {
    MappingSet ms = decode(cursor_++);
    if (valid(ms)) return ms;
  }
  return std::nullopt;
}

std::vector<MappingSet> MappingEnumerator::sample(uint64_t count, uint64_t seed) {
  std::vector<MappingSet> out;
  if (count == 0) return out;
  if (count >= total_) {
    for (uint64_t i = 0; i < total_; i++) {
      MappingSet ms = decode(i);
      if (valid(ms)) out.push_back(std::move(ms));
    }
    return out;
  }
  // Portable bounded draw: mask-and-reject (uniform_int_distribution is not
  // reproducible across standard libraries).
  std::mt19937_64 rng(seed);
  uint64_t mask = 1;
  while (mask < total_) mask = (mask << 1) | 1;
  std::set<uint64_t> chosen;
  uint64_t attempts = 0;
  const uint64_t max_attempts = count * 200 + 10000;
  while (chosen.size() < count && attempts < max_attempts) {
    attempts++;
    uint64_t v = rng() & mask;
    if (v >= total_ || chosen.count(v)) continue;
    MappingSet ms = decode(v);
    if (valid(ms)) chosen.insert(v);
  }
  // deterministic fallback when validity is too sparse for sampling
  for (uint64_t i = 0; i < total_ && chosen.size() < count; i++) {
    if (chosen.count(i)) continue;
    MappingSet ms = decode(i);
    if (valid(ms)) chosen.insert(i);
  }
  for (uint64_t v : chosen) out.push_back(decode(v));
  return out;
}

}  // namespace cnm::mapping
