#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnm/cnmir.hpp"
#include "cnm/common.hpp"
#include "cnm/target.hpp"

namespace cnm::mapping {

// One mapping vector: K+1 tuples of N division factors. Tuples 1..K divide
// the map's subspace across hierarchy levels; the last tuple is the per-leaf
// iteration extent. The map's subspace extent along dim j is the product of
// all tuple entries at j.
struct Map {
  std::string id;
  uint32_t order = 1;  // execution precedence, unique within a set
  std::vector<std::vector<uint64_t>> tuples;
  std::vector<uint64_t> subspace_extents() const;
  bool operator==(const Map&) const = default;
};

struct MappingSet {
  std::vector<uint64_t> space;  // global iteration extents
  std::vector<Map> maps;
  std::vector<const Map*> by_order() const;  // sorted by precedence
  bool operator==(const MappingSet&) const = default;
};

// Parses the .map format:
//   space (e1,...,eN)
//   map <id> order=<k> tuples=[(d11,..,d1N);...;(dK+1,1,..,dK+1,N)]
// Throws on malformed tuples, arity mismatches, nonpositive entries,
// duplicate orders or ids.
MappingSet parse_mapping(std::string_view text);
std::string emit_mapping(const MappingSet& ms);  // canonical, maps by order

// Empty iff (a) tuple arity/products are consistent, (b) per-level unit
// counts fit the target hierarchy, (c) map subspaces tile the global space
// disjointly and exactly under first-dimension-major placement.
std::vector<Diagnostic> validate_mapping(const MappingSet& ms, const target::TargetSpec& t);

// Map subspace origins under the allocation rule: maps in precedence order,
// each placed at the first free point scanning dim 1 fastest. Throws if the
// set does not tile the space (use validate_mapping for diagnostics).
std::vector<ir::Subspace> place_maps(const MappingSet& ms);

struct UnitAssignment {
  std::vector<uint64_t> unit_index;  // per hierarchy level, within parent
  bool operator==(const UnitAssignment&) const = default;
};

struct LeafPartition {
  ir::Subspace subspace;  // global origin
  UnitAssignment units;
};

struct MapPartition {
  Map map;
  ir::Subspace map_subspace;
  std::vector<LeafPartition> leaves;  // first-dimension-major enumeration
};

// Requires validate_mapping(ms, t) empty.
std::vector<MapPartition> partition(const MappingSet& ms, const target::TargetSpec& t);

struct FanIn {
  std::string map_id;
  uint32_t dim = 0;     // reduction dim index (0-based)
  uint32_t level = 0;   // hierarchy level index (0-based, root first)
  uint64_t fan_in = 1;  // d value along dim at that level
  bool escalate = false;  // level cannot accumulate locally
  bool operator==(const FanIn&) const = default;
};

struct CrossMapFanIn {
  uint32_t dim = 0;
  uint64_t fan_in = 1;  // max number of maps stacked along the reduction dim
  bool escalate = false;
  bool operator==(const CrossMapFanIn&) const = default;
};

struct AccumulationPlan {
  std::vector<FanIn> entries;
  std::vector<CrossMapFanIn> cross_map;
  // Product of d entries over reduction dims at one level of one map.
  uint64_t level_fan_in(std::string_view map_id, uint32_t level) const;
  bool operator==(const AccumulationPlan&) const = default;
};

AccumulationPlan reduction_plan(const MappingSet& ms,
                                const std::vector<uint32_t>& reduction_dims,
                                const target::TargetSpec& t);

struct EnumConstraints {
  // Per-hierarchy-level unit caps by level name, applied on top of the
  // target's available units.
  std::map<std::string, uint64_t> level_caps;
};

// Enumerates every valid single-map MappingSet for a space (ordered
// factorizations of each extent into K+1 factors, filtered by
// validate_mapping). Deterministic lexicographic order; seeded sampling.
class MappingEnumerator {
 public:
  MappingEnumerator(std::vector<uint64_t> space, const target::TargetSpec& t,
                    EnumConstraints constraints = {});

  // Total tuple combinations before validity filtering.
  uint64_t total_combinations() const { return total_; }
  std::optional<MappingSet> next();
  void reset() { cursor_ = 0; }

  // Up to `count` distinct valid mappings, reproducible for a fixed seed.
  std::vector<MappingSet> sample(uint64_t count, uint64_t seed);

  MappingSet decode(uint64_t index) const;  // by combination index
  bool valid(const MappingSet& ms) const;

 private:
  std::vector<uint64_t> space_;
  const target::TargetSpec& target_;
  EnumConstraints constraints_;
  std::vector<std::vector<std::vector<uint64_t>>> factorizations_;  // per dim
  uint64_t total_ = 0;
  uint64_t cursor_ = 0;
};

}  // namespace cnm::mapping
