#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cnm/cnmir.hpp"
#include "cnm/common.hpp"
#include "cnm/isa.hpp"
#include "cnm/mapping.hpp"
#include "cnm/target.hpp"

namespace cnm::engine {

struct EstimatorConfig {
  double alpha = 0.05;             // convergence tolerance on |2 - step2/step1|
  unsigned max_portion_iters = 32;
  uint64_t trace_cap = uint64_t(1) << 32;  // flatten guard
};

struct SimOptions {
  unsigned processes = 1;
  bool collect_events = false;  // per-issue log for schedule-level tests
};

struct IssueEvent {
  uint32_t thread = 0;
  uint64_t index = 0;  // position in the thread's unrolled trace
  isa::Opcode op = isa::Opcode::NOP;
  uint64_t issue_cycle = 0;
  uint64_t complete_cycle = 0;  // pipeline drain or transfer completion
  bool dma = false;
};

struct SimResult {
  uint64_t cycles = 0;
  std::vector<IssueEvent> events;
};

// Instruction-accurate simulation of one engine group.
//
// PIPELINE mode: `processes` threads each run the full program trace. Per
// cycle, threads are scanned in fixed index order and the first thread whose
// instruction is accepted issues (one issue per cycle). Acceptance: compute
// and blocking-memory instructions need the thread's previous issue to be
// min_issue_distance cycles old (emulated ops stretch that to their LUT
// latency; blocking levels to word_access_cycles); dma-level instructions
// additionally need a free channel and occupy it for
// setup + ceil(size / bytes_per_cycle) cycles, with the thread continuing
// before its own transfer completes. Returns the cycle at which the last
// instruction leaves the pipeline or the last transfer completes, whichever
// is later.
//
// VECTOR_PROC mode: single in-order stream; per-instruction latency is looked
// up with the location-transition context relative to the previous located
// instruction.
//
// Deterministic; throws Error with a state dump on deadlock.
SimResult simulate(const isa::Program& p, const target::TargetSpec& t,
                   const SimOptions& opt = {});

// Source of per-portion programs for the estimator: a kernel lowered per
// subspace, or a raw program whose outermost loop trip is the scalable axis.
class TraceSource {
 public:
  virtual ~TraceSource() = default;
  virtual ir::Subspace space() const = 0;
  // Portion for a growth coefficient >= 1: the minimal
  // all-static-instructions portion scaled innermost-first, saturating at the
  // full space.
  virtual ir::Subspace portion(uint64_t coef) const = 0;
  virtual isa::Program lower(const ir::Subspace& portion) const = 0;
  virtual unsigned processes() const = 0;
};

class KernelTraceSource final : public TraceSource {
 public:
  KernelTraceSource(const ir::KernelIr& k, const target::TargetSpec& t,
                    ir::Subspace leaf, unsigned processes);
  ir::Subspace space() const override { return leaf_; }
  ir::Subspace portion(uint64_t coef) const override;
  isa::Program lower(const ir::Subspace& portion) const override;
  unsigned processes() const override { return processes_; }

 private:
  const ir::KernelIr& kernel_;
  const target::TargetSpec& target_;
  ir::Subspace leaf_;
  unsigned processes_;
  ir::TilePlan plan_;  // for the full leaf; fixes the portion tile width
};

class ProgramTraceSource final : public TraceSource {
 public:
  explicit ProgramTraceSource(isa::Program p);
  ir::Subspace space() const override;
  ir::Subspace portion(uint64_t coef) const override;
  isa::Program lower(const ir::Subspace& portion) const override;
  unsigned processes() const override { return 1; }

 private:
  isa::Program prog_;
  uint64_t outer_trip_ = 1;  // 1 for straight-line programs
};

ir::Subspace get_portion(const TraceSource& src, uint64_t coef);

struct Ratio {
  uint64_t num = 1;
  uint64_t den = 1;
};

// Point-count ratio |s| / |portion|; may be fractional.
Ratio remaining_space(const ir::Subspace& s, const ir::Subspace& portion);

struct PortionStats {
  ir::Subspace space1, space2;
  uint64_t step1 = 0, step2 = 0;
  unsigned iterations = 0;
  bool converged = false;
};

struct Estimate {
  uint64_t cycles = 0;
  PortionStats stats;
};

// Algorithm: for space_coef = 1,2,...: simulate portions coef and 2*coef;
// stop when |2 - step2/step1| <= alpha, the portions saturate, or
// max_portion_iters is hit (flagged unconverged). Result is
// ceil(step2 * |s| / |space2|); exact when the portion saturates.
Estimate perf_estimate(const TraceSource& src, const target::TargetSpec& t,
                       const EstimatorConfig& cfg = {});

constexpr uint32_t kHostLevel = 0xffffffff;

struct AccumReport {
  std::string map_id;  // empty for cross-map entries
  uint32_t dim = 0;
  uint32_t level = 0;  // hierarchy index, or kHostLevel when escalated to host
  uint64_t fan_in = 1;
  bool escalated = false;
  uint64_t bytes = 0;   // partial-result traffic
  uint64_t cycles = 0;  // 0 when escalated (host excluded)
};

struct MapResult {
  std::string map_id;
  uint32_t order = 0;
  uint64_t engine_groups = 1;       // independent co-simulated groups
  unsigned processes = 1;           // co-simulated processes per group
  std::vector<uint64_t> units_per_level;
  uint64_t engine_cycles = 0;       // max over independent groups
  uint64_t accum_cycles = 0;
  PortionStats stats;
};

struct EstimationResult {
  uint64_t cycles = 0;
  double latency_ms = 0.0;  // cycles / clock_mhz / 1000
  std::vector<MapResult> per_map;
  std::vector<AccumReport> accum;
  bool converged = true;

  std::string to_record(const std::string& kernel, const std::string& target) const;
};

// Whole-system composition: maps run sequentially in precedence order; within
// a map, processes sharing an engine are co-simulated and independent units
// above take the max; reduction fan-ins are costed at accumulate-capable
// levels and reported (uncosted) when escalated.
EstimationResult estimate_system(const ir::KernelIr& k, const mapping::MappingSet& ms,
                                 const target::TargetSpec& t,
                                 const EstimatorConfig& cfg = {});

}  // namespace cnm::engine
