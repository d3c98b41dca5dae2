#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cnm/common.hpp"
#include "cnm/isa.hpp"

namespace cnm::target {

enum class EngineMode { PIPELINE, VECTOR_PROC };

// pipeline: blocking per-word access through the execution pipeline (WRAM,
// register files). dma: non-blocking transfer engine with FIFO channels
// (MRAM). bank: blocking bulk access (HBM-PIM bank interface).
enum class MemAccess { pipeline, dma, bank };

struct DmaParams {
  uint32_t channels = 1;
  uint64_t setup_cycles = 0;
  uint64_t bytes_per_cycle = 1;
  bool operator==(const DmaParams&) const = default;
};

struct MemLevelSpec {
  std::string name;
  uint64_t capacity_bytes = 0;
  MemAccess access = MemAccess::pipeline;
  std::optional<DmaParams> dma;                 // required iff access == dma
  std::optional<uint64_t> word_access_cycles;   // required iff access != dma
  std::optional<uint64_t> row_bytes;            // DRAM row size (location math)
  bool operator==(const MemLevelSpec&) const = default;
};

struct HierarchyLevel {
  std::string name;
  uint64_t units = 1;          // units per parent
  bool can_accumulate = false; // siblings can combine partial results locally
  bool operator==(const HierarchyLevel&) const = default;
};

struct PipelineParams {
  uint32_t stages = 1;
  uint32_t min_issue_distance = 1;
  uint32_t hw_threads = 1;
  bool operator==(const PipelineParams&) const = default;
};

struct VectorParams {
  uint32_t lanes = 1;  // elements per vector instruction
  bool operator==(const VectorParams&) const = default;
};

enum class ContextClass { Default, Magnitude, SameRow, RowSwitch, BankParitySwitch };

const char* to_string(ContextClass c);

struct LutEntry {
  isa::Opcode op;
  isa::DataType dtype;
  ContextClass cls = ContextClass::Default;
  uint64_t mag_lo = 0;  // Magnitude bucket [mag_lo, mag_hi); ignored otherwise
  uint64_t mag_hi = 0;
  uint64_t cycles = 1;
  bool placeholder = false;  // calibration: placeholder (not a published constant)
  bool operator==(const LutEntry&) const = default;
};

// Lookup context: value magnitude for software-emulated ops, or the location
// transition relative to the previous located instruction (VECTOR_PROC).
struct LatencyContext {
  std::optional<uint64_t> value_magnitude;
  std::optional<ContextClass> transition;
};

class LatencyLut {
 public:
  std::vector<LutEntry> entries;

  // Builds the lookup index; call after mutating entries.
  void build_index();
  bool supports(isa::Opcode op, isa::DataType dt) const;
  // Most specific match: transition class, then magnitude bucket, then
  // default. Throws Error for unsupported (opcode, dtype).
  uint64_t lookup(isa::Opcode op, isa::DataType dt, const LatencyContext& ctx) const;

  bool operator==(const LatencyLut& o) const { return entries == o.entries; }

 private:
  struct Resolved {
    uint64_t def = 0;
    bool has_def = false;
    uint64_t same_row = 0, row_switch = 0, parity_switch = 0;
    bool has_same_row = false, has_row_switch = false, has_parity_switch = false;
    std::vector<LutEntry> buckets;
  };
  std::unordered_map<uint32_t, Resolved> index_;
};

struct TargetSpec {
  std::string name;
  double clock_mhz = 1.0;
  EngineMode mode = EngineMode::PIPELINE;
  std::vector<isa::DataType> dtypes;            // supported data types
  std::vector<HierarchyLevel> hierarchy;        // root first
  std::optional<PipelineParams> pipeline;       // required iff PIPELINE
  std::optional<VectorParams> vector_proc;      // required iff VECTOR_PROC
  std::vector<MemLevelSpec> memory;             // declared far-to-near
  LatencyLut lut;

  const MemLevelSpec* find_level(std::string_view name) const;
  bool supports_dtype(isa::DataType dt) const;
  bool location_sensitive() const { return mode == EngineMode::VECTOR_PROC; }
  // First dma-access level / first pipeline-access level in declaration order.
  const MemLevelSpec* dma_level() const;
  const MemLevelSpec* scratch_level() const;
  const MemLevelSpec* bank_level() const;

  bool operator==(const TargetSpec&) const = default;
};

// Throws on any schema violation; also builds the LUT index.
void validate_target(TargetSpec& t);

// Strict parse of the .cfg format (unknown keys are errors).
TargetSpec load_target(std::string_view text);
std::string emit_target(const TargetSpec& t);

// Bundled targets: "upmem", "hbmpim". If COMONM_TARGET_PATH is set, presets
// are loaded from <dir>/<name>.cfg instead.
TargetSpec preset(std::string_view name);
std::vector<std::string> preset_names();

struct Override {
  std::string key;    // dotted path, e.g. pipeline.stages, lut.MUL.i32.default
  std::string value;  // integers accept KiB/MiB/GiB/KB/MB/GB suffixes
  bool operator==(const Override&) const = default;
};
using OverrideSet = std::vector<Override>;

// Returns a re-validated copy; never mutates the input. Throws on
// unresolvable keys or invariant-violating values.
TargetSpec apply_overrides(const TargetSpec& t, const OverrideSet& overrides);

uint64_t lookup_latency(const LatencyLut& lut, const isa::Instruction& ins,
                        const LatencyContext& ctx);

}  // namespace cnm::target
