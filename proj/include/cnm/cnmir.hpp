#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnm/common.hpp"
#include "cnm/isa.hpp"
#include "cnm/target.hpp"

namespace cnm::ir {

enum class Role { in, out };
enum class IterKind { parallel, reduction };

// Arithmetic kinds a kernel body may use; lowered 1:1 to isa opcodes.
enum class OpKind { add, sub, mul, div, mac, band, bor, shl, shr, cmp, copy };

const char* to_string(Role r);
const char* to_string(IterKind k);
const char* to_string(OpKind k);
isa::Opcode to_opcode(OpKind k);

struct Operand {
  std::string id;
  Role role = Role::in;
  isa::DataType dtype = isa::DataType::i32;
  std::vector<uint64_t> shape;            // empty = scalar
  std::vector<std::string> index_vars;    // access map, one loop var per shape dim
  bool indirect = false;                  // data-dependent indexing (histogram bins)
  uint64_t elem_count() const;
  bool operator==(const Operand&) const = default;
};

struct Loop {
  std::string var;
  uint64_t extent = 1;
  IterKind kind = IterKind::parallel;
  bool operator==(const Loop&) const = default;
};

struct BodyOp {
  OpKind kind = OpKind::add;
  isa::DataType dtype = isa::DataType::i32;
  std::vector<std::string> inputs;   // operand ids
  std::string output;                // operand id
  bool conditional = false;          // executes on the sigma-scaled taken path
  bool operator==(const BodyOp&) const = default;
};

// Derived from operand access maps: one read per in-operand per point, one
// write per out-operand per point, bytes = dtype width.
struct MemoryRequest {
  std::string operand;
  bool is_write = false;
  uint64_t bytes_per_point = 0;
  bool operator==(const MemoryRequest&) const = default;
};

// Loop-nest kernel description. Loops are listed outer to inner; body ops run
// at the innermost level in exec_order sequence.
struct KernelIr {
  std::string name;
  std::vector<Operand> operands;
  std::vector<Loop> loops;
  std::vector<BodyOp> ops;
  std::vector<uint32_t> exec_order;        // indices into ops
  std::optional<double> selectivity;       // taken-branch fraction for cond ops
  std::vector<MemoryRequest> memory_requests;  // derived by build_kernel

  const Operand* find_operand(std::string_view id) const;
  // Dims that force partial-result accumulation when split: loops marked
  // reduction, plus dims absent from an accumulated out-operand's map.
  std::vector<uint32_t> reduction_dims() const;
  bool operator==(const KernelIr&) const = default;
};

// Axis-aligned box in the global iteration space.
struct Subspace {
  std::vector<uint64_t> extents;
  std::vector<uint64_t> origin;  // empty = zero origin
  uint64_t points() const;
  bool operator==(const Subspace&) const = default;
};

// Validates a draft (dangling refs, reduction without accumulation, shape /
// map arity, extents vs loop ranges) and fills derived fields.
KernelIr build_kernel(KernelIr draft);

KernelIr parse_kernel(std::string_view text);
std::string emit_kernel(const KernelIr& k);

struct LoweringOptions {
  // Processes sharing the scratchpad; per-process budget = capacity / this.
  unsigned active_processes = 1;
};

// Inner-dim memory tiling computed by the lowering for PIPELINE-mode targets
// (tile_width also drives the engine's minimal portion). For VECTOR_PROC
// targets tile_width is the vector lane count and chunk fields are unused.
struct TilePlan {
  uint64_t inner_extent = 1;
  uint64_t outer_points = 1;
  uint64_t tile_width = 1;      // J: inner elements per scratchpad tile
  uint64_t n_tiles = 1;
  uint64_t tile_rem = 0;        // width of the trailing partial tile (0 = none)
  uint64_t rows_per_chunk = 1;  // C: outer rows per DMA chunk
  uint64_t n_chunks = 1;
  uint64_t chunk_rem = 0;
};

TilePlan plan_tiling(const KernelIr& k, const target::TargetSpec& t,
                     const Subspace& s, const LoweringOptions& opt = {});

// Generates the per-process llvcnm program for one subspace. Three-level
// (dma + scratch) targets get bulk-DMA chunking around scratchpad word loops;
// two-level VECTOR_PROC targets get straight-line located bank/GRF code.
isa::Program lower_to_llvcnm(const KernelIr& k, const target::TargetSpec& t,
                             const Subspace& s, const LoweringOptions& opt = {});

// UPMEM-style assembly subset -> llvcnm. Statically-bounded decrement loops
// become LOOP/ENDLOOP; unsupported mnemonics and irreducible control flow are
// errors with line numbers.
isa::Program ingest_target_asm(std::string_view text);

}  // namespace cnm::ir
