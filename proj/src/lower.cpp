#include <algorithm>
#include <cmath>

#include "cnm/cnmir.hpp"

namespace cnm::ir {

namespace {

using isa::Instruction;
using isa::Opcode;

struct OpndInfo {
  const Operand* op = nullptr;
  unsigned width = 4;
  bool uses_inner = false;
  bool uses_outer = false;
  bool resident = false;     // scalar or indirect: pinned in scratch / registers
  bool accumulated = false;  // appears among its producer's inputs
  bool read = false;
  bool written = false;
  std::string reg;
  std::string addr;
};

struct Classified {
  std::vector<OpndInfo> info;
  bool has_cond = false;

  OpndInfo& find(const std::string& id) {
    for (OpndInfo& i : info)
      if (i.op->id == id) return i;
    throw Error(strprintf("lower: unknown operand '%s'", id.c_str()));
  }
};

Classified classify(const KernelIr& k) {
  Classified c;
  const std::string& inner_var = k.loops.back().var;
  int reg = 0;
  for (const Operand& o : k.operands) {
    OpndInfo oi;
    oi.op = &o;
    oi.width = isa::width_bytes(o.dtype);
    for (const std::string& v : o.index_vars) {
      if (v == inner_var) oi.uses_inner = true;
      else oi.uses_outer = true;
    }
    oi.resident = o.indirect || o.index_vars.empty();
    oi.reg = strprintf("r%d", reg++);
    oi.addr = strprintf("r%d", reg++);
    c.info.push_back(oi);
  }
  for (const BodyOp& op : k.ops) {
    c.has_cond |= op.conditional;
    for (const std::string& in : op.inputs) {
      OpndInfo& oi = c.find(in);
      oi.read = true;
      if (in == op.output) oi.accumulated = true;
    }
    c.find(op.output).written = true;
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tiling plan

TilePlan plan_tiling(const KernelIr& k, const target::TargetSpec& t, const Subspace& s,
                     const LoweringOptions& opt) {
  if (s.extents.size() != k.loops.size())
    throw Error(strprintf("lower: subspace rank %zu != kernel loop count %zu",
                          s.extents.size(), k.loops.size()));
  for (uint64_t e : s.extents)
    if (e == 0) throw Error("lower: zero subspace extent");
  if (opt.active_processes == 0) throw Error("lower: active_processes must be >= 1");

  TilePlan p;
  p.inner_extent = s.extents.back();
  p.outer_points = 1;
  for (size_t d = 0; d + 1 < s.extents.size(); d++)
    p.outer_points = mul_checked(p.outer_points, s.extents[d], "outer points");

  if (t.mode == target::EngineMode::VECTOR_PROC) {
    uint64_t lanes = t.vector_proc ? t.vector_proc->lanes : 1;
    p.tile_width = std::min(p.inner_extent, lanes);
    p.n_tiles = ceil_div(p.inner_extent, p.tile_width);
    p.tile_rem = p.inner_extent % p.tile_width;
    p.rows_per_chunk = 1;
    p.n_chunks = p.outer_points;
    p.chunk_rem = 0;
    return p;
  }

  Classified c = classify(k);
  const target::MemLevelSpec* scratch = t.scratch_level();
  if (!scratch) {
    p.tile_width = p.inner_extent;
    p.n_tiles = 1;
    p.rows_per_chunk = p.outer_points;
    p.n_chunks = 1;
    return p;
  }

  uint64_t budget = scratch->capacity_bytes / opt.active_processes;
  uint64_t fixed = 0, row_fixed = 0, tile_coef = 0, row_tile_coef = 0;
  for (const OpndInfo& oi : c.info) {
    if (oi.resident) fixed += mul_checked(oi.op->elem_count(), oi.width, "resident bytes");
    else if (oi.uses_inner && oi.uses_outer) row_tile_coef += oi.width;
    else if (oi.uses_inner) tile_coef += oi.width;
    else row_fixed += oi.width;
  }

  const char* kBudgetErr = "lower: tile working set exceeds scratchpad budget";
  if (budget <= fixed) throw Error(kBudgetErr);
  uint64_t avail = budget - fixed;

  uint64_t inner = p.inner_extent;
  uint64_t j;
  if (tile_coef + row_tile_coef == 0) {
    j = inner;
  } else {
    if (avail <= row_fixed) throw Error(kBudgetErr);
    uint64_t jmax = (avail - row_fixed) / (tile_coef + row_tile_coef);
    if (jmax < 1) throw Error(kBudgetErr);
    j = std::min(inner, jmax);
    if (j < inner && j > 8) j -= j % 8;  // DMA-friendly tile width
  }
  p.tile_width = j;
  p.n_tiles = ceil_div(inner, j);
  p.tile_rem = inner % j;

  uint64_t denom = row_fixed + row_tile_coef * j;
  if (denom == 0) {
    p.rows_per_chunk = p.outer_points;
  } else {
    uint64_t used = tile_coef * j;
    if (avail <= used) throw Error(kBudgetErr);
    uint64_t rows = (avail - used) / denom;
    if (rows < 1) throw Error(kBudgetErr);
    p.rows_per_chunk = std::min(rows, p.outer_points);
  }
  p.n_chunks = ceil_div(p.outer_points, p.rows_per_chunk);
  p.chunk_rem = p.outer_points % p.rows_per_chunk;
  return p;
}

// ---------------------------------------------------------------------------
// PIPELINE lowering: bulk DMA chunks around scratchpad word loops.

namespace {

struct PipeLower {
  const KernelIr& k;
  const target::TargetSpec& t;
  const LoweringOptions& opt;
  Classified cls;
  TilePlan plan;
  std::string dma;      // dma level name (empty = none)
  std::string scratch;  // word-access level name
  isa::Program prog;
  int next_label = 0;
  int next_tmp = 0;

  PipeLower(const KernelIr& k_, const target::TargetSpec& t_, const Subspace& s,
            const LoweringOptions& o)
      : k(k_), t(t_), opt(o), cls(classify(k_)), plan(plan_tiling(k_, t_, s, o)) {
    for (const OpndInfo& oi : cls.info)
      if (!t.supports_dtype(oi.op->dtype))
        throw Error(strprintf("lower: dtype %s unsupported by target '%s'",
                              isa::to_string(oi.op->dtype), t.name.c_str()));
    if (const auto* lvl = t.dma_level()) dma = lvl->name;
    if (const auto* lvl = t.scratch_level()) scratch = lvl->name;
    if (scratch.empty()) throw Error("lower: PIPELINE target without a scratch level");
    next_tmp = (int)cls.info.size() * 2;
  }

  std::string tmp_reg() { return strprintf("r%d", next_tmp++); }

  void ins(Opcode op, isa::DataType dt, std::vector<std::string> operands,
           std::optional<std::string> level = {}, std::optional<uint64_t> size = {}) {
    Instruction i;
    i.opcode = op;
    i.dtype = dt;
    i.operands = std::move(operands);
    i.level = std::move(level);
    i.size_bytes = size;
    prog.items.emplace_back(std::move(i));
  }

  // DMA transfer when the target has a dma level, otherwise nothing (data
  // already lives in the scratch level).
  void bulk(Opcode op, const OpndInfo& oi, uint64_t bytes) {
    if (dma.empty() || bytes == 0) return;
    ins(op, oi.op->dtype, {oi.reg, oi.addr}, dma, bytes);
  }

  struct LoopCtl {
    std::string label;
    std::string reg;
  };

  LoopCtl loop_begin(uint64_t trip) {
    prog.items.emplace_back(isa::LoopBegin{trip});
    LoopCtl ctl{strprintf("L%d", next_label++), tmp_reg()};
    prog.items.emplace_back(isa::Label{ctl.label});
    return ctl;
  }

  void loop_end(const LoopCtl& ctl) {
    // decrement-to-zero loop control, carried as ordinary instructions
    ins(Opcode::SUB, isa::DataType::i32, {ctl.reg, ctl.reg, "1"});
    ins(Opcode::JNZ, isa::DataType::i32, {ctl.reg, ctl.label});
    prog.items.emplace_back(isa::LoopEnd{});
  }

  bool is_accum_row_out(const OpndInfo& oi) const {
    return oi.op->role == Role::out && oi.accumulated && !oi.uses_inner && oi.uses_outer;
  }
  bool is_accum_scalar_out(const OpndInfo& oi) const {
    return oi.op->role == Role::out && oi.accumulated && oi.resident && !oi.op->indirect;
  }

  uint64_t sigma_trip(uint64_t n) const {
    double s = k.selectivity.value_or(1.0);
    uint64_t trip = (uint64_t)std::ceil(s * (double)n);
    return std::min(trip, n);
  }

  void body_op(const BodyOp& op) {
    std::vector<std::string> regs{cls.find(op.output).reg};
    for (const std::string& in : op.inputs) regs.push_back(cls.find(in).reg);
    ins(to_opcode(op.kind), op.dtype, std::move(regs));
  }

  // One iteration-point body for either the unconditional ops or the
  // sigma-scaled conditional ops.
  void point_body(bool conditional) {
    bool load_indirect = false, store_indirect = false;
    for (uint32_t idx : k.exec_order) {
      const BodyOp& op = k.ops[idx];
      if (op.conditional != conditional) continue;
      for (const std::string& in : op.inputs)
        if (cls.find(in).op->indirect) load_indirect = true;
      if (cls.find(op.output).op->indirect) store_indirect = true;
    }
    // per-point word loads from scratch
    for (const OpndInfo& oi : cls.info) {
      if (oi.op->role != Role::in || !oi.uses_inner) continue;
      bool used = false;
      for (uint32_t idx : k.exec_order) {
        const BodyOp& op = k.ops[idx];
        if (op.conditional != conditional) continue;
        used |= std::find(op.inputs.begin(), op.inputs.end(), oi.op->id) != op.inputs.end();
      }
      if (used) ins(Opcode::LOAD, oi.op->dtype, {oi.reg, oi.addr}, scratch);
    }
    for (const OpndInfo& oi : cls.info)
      if (oi.op->indirect && load_indirect && oi.read)
        ins(Opcode::LOAD, oi.op->dtype, {oi.reg, oi.addr}, scratch);
    for (uint32_t idx : k.exec_order) {
      const BodyOp& op = k.ops[idx];
      if (op.conditional == conditional) body_op(op);
    }
    for (const OpndInfo& oi : cls.info) {
      if (oi.op->role != Role::out || !oi.written) continue;
      bool written_here = false;
      for (uint32_t idx : k.exec_order) {
        const BodyOp& op = k.ops[idx];
        if (op.conditional == conditional && op.output == oi.op->id) written_here = true;
      }
      if (!written_here) continue;
      if (oi.op->indirect) {
        if (store_indirect) ins(Opcode::STORE, oi.op->dtype, {oi.reg, oi.addr}, scratch);
      } else if (oi.uses_inner) {
        ins(Opcode::STORE, oi.op->dtype, {oi.reg, oi.addr}, scratch);
      }
    }
  }

  void row_block(uint64_t inner_w, bool first_tile) {
    // row-invariant input words
    for (const OpndInfo& oi : cls.info)
      if (oi.op->role == Role::in && !oi.uses_inner && oi.uses_outer)
        ins(Opcode::LOAD, oi.op->dtype, {oi.reg, oi.addr}, scratch);
    for (const OpndInfo& oi : cls.info) {
      if (!is_accum_row_out(oi)) continue;
      if (first_tile) ins(Opcode::MOVI, oi.op->dtype, {oi.reg, "0"});
      else ins(Opcode::LOAD, oi.op->dtype, {oi.reg, oi.addr}, scratch);
    }
    LoopCtl inner = loop_begin(inner_w);
    point_body(false);
    loop_end(inner);
    if (cls.has_cond && sigma_trip(inner_w) > 0) {
      LoopCtl taken = loop_begin(sigma_trip(inner_w));
      point_body(true);
      loop_end(taken);
    }
    for (const OpndInfo& oi : cls.info)
      if (is_accum_row_out(oi)) ins(Opcode::STORE, oi.op->dtype, {oi.reg, oi.addr}, scratch);
  }

  void chunk_block(uint64_t rows, uint64_t inner_w, bool first_tile) {
    for (const OpndInfo& oi : cls.info) {
      if (oi.resident) continue;
      if (oi.op->role != Role::in) continue;
      if (oi.uses_inner && oi.uses_outer)
        bulk(Opcode::LOAD, oi, rows * inner_w * oi.width);
      else if (!oi.uses_inner && oi.uses_outer)
        bulk(Opcode::LOAD, oi, rows * oi.width);
    }
    if (!first_tile)
      for (const OpndInfo& oi : cls.info)
        if (is_accum_row_out(oi)) bulk(Opcode::LOAD, oi, rows * oi.width);
    if (rows > 1) {
      LoopCtl rc = loop_begin(rows);
      row_block(inner_w, first_tile);
      loop_end(rc);
    } else {
      row_block(inner_w, first_tile);
    }
    for (const OpndInfo& oi : cls.info)
      if (oi.op->role == Role::out && !oi.resident && !oi.uses_inner && oi.uses_outer)
        bulk(Opcode::STORE, oi, rows * oi.width);
  }

  void tile_block(uint64_t inner_w, bool first_tile) {
    for (const OpndInfo& oi : cls.info)
      if (oi.op->role == Role::in && oi.uses_inner && !oi.uses_outer && !oi.resident)
        bulk(Opcode::LOAD, oi, inner_w * oi.width);
    uint64_t full_chunks = plan.n_chunks - (plan.chunk_rem ? 1 : 0);
    if (full_chunks >= 1) {
      if (full_chunks > 1) {
        LoopCtl cl = loop_begin(full_chunks);
        chunk_block(plan.rows_per_chunk, inner_w, first_tile);
        loop_end(cl);
      } else {
        chunk_block(plan.rows_per_chunk, inner_w, first_tile);
      }
    }
    if (plan.chunk_rem) chunk_block(plan.chunk_rem, inner_w, first_tile);
    for (const OpndInfo& oi : cls.info)
      if (oi.op->role == Role::out && oi.uses_inner && !oi.uses_outer && !oi.resident)
        bulk(Opcode::STORE, oi, inner_w * oi.width);
  }

  isa::Program run() {
    // resident operands: one-time transfers and accumulator init
    for (const OpndInfo& oi : cls.info) {
      if (!oi.resident) continue;
      uint64_t bytes = oi.op->elem_count() * oi.width;
      if (oi.op->role == Role::in || (oi.op->indirect && oi.read))
        bulk(Opcode::LOAD, oi, bytes);
      if (is_accum_scalar_out(oi)) ins(Opcode::MOVI, oi.op->dtype, {oi.reg, "0"});
    }
    if (plan.n_tiles == 1) {
      tile_block(plan.inner_extent, true);
    } else {
      tile_block(plan.tile_width, true);
      uint64_t mid = plan.n_tiles - 1 - (plan.tile_rem ? 1 : 0);
      if (mid >= 1) {
        if (mid > 1) {
          LoopCtl tl = loop_begin(mid);
          tile_block(plan.tile_width, false);
          loop_end(tl);
        } else {
          tile_block(plan.tile_width, false);
        }
      }
      if (plan.tile_rem) tile_block(plan.tile_rem, false);
    }
    for (const OpndInfo& oi : cls.info) {
      if (!oi.resident || oi.op->role != Role::out) continue;
      uint64_t bytes = oi.op->elem_count() * oi.width;
      if (is_accum_scalar_out(oi)) ins(Opcode::STORE, oi.op->dtype, {oi.reg, oi.addr}, scratch);
      bulk(Opcode::STORE, oi, bytes);
    }
    return std::move(prog);
  }
};

// ---------------------------------------------------------------------------
// VECTOR_PROC lowering: straight-line located bank/GRF code, one vector
// stream, lane-wide chunks, operands alternating bank parity.

struct VecLower {
  const KernelIr& k;
  const target::TargetSpec& t;
  Subspace s;
  Classified cls;
  uint64_t lanes;
  uint64_t row_bytes;
  std::string bank;
  isa::Program prog;
  std::vector<std::vector<uint64_t>> strides;  // per operand, per shape dim
  std::vector<uint32_t> banks;                 // per operand

  VecLower(const KernelIr& k_, const target::TargetSpec& t_, const Subspace& s_)
      : k(k_), t(t_), s(s_), cls(classify(k_)) {
    if (!t.vector_proc) throw Error("lower: VECTOR_PROC target without vector block");
    lanes = t.vector_proc->lanes;
    const target::MemLevelSpec* b = t.bank_level();
    if (!b) throw Error("lower: VECTOR_PROC target without a bank level");
    if (!b->row_bytes) throw Error("lower: bank level needs row_bytes for location math");
    bank = b->name;
    row_bytes = *b->row_bytes;
    for (const OpndInfo& oi : cls.info)
      if (!t.supports_dtype(oi.op->dtype))
        throw Error(strprintf("lower: dtype %s unsupported by target '%s'",
                              isa::to_string(oi.op->dtype), t.name.c_str()));
    uint32_t idx = 0;
    for (const OpndInfo& oi : cls.info) {
      banks.push_back(idx++ % 2);  // operands alternate even/odd bank
      std::vector<uint64_t> st(oi.op->shape.size(), 1);
      for (size_t d = st.size(); d-- > 1;)
        st[d - 1] = st[d] * oi.op->shape[d];
      strides.push_back(std::move(st));
    }
  }

  isa::Location loc_of(size_t opnd, const std::vector<uint64_t>& coords) const {
    const OpndInfo& oi = cls.info[opnd];
    uint64_t elem = 0;
    for (size_t d = 0; d < oi.op->index_vars.size(); d++) {
      // map operand dim -> loop index
      for (size_t l = 0; l < k.loops.size(); l++) {
        if (k.loops[l].var == oi.op->index_vars[d]) {
          uint64_t origin = l < s.origin.size() ? s.origin[l] : 0;
          elem += (coords[l] + origin) * strides[opnd][d];
          break;
        }
      }
    }
    uint64_t byte = elem * cls.info[opnd].width;
    isa::Location L;
    L.bank = banks[opnd];
    L.row = (uint32_t)(byte / row_bytes);
    L.col = (uint32_t)((byte % row_bytes) / std::max<uint64_t>(1, lanes * cls.info[opnd].width));
    return L;
  }

  void ins(Opcode op, isa::DataType dt, std::vector<std::string> operands,
           std::optional<isa::Location> loc = {}, bool banked = false) {
    Instruction i;
    i.opcode = op;
    i.dtype = dt;
    i.operands = std::move(operands);
    if (banked) i.level = bank;
    i.location = loc;
    prog.items.emplace_back(std::move(i));
  }

  isa::Program run() {
    uint64_t outer = 1;
    for (size_t d = 0; d + 1 < s.extents.size(); d++) outer *= s.extents[d];
    uint64_t inner = s.extents.back();
    uint64_t chunks = ceil_div(inner, lanes);
    uint64_t est = outer * chunks * (k.ops.size() + k.operands.size() + 2);
    if (est > (uint64_t(1) << 22))
      throw Error("lower: subspace too large for straight-line VECTOR_PROC code");

    double sigma = k.selectivity.value_or(1.0);
    uint64_t cond_chunks = std::min<uint64_t>(
        chunks, (uint64_t)std::ceil(sigma * (double)chunks));

    for (const OpndInfo& oi : cls.info)
      if (is_scalar_out(oi)) ins(Opcode::MOVI, oi.op->dtype, {oi.reg, "0"});

    std::vector<uint64_t> coords(k.loops.size(), 0);
    for (uint64_t r = 0; r < outer; r++) {
      // decompose row index into outer coordinates
      uint64_t rem = r;
      for (size_t d = s.extents.size() - 1; d-- > 0;) {
        coords[d] = rem % s.extents[d];
        rem /= s.extents[d];
      }
      for (size_t i = 0; i < cls.info.size(); i++) {
        const OpndInfo& oi = cls.info[i];
        if (is_row_accum(oi)) ins(Opcode::MOVI, oi.op->dtype, {oi.reg, "0"});
        else if (oi.op->role == Role::in && !oi.uses_inner && oi.uses_outer) {
          coords.back() = 0;
          ins(Opcode::LOAD, oi.op->dtype, {oi.reg, oi.addr}, loc_of(i, coords), true);
        }
      }
      for (uint64_t ch = 0; ch < chunks; ch++) {
        coords.back() = ch * lanes;
        emit_chunk(coords, false);
        if (cls.has_cond && ch < cond_chunks) emit_chunk(coords, true);
      }
      for (size_t i = 0; i < cls.info.size(); i++) {
        const OpndInfo& oi = cls.info[i];
        if (!is_row_accum(oi)) continue;
        coords.back() = 0;
        ins(Opcode::STORE, oi.op->dtype, {oi.reg, oi.addr}, loc_of(i, coords), true);
      }
    }
    for (size_t i = 0; i < cls.info.size(); i++) {
      const OpndInfo& oi = cls.info[i];
      if (is_scalar_out(oi))
        ins(Opcode::STORE, oi.op->dtype, {oi.reg, oi.addr},
            isa::Location{banks[i], 0, 0}, true);
    }
    return std::move(prog);
  }

  bool is_row_accum(const OpndInfo& oi) const {
    return oi.op->role == Role::out && oi.accumulated && !oi.uses_inner && oi.uses_outer;
  }
  bool is_scalar_out(const OpndInfo& oi) const {
    return oi.op->role == Role::out && oi.resident && oi.accumulated && !oi.op->indirect;
  }

  void emit_chunk(const std::vector<uint64_t>& coords, bool conditional) {
    for (size_t i = 0; i < cls.info.size(); i++) {
      const OpndInfo& oi = cls.info[i];
      if (oi.op->role != Role::in || !oi.uses_inner) continue;
      bool used = false;
      for (uint32_t idx : k.exec_order) {
        const BodyOp& op = k.ops[idx];
        if (op.conditional != conditional) continue;
        used |= std::find(op.inputs.begin(), op.inputs.end(), oi.op->id) != op.inputs.end();
      }
      if (used) ins(Opcode::LOAD, oi.op->dtype, {oi.reg, oi.addr}, loc_of(i, coords), true);
    }
    for (uint32_t idx : k.exec_order) {
      const BodyOp& op = k.ops[idx];
      if (op.conditional != conditional) continue;
      std::vector<std::string> regs{cls.find(op.output).reg};
      for (const std::string& in : op.inputs) regs.push_back(cls.find(in).reg);
      ins(to_opcode(op.kind), op.dtype, std::move(regs));
    }
    for (size_t i = 0; i < cls.info.size(); i++) {
      const OpndInfo& oi = cls.info[i];
      if (oi.op->role != Role::out || !oi.uses_inner || !oi.written) continue;
      bool written_here = false;
      for (uint32_t idx : k.exec_order) {
        const BodyOp& op = k.ops[idx];
        if (op.conditional == conditional && op.output == oi.op->id) written_here = true;
      }
      if (written_here) ins(Opcode::STORE, oi.op->dtype, {oi.reg, oi.addr}, loc_of(i, coords), true);
    }
  }
};

}  // namespace

isa::Program lower_to_llvcnm(const KernelIr& k, const target::TargetSpec& t,
                             const Subspace& s, const LoweringOptions& opt) {
  if (s.extents.size() != k.loops.size())
    throw Error(strprintf("lower: subspace rank %zu != kernel loop count %zu",
                          s.extents.size(), k.loops.size()));
  if (t.mode == target::EngineMode::VECTOR_PROC) {
    VecLower v(k, t, s);
    return v.run();
  }
  PipeLower p(k, t, s, opt);
  return p.run();
}

}  // namespace cnm::ir
