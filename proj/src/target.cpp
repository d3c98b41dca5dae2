#include "cnm/target.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace cnm::target {

const char* to_string(ContextClass c) {
  switch (c) {
    case ContextClass::Default: return "default";
    case ContextClass::Magnitude: return "mag";
    case ContextClass::SameRow: return "same_row";
    case ContextClass::RowSwitch: return "row_switch";
    case ContextClass::BankParitySwitch: return "bank_parity_switch";
  }
  return "default";
}

// ---------------------------------------------------------------------------
// LatencyLut

namespace {
uint32_t lut_key(isa::Opcode op, isa::DataType dt) {
  return (static_cast<uint32_t>(op) << 8) | static_cast<uint32_t>(dt);
}
}  // namespace

void LatencyLut::build_index() {
  index_.clear();
  for (const LutEntry& e : entries) {
    Resolved& r = index_[lut_key(e.op, e.dtype)];
    switch (e.cls) {
      case ContextClass::Default:
        r.def = e.cycles;
        r.has_def = true;
        break;
      case ContextClass::Magnitude:
        r.buckets.push_back(e);
        break;
      case ContextClass::SameRow:
        r.same_row = e.cycles;
        r.has_same_row = true;
        break;
      case ContextClass::RowSwitch:
        r.row_switch = e.cycles;
        r.has_row_switch = true;
        break;
      case ContextClass::BankParitySwitch:
        r.parity_switch = e.cycles;
        r.has_parity_switch = true;
        break;
    }
  }
}

bool LatencyLut::supports(isa::Opcode op, isa::DataType dt) const {
  auto it = index_.find(lut_key(op, dt));
  return it != index_.end() && it->second.has_def;
}

uint64_t LatencyLut::lookup(isa::Opcode op, isa::DataType dt,
                            const LatencyContext& ctx) const {
  auto it = index_.find(lut_key(op, dt));
  if (it == index_.end() || !it->second.has_def)
    throw Error(strprintf("lut: unsupported %s.%s", isa::to_string(op), isa::to_string(dt)));
  const Resolved& r = it->second;
  if (ctx.transition) {
    switch (*ctx.transition) {
      case ContextClass::SameRow:
        if (r.has_same_row) return r.same_row;
        break;
      case ContextClass::RowSwitch:
        if (r.has_row_switch) return r.row_switch;
        break;
      case ContextClass::BankParitySwitch:
        if (r.has_parity_switch) return r.parity_switch;
        break;
      default:
        break;
    }
  }
  if (ctx.value_magnitude) {
    for (const LutEntry& b : r.buckets)
      if (*ctx.value_magnitude >= b.mag_lo && *ctx.value_magnitude < b.mag_hi)
        return b.cycles;
  }
  return r.def;
}

uint64_t lookup_latency(const LatencyLut& lut, const isa::Instruction& ins,
                        const LatencyContext& ctx) {
  return lut.lookup(ins.opcode, ins.dtype, ctx);
}

// ---------------------------------------------------------------------------
// TargetSpec

const MemLevelSpec* TargetSpec::find_level(std::string_view name) const {
  for (const MemLevelSpec& m : memory)
    if (m.name == name) return &m;
  return nullptr;
}

bool TargetSpec::supports_dtype(isa::DataType dt) const {
  return std::find(dtypes.begin(), dtypes.end(), dt) != dtypes.end();
}

const MemLevelSpec* TargetSpec::dma_level() const {
  for (const MemLevelSpec& m : memory)
    if (m.access == MemAccess::dma) return &m;
  return nullptr;
}

const MemLevelSpec* TargetSpec::scratch_level() const {
  for (const MemLevelSpec& m : memory)
    if (m.access == MemAccess::pipeline) return &m;
  return nullptr;
}

const MemLevelSpec* TargetSpec::bank_level() const {
  for (const MemLevelSpec& m : memory)
    if (m.access == MemAccess::bank) return &m;
  return nullptr;
}

void validate_target(TargetSpec& t) {
  if (t.name.empty()) throw Error("target: missing name");
  if (!(t.clock_mhz > 0)) throw Error("target: clock_mhz must be positive");
  if (t.hierarchy.empty()) throw Error("target: hierarchy must be non-empty");
  for (const HierarchyLevel& h : t.hierarchy)
    if (h.units == 0) throw Error(strprintf("target: level '%s' has zero units", h.name.c_str()));
  if (t.dtypes.empty()) throw Error("target: no supported dtypes");
  if (t.mode == EngineMode::PIPELINE) {
    if (!t.pipeline) throw Error("target: mode PIPELINE requires a pipeline block");
    if (t.pipeline->stages < 1 || t.pipeline->min_issue_distance < 1 ||
        t.pipeline->hw_threads < 1)
      throw Error("target: pipeline parameters must be >= 1");
  } else {
    if (!t.vector_proc) throw Error("target: mode VECTOR_PROC requires a vector block");
    if (t.vector_proc->lanes < 1) throw Error("target: vector lanes must be >= 1");
  }
  if (t.memory.empty()) throw Error("target: no memory levels");
  for (const MemLevelSpec& m : t.memory) {
    if (m.capacity_bytes == 0)
      throw Error(strprintf("target: memory level '%s' has zero capacity", m.name.c_str()));
    if (m.access == MemAccess::dma) {
      if (!m.dma) throw Error(strprintf("target: dma level '%s' missing dma params", m.name.c_str()));
      if (m.dma->channels < 1 || m.dma->bytes_per_cycle < 1)
        throw Error(strprintf("target: dma level '%s' params must be >= 1", m.name.c_str()));
    } else {
      if (!m.word_access_cycles)
        throw Error(strprintf("target: level '%s' missing word_access_cycles", m.name.c_str()));
      if (*m.word_access_cycles < 1)
        throw Error(strprintf("target: level '%s' word_access_cycles must be >= 1", m.name.c_str()));
    }
  }
  for (const LutEntry& e : t.lut.entries) {
    if (e.cycles < 1) throw Error("target: lut cycles must be >= 1");
    if (!t.supports_dtype(e.dtype))
      throw Error(strprintf("target: lut entry %s.%s uses unsupported dtype",
                            isa::to_string(e.op), isa::to_string(e.dtype)));
    if (e.cls == ContextClass::Magnitude && e.mag_hi <= e.mag_lo)
      throw Error("target: lut magnitude bucket is empty");
  }
  t.lut.build_index();
  // Every supported (opcode, dtype) needs at least a default entry.
  for (isa::DataType dt : t.dtypes)
    for (int op = 0; op < 19; op++)
      if (!t.lut.supports(static_cast<isa::Opcode>(op), dt))
        throw Error(strprintf("target: lut missing default for %s.%s",
                              isa::to_string(static_cast<isa::Opcode>(op)), isa::to_string(dt)));
  if (t.mode == EngineMode::PIPELINE && !t.dma_level() && !t.scratch_level())
    throw Error("target: PIPELINE mode needs at least one pipeline-access level");
}

// ---------------------------------------------------------------------------
// .cfg parsing

namespace {

struct CfgLine {
  std::string_view text;
  int lineno;
};

// Block-structured key/value reader over pre-scanned lines.
class CfgReader {
 public:
  explicit CfgReader(std::string_view text) {
    LineScanner scan(text, '#');
    std::string_view line;
    int lineno;
    while (scan.next(line, lineno)) lines_.push_back({line, lineno});
  }

  bool done() const { return pos_ >= lines_.size(); }
  const CfgLine& peek() const { return lines_[pos_]; }
  CfgLine take() { return lines_[pos_++]; }

  [[noreturn]] void fail(const CfgLine& l, const std::string& msg) const {
    throw Error(strprintf("cfg:%d: %s", l.lineno, msg.c_str()));
  }

 private:
  std::vector<CfgLine> lines_;
  size_t pos_ = 0;
};

uint64_t parse_size_value(std::string_view tok, std::string_view what) {
  uint64_t mult = 1;
  auto ends_with = [&](std::string_view suf) {
    return tok.size() > suf.size() &&
           tok.substr(tok.size() - suf.size()) == suf;
  };
  if (ends_with("KiB")) { mult = 1024; tok.remove_suffix(3); }
  else if (ends_with("MiB")) { mult = 1024ull * 1024; tok.remove_suffix(3); }
  else if (ends_with("GiB")) { mult = 1024ull * 1024 * 1024; tok.remove_suffix(3); }
  else if (ends_with("KB")) { mult = 1000; tok.remove_suffix(2); }
  else if (ends_with("MB")) { mult = 1000000; tok.remove_suffix(2); }
  else if (ends_with("GB")) { mult = 1000000000; tok.remove_suffix(2); }
  return mul_checked(parse_u64(tok, what), mult, "size value");
}

MemLevelSpec parse_mem_level(CfgReader& rd, std::string name) {
  MemLevelSpec m;
  m.name = std::move(name);
  while (!rd.done()) {
    CfgLine l = rd.take();
    if (l.text == "}") return m;
    auto toks = split_ws(l.text);
    std::string_view key = toks[0];
    if (toks.size() != 2) rd.fail(l, strprintf("expected '<key> <value>' in level block"));
    if (key == "capacity") m.capacity_bytes = parse_size_value(toks[1], "capacity");
    else if (key == "access") {
      if (toks[1] == "pipeline") m.access = MemAccess::pipeline;
      else if (toks[1] == "dma") m.access = MemAccess::dma;
      else if (toks[1] == "bank") m.access = MemAccess::bank;
      else rd.fail(l, strprintf("unknown access kind '%.*s'", (int)toks[1].size(), toks[1].data()));
    } else if (key == "word_access_cycles") m.word_access_cycles = parse_u64(toks[1], key);
    else if (key == "row_bytes") m.row_bytes = parse_size_value(toks[1], key);
    else if (key == "dma_channels") {
      if (!m.dma) m.dma = DmaParams{};
      m.dma->channels = (uint32_t)parse_u64(toks[1], key);
    } else if (key == "dma_setup_cycles") {
      if (!m.dma) m.dma = DmaParams{};
      m.dma->setup_cycles = parse_u64(toks[1], key);
    } else if (key == "dma_bytes_per_cycle") {
      if (!m.dma) m.dma = DmaParams{};
      m.dma->bytes_per_cycle = parse_u64(toks[1], key);
    } else {
      rd.fail(l, strprintf("unknown key '%.*s' in memory level", (int)key.size(), key.data()));
    }
  }
  throw Error("cfg: unterminated memory level block");
}

LutEntry parse_lut_entry(CfgReader& rd, const CfgLine& l) {
  auto toks = split_ws(l.text);
  if (toks.size() < 4 || toks.size() > 5)
    rd.fail(l, "lut entry: expected '<OP> <dtype> <ctx> <cycles> [placeholder]'");
  LutEntry e;
  auto op = isa::parse_opcode(toks[0]);
  if (!op) rd.fail(l, strprintf("unknown opcode '%.*s'", (int)toks[0].size(), toks[0].data()));
  e.op = *op;
  auto dt = isa::parse_dtype(toks[1]);
  if (!dt) rd.fail(l, strprintf("unknown dtype '%.*s'", (int)toks[1].size(), toks[1].data()));
  e.dtype = *dt;
  std::string_view ctx = toks[2];
  if (ctx == "default") e.cls = ContextClass::Default;
  else if (ctx == "same_row") e.cls = ContextClass::SameRow;
  else if (ctx == "row_switch") e.cls = ContextClass::RowSwitch;
  else if (ctx == "bank_parity_switch") e.cls = ContextClass::BankParitySwitch;
  else if (ctx.substr(0, 4) == "mag:") {
    auto parts = split_char(ctx.substr(4), ':');
    if (parts.size() != 2) rd.fail(l, "magnitude bucket: expected mag:<lo>:<hi>");
    e.cls = ContextClass::Magnitude;
    e.mag_lo = parse_u64(parts[0], "mag lo");
    e.mag_hi = parse_u64(parts[1], "mag hi");
  } else {
    rd.fail(l, strprintf("unknown context class '%.*s'", (int)ctx.size(), ctx.data()));
  }
  e.cycles = parse_u64(toks[3], "cycles");
  if (toks.size() == 5) {
    if (toks[4] != "placeholder") rd.fail(l, "trailing token must be 'placeholder'");
    e.placeholder = true;
  }
  return e;
}

}  // namespace

TargetSpec load_target(std::string_view text) {
  TargetSpec t;
  CfgReader rd(text);
  bool saw_clock = false;
  while (!rd.done()) {
    CfgLine l = rd.take();
    auto toks = split_ws(l.text);
    std::string_view key = toks[0];
    if (key == "name" && toks.size() == 2) {
      t.name = std::string(toks[1]);
    } else if (key == "clock_mhz" && toks.size() == 2) {
      t.clock_mhz = parse_f64(toks[1], key);
      saw_clock = true;
    } else if (key == "mode" && toks.size() == 2) {
      if (toks[1] == "PIPELINE") t.mode = EngineMode::PIPELINE;
      else if (toks[1] == "VECTOR_PROC") t.mode = EngineMode::VECTOR_PROC;
      else rd.fail(l, strprintf("unknown mode '%.*s'", (int)toks[1].size(), toks[1].data()));
    } else if (key == "dtypes") {
      for (size_t i = 1; i < toks.size(); i++) {
        auto dt = isa::parse_dtype(toks[i]);
        if (!dt) rd.fail(l, strprintf("unknown dtype '%.*s'", (int)toks[i].size(), toks[i].data()));
        t.dtypes.push_back(*dt);
      }
    } else if (l.text == "pipeline {") {
      PipelineParams p;
      while (!rd.done()) {
        CfgLine b = rd.take();
        if (b.text == "}") break;
        auto bt = split_ws(b.text);
        if (bt.size() != 2) rd.fail(b, "expected '<key> <value>'");
        if (bt[0] == "stages") p.stages = (uint32_t)parse_u64(bt[1], bt[0]);
        else if (bt[0] == "min_issue_distance") p.min_issue_distance = (uint32_t)parse_u64(bt[1], bt[0]);
        else if (bt[0] == "hw_threads") p.hw_threads = (uint32_t)parse_u64(bt[1], bt[0]);
        else rd.fail(b, strprintf("unknown key '%.*s' in pipeline", (int)bt[0].size(), bt[0].data()));
      }
      t.pipeline = p;
    } else if (l.text == "vector {") {
      VectorParams v;
      while (!rd.done()) {
        CfgLine b = rd.take();
        if (b.text == "}") break;
        auto bt = split_ws(b.text);
        if (bt.size() != 2) rd.fail(b, "expected '<key> <value>'");
        if (bt[0] == "lanes") v.lanes = (uint32_t)parse_u64(bt[1], bt[0]);
        else rd.fail(b, strprintf("unknown key '%.*s' in vector", (int)bt[0].size(), bt[0].data()));
      }
      t.vector_proc = v;
    } else if (l.text == "hierarchy {") {
      while (!rd.done()) {
        CfgLine b = rd.take();
        if (b.text == "}") break;
        auto bt = split_ws(b.text);
        if (bt.size() != 4 || bt[0] != "level")
          rd.fail(b, "expected 'level <name> <units> <accum|noaccum>'");
        HierarchyLevel h;
        h.name = std::string(bt[1]);
        h.units = parse_u64(bt[2], "units");
        if (bt[3] == "accum") h.can_accumulate = true;
        else if (bt[3] == "noaccum") h.can_accumulate = false;
        else rd.fail(b, "expected 'accum' or 'noaccum'");
        t.hierarchy.push_back(std::move(h));
      }
    } else if (l.text == "memory {") {
      while (!rd.done()) {
        CfgLine b = rd.take();
        if (b.text == "}") break;
        auto bt = split_ws(b.text);
        if (bt.size() != 3 || bt[0] != "level" || bt[2] != "{")
          rd.fail(b, "expected 'level <name> {'");
        t.memory.push_back(parse_mem_level(rd, std::string(bt[1])));
      }
    } else if (l.text == "lut {") {
      while (!rd.done()) {
        CfgLine b = rd.take();
        if (b.text == "}") break;
        t.lut.entries.push_back(parse_lut_entry(rd, b));
      }
    } else {
      rd.fail(l, strprintf("unknown key '%.*s'", (int)key.size(), key.data()));
    }
  }
  if (!saw_clock) throw Error("cfg: missing clock_mhz");
  validate_target(t);
  return t;
}

// ---------------------------------------------------------------------------
// emit_target (canonical; load_target(emit_target(t)) == t)

std::string emit_target(const TargetSpec& t) {
  std::string out;
  out += strprintf("name %s\n", t.name.c_str());
  out += strprintf("clock_mhz %.17g\n", t.clock_mhz);
  out += strprintf("mode %s\n", t.mode == EngineMode::PIPELINE ? "PIPELINE" : "VECTOR_PROC");
  out += "dtypes";
  for (isa::DataType dt : t.dtypes) out += strprintf(" %s", isa::to_string(dt));
  out += '\n';
  if (t.pipeline) {
    out += "pipeline {\n";
    out += strprintf("  stages %u\n", t.pipeline->stages);
    out += strprintf("  min_issue_distance %u\n", t.pipeline->min_issue_distance);
    out += strprintf("  hw_threads %u\n", t.pipeline->hw_threads);
    out += "}\n";
  }
  if (t.vector_proc) {
    out += "vector {\n";
    out += strprintf("  lanes %u\n", t.vector_proc->lanes);
    out += "}\n";
  }
  out += "hierarchy {\n";
  for (const HierarchyLevel& h : t.hierarchy)
    out += strprintf("  level %s %llu %s\n", h.name.c_str(), (unsigned long long)h.units,
                     h.can_accumulate ? "accum" : "noaccum");
  out += "}\n";
  out += "memory {\n";
  for (const MemLevelSpec& m : t.memory) {
    out += strprintf("  level %s {\n", m.name.c_str());
    out += strprintf("    capacity %llu\n", (unsigned long long)m.capacity_bytes);
    const char* acc = m.access == MemAccess::pipeline ? "pipeline"
                      : m.access == MemAccess::dma    ? "dma"
                                                      : "bank";
    out += strprintf("    access %s\n", acc);
    if (m.word_access_cycles)
      out += strprintf("    word_access_cycles %llu\n", (unsigned long long)*m.word_access_cycles);
    if (m.row_bytes)
      out += strprintf("    row_bytes %llu\n", (unsigned long long)*m.row_bytes);
    if (m.dma) {
      out += strprintf("    dma_channels %u\n", m.dma->channels);
      out += strprintf("    dma_setup_cycles %llu\n", (unsigned long long)m.dma->setup_cycles);
      out += strprintf("    dma_bytes_per_cycle %llu\n", (unsigned long long)m.dma->bytes_per_cycle);
    }
    out += "  }\n";
  }
  out += "}\n";
  out += "lut {\n";
  for (const LutEntry& e : t.lut.entries) {
    std::string ctx;
    if (e.cls == ContextClass::Magnitude)
      ctx = strprintf("mag:%llu:%llu", (unsigned long long)e.mag_lo, (unsigned long long)e.mag_hi);
    else
      ctx = to_string(e.cls);
    out += strprintf("  %s %s %s %llu%s\n", isa::to_string(e.op), isa::to_string(e.dtype),
                     ctx.c_str(), (unsigned long long)e.cycles,
                     e.placeholder ? " placeholder" : "");
  }
  out += "}\n";
  return out;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

void add_default(LatencyLut& lut, isa::Opcode op, isa::DataType dt, uint64_t cycles,
                 bool placeholder) {
  lut.entries.push_back({op, dt, ContextClass::Default, 0, 0, cycles, placeholder});
}

TargetSpec build_upmem() {
  TargetSpec t;
  t.name = "upmem";
  t.clock_mhz = 350.0;  // per-DPU clock
  t.mode = EngineMode::PIPELINE;
  t.dtypes = {isa::DataType::i8, isa::DataType::i16, isa::DataType::i32,
              isa::DataType::i64, isa::DataType::f32, isa::DataType::f64};
  t.hierarchy = {{"rank", 32, false}, {"dpu", 64, false}, {"thread", 24, true}};
  t.pipeline = PipelineParams{14, 11, 24};
  MemLevelSpec mram;
  mram.name = "mram";
  mram.capacity_bytes = 64ull * 1024 * 1024;
  mram.access = MemAccess::dma;
  mram.dma = DmaParams{1, 32, 8};  // placeholder transfer model parameters
  MemLevelSpec wram;
  wram.name = "wram";
  wram.capacity_bytes = 64 * 1024;
  wram.access = MemAccess::pipeline;
  wram.word_access_cycles = 1;
  MemLevelSpec reg;
  reg.name = "reg";
  reg.capacity_bytes = 2048;
  reg.access = MemAccess::pipeline;
  reg.word_access_cycles = 1;
  t.memory = {mram, wram, reg};

  // Integer ALU ops retire in a single pipeline pass; multiply/divide are
  // software emulated and value dependent. MUL.i32 112 is a published
  // constant; the remaining latencies are profiling placeholders.
  for (isa::DataType dt : t.dtypes) {
    bool f = dt == isa::DataType::f32 || dt == isa::DataType::f64;
    bool wide = dt == isa::DataType::i64 || dt == isa::DataType::f64;
    using O = isa::Opcode;
    add_default(t.lut, O::LOAD, dt, 1, true);
    add_default(t.lut, O::STORE, dt, 1, true);
    add_default(t.lut, O::COPY, dt, 1, true);
    add_default(t.lut, O::MOVI, dt, 1, true);
    add_default(t.lut, O::ADD, dt, f ? (wide ? 112 : 56) : 1, true);
    add_default(t.lut, O::SUB, dt, f ? (wide ? 112 : 56) : 1, true);
    if (dt == isa::DataType::i32) {
      add_default(t.lut, O::MUL, dt, 112, false);  // average emulated CPI
      t.lut.entries.push_back({O::MUL, dt, ContextClass::Magnitude, 0, 32, 112, false});
      t.lut.entries.push_back({O::MUL, dt, ContextClass::Magnitude, 32, 65536, 140, true});
    } else {
      add_default(t.lut, O::MUL, dt, f ? (wide ? 248 : 124) : (wide ? 224 : 112), true);
    }
    add_default(t.lut, O::DIV, dt, f ? (wide ? 560 : 280) : (wide ? 504 : 252), true);
    add_default(t.lut, O::MAC, dt, f ? (wide ? 224 : 130) : (wide ? 225 : 113), true);
    add_default(t.lut, O::AND, dt, 1, true);
    add_default(t.lut, O::OR, dt, 1, true);
    add_default(t.lut, O::SHL, dt, 1, true);
    add_default(t.lut, O::SHR, dt, 1, true);
    add_default(t.lut, O::CMP, dt, f ? 24 : 1, true);
    add_default(t.lut, O::JUMP, dt, 1, true);
    add_default(t.lut, O::JNZ, dt, 1, true);
    add_default(t.lut, O::RED, dt, f ? 56 : 1, true);
    add_default(t.lut, O::NOP, dt, 1, true);
    add_default(t.lut, O::FENCE, dt, 1, true);
  }
  validate_target(t);
  return t;
}

TargetSpec build_hbmpim() {
  TargetSpec t;
  t.name = "hbmpim";
  t.clock_mhz = 300.0;  // placeholder PIM-mode clock
  t.mode = EngineMode::VECTOR_PROC;
  t.dtypes = {isa::DataType::f16};
  t.hierarchy = {{"channel", 16, false}, {"pimunit", 8, false}, {"fpu", 16, true}};
  t.vector_proc = VectorParams{16};
  MemLevelSpec bank;
  bank.name = "bank";
  bank.capacity_bytes = 6ull * 1024 * 1024 * 1024 / (16 * 16);  // 6 GiB over 256 banks
  bank.access = MemAccess::bank;
  bank.word_access_cycles = 2;
  bank.row_bytes = 8192;
  MemLevelSpec grf;
  grf.name = "grf";
  grf.capacity_bytes = 512;  // 16 entries x 256 bit
  grf.access = MemAccess::pipeline;
  grf.word_access_cycles = 1;
  t.memory = {bank, grf};

  // All placeholder latencies. Located bank accesses carry a transition
  // context; row switches cost a precharge+activate penalty.
  using O = isa::Opcode;
  isa::DataType dt = isa::DataType::f16;
  auto add_located = [&](O op, uint64_t base) {
    add_default(t.lut, op, dt, base, true);
    t.lut.entries.push_back({op, dt, ContextClass::SameRow, 0, 0, base, true});
    t.lut.entries.push_back({op, dt, ContextClass::BankParitySwitch, 0, 0, base + 2, true});
    t.lut.entries.push_back({op, dt, ContextClass::RowSwitch, 0, 0, base + 36, true});
  };
  add_located(O::LOAD, 4);
  add_located(O::STORE, 4);
  add_located(O::MAC, 3);
  add_located(O::ADD, 3);
  add_located(O::MUL, 3);
  add_default(t.lut, O::COPY, dt, 2, true);
  add_default(t.lut, O::MOVI, dt, 1, true);
  add_default(t.lut, O::SUB, dt, 3, true);
  add_default(t.lut, O::DIV, dt, 16, true);
  add_default(t.lut, O::AND, dt, 2, true);
  add_default(t.lut, O::OR, dt, 2, true);
  add_default(t.lut, O::SHL, dt, 2, true);
  add_default(t.lut, O::SHR, dt, 2, true);
  add_default(t.lut, O::CMP, dt, 2, true);
  add_default(t.lut, O::JUMP, dt, 2, true);
  add_default(t.lut, O::JNZ, dt, 2, true);
  add_default(t.lut, O::RED, dt, 3, true);
  add_default(t.lut, O::NOP, dt, 1, true);
  add_default(t.lut, O::FENCE, dt, 4, true);
  validate_target(t);
  return t;
}

}  // namespace

std::vector<std::string> preset_names() { return {"upmem", "hbmpim"}; }

TargetSpec preset(std::string_view name) {
  if (const char* dir = std::getenv("COMONM_TARGET_PATH"); dir && *dir) {
    std::string path = std::string(dir) + "/" + std::string(name) + ".cfg";
    std::ifstream f(path);
    if (f) {
      std::stringstream ss;
      ss << f.rdbuf();
      return load_target(ss.str());
    }
  }
  if (name == "upmem") return build_upmem();
  if (name == "hbmpim") return build_hbmpim();
  throw Error(strprintf("unknown preset '%.*s'", (int)name.size(), name.data()));
}

// ---------------------------------------------------------------------------
// Overrides

namespace {

[[noreturn]] void override_fail(const Override& o, const std::string& msg) {
  throw Error(strprintf("override %s=%s: %s", o.key.c_str(), o.value.c_str(), msg.c_str()));
}

void apply_one(TargetSpec& t, const Override& o) {
  auto path = split_char(o.key, '.');
  auto as_u64 = [&](std::string_view what) { return parse_size_value(o.value, what); };
  if (path.size() == 1) {
    if (path[0] == "name") { t.name = o.value; return; }
    if (path[0] == "clock_mhz") { t.clock_mhz = parse_f64(o.value, "clock_mhz"); return; }
    override_fail(o, "unknown key");
  }
  if (path[0] == "pipeline" && path.size() == 2) {
    if (!t.pipeline) override_fail(o, "target has no pipeline block");
    if (path[1] == "stages") { t.pipeline->stages = (uint32_t)as_u64("stages"); return; }
    if (path[1] == "min_issue_distance") {
      t.pipeline->min_issue_distance = (uint32_t)as_u64("min_issue_distance");
      return;
    }
    if (path[1] == "hw_threads") { t.pipeline->hw_threads = (uint32_t)as_u64("hw_threads"); return; }
    override_fail(o, "unknown pipeline key");
  }
  if (path[0] == "vector" && path.size() == 2) {
    if (!t.vector_proc) override_fail(o, "target has no vector block");
    if (path[1] == "lanes") { t.vector_proc->lanes = (uint32_t)as_u64("lanes"); return; }
    override_fail(o, "unknown vector key");
  }
  if (path[0] == "hierarchy" && path.size() == 3) {
    for (HierarchyLevel& h : t.hierarchy) {
      if (h.name != path[1]) continue;
      if (path[2] == "count") { h.units = as_u64("count"); return; }
      if (path[2] == "accumulate") {
        if (o.value == "true") h.can_accumulate = true;
        else if (o.value == "false") h.can_accumulate = false;
        else override_fail(o, "expected true/false");
        return;
      }
      override_fail(o, "unknown hierarchy key");
    }
    override_fail(o, "unknown hierarchy level");
  }
  if (path[0] == "memory" && path.size() >= 3) {
    for (MemLevelSpec& m : t.memory) {
      if (m.name != path[1]) continue;
      if (path.size() == 3) {
        if (path[2] == "capacity") { m.capacity_bytes = as_u64("capacity"); return; }
        if (path[2] == "word_access_cycles") { m.word_access_cycles = as_u64("wac"); return; }
        if (path[2] == "row_bytes") { m.row_bytes = as_u64("row_bytes"); return; }
      } else if (path.size() == 4 && path[2] == "dma") {
        if (!m.dma) override_fail(o, "level has no dma params");
        if (path[3] == "channels") { m.dma->channels = (uint32_t)as_u64("channels"); return; }
        if (path[3] == "setup_cycles") { m.dma->setup_cycles = as_u64("setup"); return; }
        if (path[3] == "bytes_per_cycle") { m.dma->bytes_per_cycle = as_u64("bpc"); return; }
      }
      override_fail(o, "unknown memory key");
    }
    override_fail(o, "unknown memory level");
  }
  // lut.<OP>.<dtype>.<ctx> = cycles; creates the entry if absent.
  if (path[0] == "lut" && path.size() == 4) {
    auto op = isa::parse_opcode(path[1]);
    if (!op) override_fail(o, "unknown opcode");
    auto dt = isa::parse_dtype(path[2]);
    if (!dt) override_fail(o, "unknown dtype");
    ContextClass cls;
    uint64_t lo = 0, hi = 0;
    std::string_view ctx = path[3];
    if (ctx == "default") cls = ContextClass::Default;
    else if (ctx == "same_row") cls = ContextClass::SameRow;
    else if (ctx == "row_switch") cls = ContextClass::RowSwitch;
    else if (ctx == "bank_parity_switch") cls = ContextClass::BankParitySwitch;
    else if (ctx.substr(0, 4) == "mag:") {
      auto parts = split_char(ctx.substr(4), ':');
      if (parts.size() != 2) override_fail(o, "bad magnitude bucket");
      cls = ContextClass::Magnitude;
      lo = parse_u64(parts[0], "mag lo");
      hi = parse_u64(parts[1], "mag hi");
    } else {
      override_fail(o, "unknown context class");
    }
    uint64_t cycles = as_u64("cycles");
    for (LutEntry& e : t.lut.entries) {
      if (e.op == *op && e.dtype == *dt && e.cls == cls && e.mag_lo == lo && e.mag_hi == hi) {
        e.cycles = cycles;
        return;
      }
    }
    t.lut.entries.push_back({*op, *dt, cls, lo, hi, cycles, false});
    return;
  }
  override_fail(o, "unknown key");
}

}  // namespace

TargetSpec apply_overrides(const TargetSpec& t, const OverrideSet& overrides) {
  TargetSpec out = t;
  for (const Override& o : overrides) apply_one(out, o);
  validate_target(out);
  return out;
}

}  // namespace cnm::target
