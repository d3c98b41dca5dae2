#include <algorithm>
#include <map>
#include <optional>

#include "cnm/cnmir.hpp"

namespace cnm::ir {

// UPMEM-style assembly subset ingestion. Supported: MRAM DMA transfers
// (ldma/sdma), WRAM loads/stores, integer ALU, multiply/divide steps, moves,
// jumps, labels, and the combined "op ..., <cond>, <label>" form that fuses an
// ALU op with a conditional branch. Backward conditional branches whose
// counter is initialized by a visible immediate move become LOOP/ENDLOOP.

namespace {

using isa::Instruction;
using isa::Opcode;

struct AsmUnit {
  enum Kind { kLabel, kIns } kind = kIns;
  std::string label;
  std::vector<Instruction> ins;       // 1, or 2 when a branch is fused
  std::string branch_target;          // non-empty for branch/fused units
  bool branch_conditional = false;
  std::string counter_reg;            // decremented register for fused branches
  int64_t decrement = 0;              // constant subtracted per iteration
  int line = 0;
};

const std::map<std::string_view, std::pair<Opcode, isa::DataType>> kWramLoads = {
    {"lw", {Opcode::LOAD, isa::DataType::i32}}, {"ld", {Opcode::LOAD, isa::DataType::i64}},
    {"lbu", {Opcode::LOAD, isa::DataType::i8}}, {"lb", {Opcode::LOAD, isa::DataType::i8}},
    {"lhu", {Opcode::LOAD, isa::DataType::i16}}, {"lh", {Opcode::LOAD, isa::DataType::i16}},
    {"sw", {Opcode::STORE, isa::DataType::i32}}, {"sd", {Opcode::STORE, isa::DataType::i64}},
    {"sb", {Opcode::STORE, isa::DataType::i8}}, {"sh", {Opcode::STORE, isa::DataType::i16}},
};

const std::map<std::string_view, Opcode> kAlu = {
    {"add", Opcode::ADD},  {"addc", Opcode::ADD}, {"sub", Opcode::SUB},
    {"subc", Opcode::SUB}, {"and", Opcode::AND},  {"or", Opcode::OR},
    {"xor", Opcode::OR},   {"lsl", Opcode::SHL},  {"lsr", Opcode::SHR},
    {"asr", Opcode::SHR},  {"cmp", Opcode::CMP},
};

const std::map<std::string_view, Opcode> kMulDiv = {
    {"mul", Opcode::MUL},      {"mul_step", Opcode::MUL}, {"mul_sl", Opcode::MUL},
    {"mul_sh", Opcode::MUL},   {"mul_ul_ul", Opcode::MUL}, {"div", Opcode::DIV},
    {"div_step", Opcode::DIV},
};

// z/nz/eq/... condition codes accepted on fused ALU+branch lines.
bool is_cond_code(std::string_view s) {
  static constexpr const char* kCodes[] = {"z",  "nz", "eq",  "neq", "gt", "ge",
                                           "lt", "le", "sz",  "snz", "pl", "mi",
                                           "c",  "nc", "true"};
  return std::any_of(std::begin(kCodes), std::end(kCodes),
                     [&](const char* c) { return s == c; });
}

bool is_register(std::string_view s) {
  if (s.size() < 2 || (s[0] != 'r' && s[0] != 'd')) return false;
  for (size_t i = 1; i < s.size(); i++)
    if (s[i] < '0' || s[i] > '9') return false;
  return true;
}

bool is_number(std::string_view s) {
  if (s.empty()) return false;
  size_t b = (s[0] == '-') ? 1 : 0;
  if (b == s.size()) return false;
  for (size_t i = b; i < s.size(); i++)
    if (s[i] < '0' || s[i] > '9') return false;
  return true;
}

[[noreturn]] void asm_fail(int line, const std::string& msg) {
  throw Error(strprintf("asm:%d: %s", line, msg.c_str()));
}

std::vector<std::string> split_operands(std::string_view rest) {
  std::vector<std::string> out;
  for (auto part : split_char(rest, ',')) {
    part = trim(part);
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

AsmUnit translate(std::string_view mnemonic, std::vector<std::string> ops, int line) {
  AsmUnit u;
  u.line = line;

  // Trailing "<cond>, <label>" fuses a conditional branch onto an ALU op.
  if (ops.size() >= 2 && is_cond_code(ops[ops.size() - 2]) && !is_number(ops.back()) &&
      !is_register(ops.back())) {
    u.branch_target = ops.back();
    u.branch_conditional = true;
    ops.pop_back();
    ops.pop_back();
  }

  Instruction ins;
  auto finish_alu = [&](Opcode op) {
    ins.opcode = op;
    ins.operands = ops;
    u.ins.push_back(ins);
    if (!u.branch_target.empty()) {
      if ((op == Opcode::SUB || op == Opcode::ADD) && ops.size() == 3 && is_number(ops[2]) &&
          ops[0] == ops[1]) {
        u.counter_reg = ops[0];
        u.decrement = op == Opcode::SUB ? std::stoll(ops[2]) : -std::stoll(ops[2]);
      }
      Instruction br;
      br.opcode = Opcode::JNZ;
      br.operands = {ops.empty() ? std::string("r0") : ops[0], u.branch_target};
      u.ins.push_back(br);
    }
  };

  if (mnemonic == "ldma" || mnemonic == "sdma") {
    ins.opcode = mnemonic == "ldma" ? Opcode::LOAD : Opcode::STORE;
    ins.dtype = isa::DataType::i64;
    ins.level = "mram";
    // third operand: transfer length in 8-byte beats minus one
    uint64_t beats = 1;
    if (ops.size() >= 3 && is_number(ops[2])) beats = parse_u64(ops[2], "dma beats") + 1;
    ins.size_bytes = beats * 8;
    if (ops.size() > 2) ops.resize(2);
    ins.operands = ops;
    u.ins.push_back(ins);
    return u;
  }
  if (auto it = kWramLoads.find(mnemonic); it != kWramLoads.end()) {
    ins.opcode = it->second.first;
    ins.dtype = it->second.second;
    ins.level = "wram";
    ins.operands = ops;
    u.ins.push_back(ins);
    return u;
  }
  if (auto it = kAlu.find(mnemonic); it != kAlu.end()) {
    finish_alu(it->second);
    return u;
  }
  if (auto it = kMulDiv.find(mnemonic); it != kMulDiv.end()) {
    finish_alu(it->second);
    return u;
  }
  if (mnemonic == "move" || mnemonic == "movd") {
    if (ops.size() == 2 && is_number(ops[1])) ins.opcode = Opcode::MOVI;
    else ins.opcode = Opcode::COPY;
    ins.operands = ops;
    u.ins.push_back(ins);
    return u;
  }
  if (mnemonic == "nop") {
    ins.opcode = Opcode::NOP;
    u.ins.push_back(ins);
    return u;
  }
  if (mnemonic == "jump" || mnemonic == "jmp") {
    if (ops.size() != 1) asm_fail(line, "jump expects one target");
    if (is_register(ops[0]))
      asm_fail(line, "irreducible control flow: indirect jump");
    ins.opcode = Opcode::JUMP;
    ins.operands = ops;
    u.ins.push_back(ins);
    u.branch_target = ops[0];
    u.branch_conditional = false;
    return u;
  }
  if (mnemonic == "jnz" || mnemonic == "jz" || mnemonic == "jeq" || mnemonic == "jneq") {
    if (ops.size() < 2) asm_fail(line, "conditional jump expects reg, target");
    if (is_register(ops.back()))
      asm_fail(line, "irreducible control flow: indirect jump");
    ins.opcode = Opcode::JNZ;
    ins.operands = ops;
    u.ins.push_back(ins);
    u.branch_target = ops.back();
    u.branch_conditional = true;
    return u;
  }
  asm_fail(line, strprintf("unsupported mnemonic '%.*s'", (int)mnemonic.size(), mnemonic.data()));
}

}  // namespace

isa::Program ingest_target_asm(std::string_view text) {
  std::vector<AsmUnit> units;
  {
    LineScanner scan(text, '#');
    std::string_view line;
    int lineno = 0;
    while (scan.next(line, lineno)) {
      if (size_t p = line.find("//"); p != std::string_view::npos) {
        line = trim(line.substr(0, p));
        if (line.empty()) continue;
      }
      if (line.back() == ':' && line.find(' ') == std::string_view::npos) {
        AsmUnit u;
        u.kind = AsmUnit::kLabel;
        u.label = std::string(line.substr(0, line.size() - 1));
        u.line = lineno;
        units.push_back(std::move(u));
        continue;
      }
      if (line[0] == '.') continue;  // assembler directives
      size_t sp = line.find_first_of(" \t");
      std::string_view mnemonic = sp == std::string_view::npos ? line : line.substr(0, sp);
      std::vector<std::string> ops;
      if (sp != std::string_view::npos) ops = split_operands(line.substr(sp + 1));
      units.push_back(translate(mnemonic, std::move(ops), lineno));
    }
  }

  // Structure recovery: a backward branch to a seen label closes a loop whose
  // trip count comes from the nearest preceding immediate move into the
  // decremented counter register.
  isa::Program prog;
  struct OpenLabel {
    std::string name;
    size_t item_index;  // position of the Label item in prog.items
  };
  std::vector<OpenLabel> seen;
  // last immediate moved into each register, by program position
  std::vector<std::pair<std::string, int64_t>> imm_moves;

  auto find_trip = [&](const AsmUnit& u) -> std::optional<uint64_t> {
    if (u.counter_reg.empty() || u.decrement == 0) return std::nullopt;
    for (auto it = imm_moves.rbegin(); it != imm_moves.rend(); ++it) {
      if (it->first != u.counter_reg) continue;
      int64_t init = it->second;
      if (u.decrement > 0 && init > 0 && init % u.decrement == 0)
        return (uint64_t)(init / u.decrement);
      return std::nullopt;
    }
    return std::nullopt;
  };

  for (const AsmUnit& u : units) {
    if (u.kind == AsmUnit::kLabel) {
      seen.push_back({u.label, prog.items.size()});
      prog.items.emplace_back(isa::Label{u.label});
      continue;
    }
    for (const Instruction& i : u.ins) {
      if (i.opcode == Opcode::MOVI && i.operands.size() == 2)
        imm_moves.emplace_back(i.operands[0], std::stoll(i.operands[1]));
      prog.items.emplace_back(i);
    }
    if (u.branch_target.empty()) continue;
    auto lit = std::find_if(seen.rbegin(), seen.rend(),
                            [&](const OpenLabel& l) { return l.name == u.branch_target; });
    if (lit == seen.rend()) continue;  // forward branch: plain instruction
    if (!u.branch_conditional)
      asm_fail(u.line, "irreducible control flow: unconditional backward jump");
    auto trip = find_trip(u);
    if (!trip || *trip == 0)
      asm_fail(u.line, strprintf("irreducible control flow: trip count for loop '%s' "
                                 "is not statically resolvable",
                                 u.branch_target.c_str()));
    // wrap [label .. branch] in LOOP/ENDLOOP, keeping control instructions
    size_t begin = lit->item_index;
    std::vector<isa::Item> body(prog.items.begin() + (long)begin, prog.items.end());
    prog.items.resize(begin);
    prog.items.emplace_back(isa::LoopBegin{*trip});
    for (auto& item : body) prog.items.emplace_back(std::move(item));
    prog.items.emplace_back(isa::LoopEnd{});
    seen.erase(std::next(lit).base(), seen.end());  // labels inside are closed
  }
  return prog;
}

}  // namespace cnm::ir
