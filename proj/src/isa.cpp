#include "cnm/isa.hpp"

#include <array>
#include <cstring>
#include <unordered_set>

#include "cnm/target.hpp"

namespace cnm::isa {

namespace {

constexpr std::array<const char*, 19> kOpcodeNames = {
    "LOAD", "STORE", "COPY", "MOVI", "ADD", "SUB", "MUL", "DIV", "MAC",
    "AND",  "OR",    "SHL",  "SHR",  "CMP", "JUMP", "JNZ", "RED", "NOP",
    "FENCE"};

constexpr std::array<const char*, 7> kDtypeNames = {"i8",  "i16", "i32", "i64",
                                                    "f16", "f32", "f64"};

}  // namespace

const char* to_string(Opcode op) { return kOpcodeNames[static_cast<size_t>(op)]; }
const char* to_string(DataType dt) { return kDtypeNames[static_cast<size_t>(dt)]; }

std::optional<Opcode> parse_opcode(std::string_view s) {
  for (size_t i = 0; i < kOpcodeNames.size(); i++)
    if (s == kOpcodeNames[i]) return static_cast<Opcode>(i);
  return std::nullopt;
}

std::optional<DataType> parse_dtype(std::string_view s) {
  for (size_t i = 0; i < kDtypeNames.size(); i++)
    if (s == kDtypeNames[i]) return static_cast<DataType>(i);
  return std::nullopt;
}

unsigned width_bytes(DataType dt) {
  switch (dt) {
    case DataType::i8: return 1;
    case DataType::i16: return 2;
    case DataType::i32: return 4;
    case DataType::i64: return 8;
    case DataType::f16: return 2;
    case DataType::f32: return 4;
    case DataType::f64: return 8;
  }
  return 4;
}

bool is_arithmetic(Opcode op) {
  switch (op) {
    case Opcode::ADD: case Opcode::SUB: case Opcode::MUL: case Opcode::DIV:
    case Opcode::MAC: case Opcode::AND: case Opcode::OR: case Opcode::SHL:
    case Opcode::SHR: case Opcode::CMP: case Opcode::RED:
      return true;
    default:
      return false;
  }
}

bool is_control(Opcode op) { return op == Opcode::JUMP || op == Opcode::JNZ; }

bool is_memory(Opcode op) {
  return op == Opcode::LOAD || op == Opcode::STORE || op == Opcode::COPY;
}

// ---------------------------------------------------------------------------
// parse_program

namespace {

[[noreturn]] void parse_fail(int line, int col, const std::string& msg) {
  throw Error(strprintf("llvcnm:%d:%d: %s", line, col, msg.c_str()));
}

bool is_ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_' || c == '.';
}

// One instruction line, already trimmed and comment-free.
Instruction parse_instruction(std::string_view line, int lineno) {
  Instruction ins;
  size_t i = 0;
  size_t mne_end = 0;
  while (mne_end < line.size() && line[mne_end] != ' ' && line[mne_end] != '\t') mne_end++;
  std::string_view mnemonic = line.substr(0, mne_end);

  std::string_view op_tok = mnemonic;
  std::optional<std::string_view> dt_tok;
  if (size_t dot = mnemonic.find('.'); dot != std::string_view::npos) {
    op_tok = mnemonic.substr(0, dot);
    dt_tok = mnemonic.substr(dot + 1);
  }
  auto op = parse_opcode(op_tok);
  if (!op)
    parse_fail(lineno, 1, strprintf("unknown opcode '%.*s'", (int)op_tok.size(), op_tok.data()));
  ins.opcode = *op;
  if (dt_tok) {
    auto dt = parse_dtype(*dt_tok);
    if (!dt)
      parse_fail(lineno, (int)(op_tok.size() + 2),
                 strprintf("unknown dtype '%.*s'", (int)dt_tok->size(), dt_tok->data()));
    ins.dtype = *dt;
  }

  i = mne_end;
  bool expect_operand = true;   // operands come first, comma separated
  bool seen_attr = false;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) i++;
    if (i >= line.size()) break;
    char c = line[i];
    if (c == '@') {
      size_t b = ++i;
      while (i < line.size() && is_ident_char(line[i])) i++;
      if (i == b) parse_fail(lineno, (int)b + 1, "empty @level");
      if (ins.level) parse_fail(lineno, (int)b, "duplicate @level");
      ins.level = std::string(line.substr(b, i - b));
      seen_attr = true;
    } else if (c == '#') {
      size_t b = ++i;
      while (i < line.size() && line[i] >= '0' && line[i] <= '9') i++;
      if (i == b) parse_fail(lineno, (int)b + 1, "empty #size");
      if (ins.size_bytes) parse_fail(lineno, (int)b, "duplicate #size");
      uint64_t v = parse_u64(line.substr(b, i - b), "size");
      if (v == 0) parse_fail(lineno, (int)b + 1, "#size must be positive");
      ins.size_bytes = v;
      seen_attr = true;
    } else if (c == '!') {
      size_t b = ++i;
      uint32_t vals[3] = {0, 0, 0};
      for (int f = 0; f < 3; f++) {
        size_t nb = i;
        while (i < line.size() && line[i] >= '0' && line[i] <= '9') i++;
        if (i == nb) parse_fail(lineno, (int)nb + 1, "bad !location, expected b:r:c");
        vals[f] = (uint32_t)parse_u64(line.substr(nb, i - nb), "location");
        if (f < 2) {
          if (i >= line.size() || line[i] != ':')
            parse_fail(lineno, (int)i + 1, "bad !location, expected ':'");
          i++;
        }
      }
      if (ins.location) parse_fail(lineno, (int)b, "duplicate !location");
      ins.location = Location{vals[0], vals[1], vals[2]};
      seen_attr = true;
    } else if (c == ',') {
      if (expect_operand) parse_fail(lineno, (int)i + 1, "unexpected ','");
      expect_operand = true;
      i++;
    } else {
      if (seen_attr) parse_fail(lineno, (int)i + 1, "operand after attribute");
      if (!expect_operand) parse_fail(lineno, (int)i + 1, "missing ',' between operands");
      size_t b = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != ',') i++;
      ins.operands.emplace_back(line.substr(b, i - b));
      expect_operand = false;
    }
  }

  if ((ins.opcode == Opcode::LOAD || ins.opcode == Opcode::STORE) && !ins.level)
    parse_fail(lineno, 1, strprintf("%s requires @level", to_string(ins.opcode)));
  if (ins.size_bytes && !is_memory(ins.opcode))
    parse_fail(lineno, 1, strprintf("#size not allowed on %s", to_string(ins.opcode)));
  return ins;
}

}  // namespace

Program parse_program(std::string_view text) {
  Program p;
  LineScanner scan(text, ';');
  std::string_view line;
  int lineno = 0;
  int depth = 0;
  std::unordered_set<std::string> labels;
  while (scan.next(line, lineno)) {
    if (line == "ENDLOOP") {
      if (depth == 0) parse_fail(lineno, 1, "ENDLOOP without LOOP");
      depth--;
      p.items.emplace_back(LoopEnd{});
      continue;
    }
    if (line == "LOOP" || (line.size() > 4 && line.substr(0, 4) == "LOOP" &&
                           (line[4] == ' ' || line[4] == '\t'))) {
      auto toks = split_ws(line);
      if (toks.size() != 2) parse_fail(lineno, 1, "LOOP requires exactly one trip count");
      uint64_t trip = parse_u64(toks[1], "LOOP trip");
      if (trip == 0) parse_fail(lineno, 6, "LOOP trip must be positive");
      depth++;
      p.items.emplace_back(LoopBegin{trip});
      continue;
    }
    if (line.back() == ':' && line.find(' ') == std::string_view::npos) {
      std::string name(line.substr(0, line.size() - 1));
      if (name.empty()) parse_fail(lineno, 1, "empty label");
      if (!labels.insert(name).second)
        parse_fail(lineno, 1, strprintf("duplicate label '%s'", name.c_str()));
      p.items.emplace_back(Label{std::move(name)});
      continue;
    }
    p.items.emplace_back(parse_instruction(line, lineno));
  }
  if (depth != 0) throw Error("llvcnm: unbalanced LOOP/ENDLOOP at end of input");
  return p;
}

// ---------------------------------------------------------------------------
// emit_program

namespace {

void emit_instruction(std::string& out, const Instruction& ins) {
  out += to_string(ins.opcode);
  out += '.';
  out += to_string(ins.dtype);
  for (size_t i = 0; i < ins.operands.size(); i++) {
    out += i == 0 ? " " : ", ";
    out += ins.operands[i];
  }
  if (ins.level) {
    out += " @";
    out += *ins.level;
  }
  if (ins.location)
    out += strprintf(" !%u:%u:%u", ins.location->bank, ins.location->row, ins.location->col);
  if (ins.size_bytes) out += strprintf(" #%llu", (unsigned long long)*ins.size_bytes);
}

}  // namespace

std::string emit_program(const Program& p) {
  std::string out;
  bool first = true;
  for (const Item& item : p.items) {
    if (!first) out += '\n';
    first = false;
    if (const auto* ins = std::get_if<Instruction>(&item)) {
      emit_instruction(out, *ins);
    } else if (const auto* lb = std::get_if<LoopBegin>(&item)) {
      out += strprintf("LOOP %llu", (unsigned long long)lb->trip);
    } else if (std::get_if<LoopEnd>(&item)) {
      out += "ENDLOOP";
    } else if (const auto* lab = std::get_if<Label>(&item)) {
      out += lab->name;
      out += ':';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// validate_program

std::vector<Diagnostic> validate_program(const Program& p, const target::TargetSpec& t) {
  std::vector<Diagnostic> diags;
  size_t n = 0;
  for (const Item& item : p.items) {
    const auto* ins = std::get_if<Instruction>(&item);
    n++;
    if (!ins) continue;
    std::string where = strprintf("item %zu (%s)", n - 1, to_string(ins->opcode));
    if (ins->level && !t.find_level(*ins->level))
      diags.push_back({where, strprintf("unknown memory level '%s' on target '%s'",
                                        ins->level->c_str(), t.name.c_str())});
    if (!t.supports_dtype(ins->dtype))
      diags.push_back({where, strprintf("dtype %s not supported by target '%s'",
                                        to_string(ins->dtype), t.name.c_str())});
    if (ins->location && !t.location_sensitive())
      diags.push_back({where, "location attribute on a location-insensitive target"});
    if (!ins->location && t.location_sensitive() && ins->level) {
      const auto* lvl = t.find_level(*ins->level);
      if (lvl && lvl->access == target::MemAccess::bank)
        diags.push_back({where, "bank access without location on a location-sensitive target"});
    }
  }
  return diags;
}

// ---------------------------------------------------------------------------
// flatten

namespace {

// Recursive length of items [begin, end); `end` exclusive, top level when
// loop_end == npos.
uint64_t flat_length_range(const Program& p, size_t begin, size_t end) {
  uint64_t len = 0;
  size_t i = begin;
  while (i < end) {
    const Item& item = p.items[i];
    if (std::holds_alternative<Instruction>(item)) {
      if (len == UINT64_MAX) throw Error("flatten: length overflow");
      len++;
      i++;
    } else if (const auto* lb = std::get_if<LoopBegin>(&item)) {
      size_t depth = 1;
      size_t j = i + 1;
      while (j < end && depth > 0) {
        if (std::holds_alternative<LoopBegin>(p.items[j])) depth++;
        if (std::holds_alternative<LoopEnd>(p.items[j])) depth--;
        j++;
      }
      if (depth != 0) throw Error("flatten: unbalanced loops");
      uint64_t body = flat_length_range(p, i + 1, j - 1);
      uint64_t total = mul_checked(body, lb->trip, "flatten length");
      uint64_t nl;
      if (__builtin_add_overflow(len, total, &nl)) throw Error("flatten: length overflow");
      len = nl;
      i = j;
    } else {
      i++;  // labels, stray markers
    }
  }
  return len;
}

}  // namespace

uint64_t flat_length(const Program& p) {
  return flat_length_range(p, 0, p.items.size());
}

TraceCursor::TraceCursor(const Program* p) : prog_(p) {
  match_.assign(p->items.size(), 0);
  std::vector<size_t> open;
  for (size_t i = 0; i < p->items.size(); i++) {
    if (std::holds_alternative<LoopBegin>(p->items[i])) open.push_back(i);
    if (std::holds_alternative<LoopEnd>(p->items[i])) {
      if (open.empty()) throw Error("trace: unbalanced loops");
      match_[open.back()] = i;
      open.pop_back();
    }
  }
  if (!open.empty()) throw Error("trace: unbalanced loops");
}

const Instruction* TraceCursor::next() {
  while (idx_ < prog_->items.size()) {
    const Item& item = prog_->items[idx_];
    if (const auto* ins = std::get_if<Instruction>(&item)) {
      idx_++;
      return ins;
    }
    if (const auto* lb = std::get_if<LoopBegin>(&item)) {
      if (lb->trip == 0 || match_[idx_] == idx_ + 1) {
        idx_ = match_[idx_] + 1;  // empty body or zero trips
      } else {
        stack_.push_back({idx_ + 1, lb->trip - 1});
        idx_++;
      }
      continue;
    }
    if (std::get_if<LoopEnd>(&item)) {
      if (!stack_.empty() && stack_.back().remaining > 0) {
        stack_.back().remaining--;
        idx_ = stack_.back().begin;
      } else {
        if (!stack_.empty()) stack_.pop_back();
        idx_++;
      }
      continue;
    }
    idx_++;  // label
  }
  return nullptr;
}

InstructionTrace::InstructionTrace(const Program* p, uint64_t cap)
    : prog_(p), full_length_(flat_length(*p)), cap_(cap) {}

InstructionTrace flatten(const Program& p, uint64_t cap) {
  return InstructionTrace(&p, cap);
}

}  // namespace cnm::isa
