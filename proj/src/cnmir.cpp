#include "cnm/cnmir.hpp"

#include <algorithm>
#include <set>

namespace cnm::ir {

const char* to_string(Role r) { return r == Role::in ? "in" : "out"; }
const char* to_string(IterKind k) { return k == IterKind::parallel ? "parallel" : "reduction"; }

const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::mac: return "mac";
    case OpKind::band: return "and";
    case OpKind::bor: return "or";
    case OpKind::shl: return "shl";
    case OpKind::shr: return "shr";
    case OpKind::cmp: return "cmp";
    case OpKind::copy: return "copy";
  }
  return "add";
}

isa::Opcode to_opcode(OpKind k) {
  switch (k) {
    case OpKind::add: return isa::Opcode::ADD;
    case OpKind::sub: return isa::Opcode::SUB;
    case OpKind::mul: return isa::Opcode::MUL;
    case OpKind::div: return isa::Opcode::DIV;
    case OpKind::mac: return isa::Opcode::MAC;
    case OpKind::band: return isa::Opcode::AND;
    case OpKind::bor: return isa::Opcode::OR;
    case OpKind::shl: return isa::Opcode::SHL;
    case OpKind::shr: return isa::Opcode::SHR;
    case OpKind::cmp: return isa::Opcode::CMP;
    case OpKind::copy: return isa::Opcode::COPY;
  }
  return isa::Opcode::ADD;
}

namespace {
std::optional<OpKind> parse_op_kind(std::string_view s) {
  static constexpr std::pair<const char*, OpKind> kMap[] = {
      {"add", OpKind::add}, {"sub", OpKind::sub}, {"mul", OpKind::mul},
      {"div", OpKind::div}, {"mac", OpKind::mac}, {"and", OpKind::band},
      {"or", OpKind::bor},  {"shl", OpKind::shl}, {"shr", OpKind::shr},
      {"cmp", OpKind::cmp}, {"copy", OpKind::copy}};
  for (auto& [n, k] : kMap)
    if (s == n) return k;
  return std::nullopt;
}
}  // namespace

uint64_t Operand::elem_count() const {
  uint64_t n = 1;
  for (uint64_t e : shape) n = mul_checked(n, e, "operand size");
  return n;
}

uint64_t Subspace::points() const {
  uint64_t n = 1;
  for (uint64_t e : extents) n = mul_checked(n, e, "subspace points");
  return n;
}

const Operand* KernelIr::find_operand(std::string_view id) const {
  for (const Operand& o : operands)
    if (o.id == id) return &o;
  return nullptr;
}

std::vector<uint32_t> KernelIr::reduction_dims() const {
  std::set<uint32_t> dims;
  for (size_t d = 0; d < loops.size(); d++)
    if (loops[d].kind == IterKind::reduction) dims.insert((uint32_t)d);
  // An out-operand that appears among its producer's inputs accumulates;
  // splitting a dim it is not indexed by forces partial-result merging.
  for (const BodyOp& op : ops) {
    bool accumulates =
        std::find(op.inputs.begin(), op.inputs.end(), op.output) != op.inputs.end();
    if (!accumulates) continue;
    const Operand* out = find_operand(op.output);
    if (!out || out->role != Role::out) continue;
    for (size_t d = 0; d < loops.size(); d++) {
      bool indexed = std::find(out->index_vars.begin(), out->index_vars.end(),
                               loops[d].var) != out->index_vars.end();
      if (!indexed) dims.insert((uint32_t)d);
    }
  }
  return {dims.begin(), dims.end()};
}

KernelIr build_kernel(KernelIr draft) {
  KernelIr k = std::move(draft);
  if (k.name.empty()) throw Error("kernel: missing name");
  if (k.loops.empty()) throw Error("kernel: needs at least one loop");
  if (k.ops.empty()) throw Error("kernel: needs at least one body op");

  std::set<std::string> loop_vars;
  for (const Loop& l : k.loops) {
    if (l.extent == 0) throw Error(strprintf("kernel: loop %s has zero extent", l.var.c_str()));
    if (!loop_vars.insert(l.var).second)
      throw Error(strprintf("kernel: duplicate loop var '%s'", l.var.c_str()));
  }

  std::set<std::string> ids;
  for (const Operand& o : k.operands) {
    if (!ids.insert(o.id).second)
      throw Error(strprintf("kernel: duplicate operand '%s'", o.id.c_str()));
    if (o.indirect) continue;  // data-dependent indexing, no static map
    if (o.shape.size() != o.index_vars.size())
      throw Error(strprintf("kernel: operand '%s' shape/map arity mismatch", o.id.c_str()));
    for (size_t d = 0; d < o.index_vars.size(); d++) {
      auto it = std::find_if(k.loops.begin(), k.loops.end(),
                             [&](const Loop& l) { return l.var == o.index_vars[d]; });
      if (it == k.loops.end())
        throw Error(strprintf("kernel: operand '%s' maps unknown var '%s'", o.id.c_str(),
                              o.index_vars[d].c_str()));
      if (o.shape[d] != it->extent)
        throw Error(strprintf("kernel: operand '%s' dim %zu extent %llu != loop %s extent %llu",
                              o.id.c_str(), d, (unsigned long long)o.shape[d],
                              o.index_vars[d].c_str(), (unsigned long long)it->extent));
    }
  }

  bool has_cond = false;
  for (const BodyOp& op : k.ops) {
    for (const std::string& in : op.inputs)
      if (!k.find_operand(in))
        throw Error(strprintf("kernel: op reads undeclared operand '%s'", in.c_str()));
    if (!k.find_operand(op.output))
      throw Error(strprintf("kernel: op writes undeclared operand '%s'", op.output.c_str()));
    has_cond |= op.conditional;
  }
  if (has_cond && !k.selectivity)
    throw Error("kernel: conditional ops require a selectivity");
  if (k.selectivity && (*k.selectivity < 0.0 || *k.selectivity > 1.0))
    throw Error("kernel: selectivity must be in [0,1]");

  if (k.exec_order.empty()) {
    for (uint32_t i = 0; i < k.ops.size(); i++) k.exec_order.push_back(i);
  } else {
    std::vector<bool> seen(k.ops.size(), false);
    if (k.exec_order.size() != k.ops.size())
      throw Error("kernel: exec order must schedule every op exactly once");
    for (uint32_t idx : k.exec_order) {
      if (idx >= k.ops.size() || seen[idx])
        throw Error("kernel: exec order must schedule every op exactly once");
      seen[idx] = true;
    }
  }

  bool any_reduction = std::any_of(k.loops.begin(), k.loops.end(), [](const Loop& l) {
    return l.kind == IterKind::reduction;
  });
  if (any_reduction) {
    bool accum = std::any_of(k.ops.begin(), k.ops.end(), [&](const BodyOp& op) {
      return std::find(op.inputs.begin(), op.inputs.end(), op.output) != op.inputs.end() &&
             k.find_operand(op.output)->role == Role::out;
    });
    if (!accum) throw Error("kernel: reduction loop without an accumulating op");
  }

  k.memory_requests.clear();
  for (const Operand& o : k.operands) {
    uint64_t w = isa::width_bytes(o.dtype);
    if (o.role == Role::in) k.memory_requests.push_back({o.id, false, w});
    else k.memory_requests.push_back({o.id, true, w});
  }
  return k;
}

// ---------------------------------------------------------------------------
// .cnmir text format

namespace {

[[noreturn]] void ir_fail(int line, const std::string& msg) {
  throw Error(strprintf("cnmir:%d: %s", line, msg.c_str()));
}

// "(a,b,c)" -> tokens; "()" -> empty.
std::vector<std::string_view> parse_paren_list(std::string_view s, int lineno) {
  s = trim(s);
  if (s.size() < 2 || s.front() != '(' || s.back() != ')')
    ir_fail(lineno, strprintf("expected (...), got '%.*s'", (int)s.size(), s.data()));
  s = s.substr(1, s.size() - 2);
  if (trim(s).empty()) return {};
  std::vector<std::string_view> out;
  for (auto part : split_char(s, ',')) {
    part = trim(part);
    if (part.empty()) ir_fail(lineno, "empty list entry");
    out.push_back(part);
  }
  return out;
}

}  // namespace

KernelIr parse_kernel(std::string_view text) {
  KernelIr k;
  LineScanner scan(text, '#');
  std::string_view line;
  int lineno = 0;
  enum class Section { none, operands, loops, ops, order } sec = Section::none;

  while (scan.next(line, lineno)) {
    auto toks = split_ws(line);
    if (toks[0] == "kernel" && toks.size() == 2 && sec == Section::none) {
      k.name = std::string(toks[1]);
      continue;
    }
    if (toks[0] == "selectivity" && toks.size() == 2 && sec == Section::none) {
      k.selectivity = parse_f64(toks[1], "selectivity");
      continue;
    }
    if (line == "operands:") { sec = Section::operands; continue; }
    if (line == "loops:") { sec = Section::loops; continue; }
    if (line == "ops:") { sec = Section::ops; continue; }
    if (line == "order:") { sec = Section::order; continue; }

    switch (sec) {
      case Section::operands: {
        // <in|out> <id> <dtype> (<shape>) map=(<vars>) [indirect]
        if (toks.size() < 5) ir_fail(lineno, "bad operand line");
        Operand o;
        if (toks[0] == "in") o.role = Role::in;
        else if (toks[0] == "out") o.role = Role::out;
        else ir_fail(lineno, "operand role must be in/out");
        o.id = std::string(toks[1]);
        auto dt = isa::parse_dtype(toks[2]);
        if (!dt) ir_fail(lineno, strprintf("unknown dtype '%.*s'", (int)toks[2].size(), toks[2].data()));
        o.dtype = *dt;
        for (auto e : parse_paren_list(toks[3], lineno))
          o.shape.push_back(parse_u64(e, "shape extent"));
        if (toks[4].substr(0, 4) != "map=") ir_fail(lineno, "expected map=(...)");
        for (auto v : parse_paren_list(toks[4].substr(4), lineno))
          o.index_vars.emplace_back(v);
        if (toks.size() == 6) {
          if (toks[5] != "indirect") ir_fail(lineno, "trailing token must be 'indirect'");
          o.indirect = true;
        } else if (toks.size() > 6) {
          ir_fail(lineno, "bad operand line");
        }
        k.operands.push_back(std::move(o));
        break;
      }
      case Section::loops: {
        if (toks.size() != 3) ir_fail(lineno, "expected '<var> <extent> <parallel|reduction>'");
        Loop l;
        l.var = std::string(toks[0]);
        l.extent = parse_u64(toks[1], "loop extent");
        if (toks[2] == "parallel") l.kind = IterKind::parallel;
        else if (toks[2] == "reduction") l.kind = IterKind::reduction;
        else ir_fail(lineno, "iterator kind must be parallel/reduction");
        k.loops.push_back(std::move(l));
        break;
      }
      case Section::ops: {
        // <kind> <dtype> (<in,..>) -> <out> [cond]
        if (toks.size() < 5 || toks[3] != "->") ir_fail(lineno, "bad op line");
        BodyOp op;
        auto kind = parse_op_kind(toks[0]);
        if (!kind) ir_fail(lineno, strprintf("unknown op kind '%.*s'", (int)toks[0].size(), toks[0].data()));
        op.kind = *kind;
        auto dt = isa::parse_dtype(toks[1]);
        if (!dt) ir_fail(lineno, strprintf("unknown dtype '%.*s'", (int)toks[1].size(), toks[1].data()));
        op.dtype = *dt;
        for (auto in : parse_paren_list(toks[2], lineno)) op.inputs.emplace_back(in);
        op.output = std::string(toks[4]);
        if (toks.size() == 6) {
          if (toks[5] != "cond") ir_fail(lineno, "trailing token must be 'cond'");
          op.conditional = true;
        } else if (toks.size() > 6) {
          ir_fail(lineno, "bad op line");
        }
        k.ops.push_back(std::move(op));
        break;
      }
      case Section::order: {
        for (auto t : toks) k.exec_order.push_back((uint32_t)parse_u64(t, "order index"));
        break;
      }
      case Section::none:
        ir_fail(lineno, strprintf("unexpected line '%.*s'", (int)line.size(), line.data()));
    }
  }
  return build_kernel(std::move(k));
}

std::string emit_kernel(const KernelIr& k) {
  std::string out;
  out += strprintf("kernel %s\n", k.name.c_str());
  if (k.selectivity) out += strprintf("selectivity %.17g\n", *k.selectivity);
  out += "operands:\n";
  for (const Operand& o : k.operands) {
    out += strprintf("%s %s %s (", to_string(o.role), o.id.c_str(), isa::to_string(o.dtype));
    for (size_t i = 0; i < o.shape.size(); i++)
      out += strprintf(i ? ",%llu" : "%llu", (unsigned long long)o.shape[i]);
    out += ") map=(";
    for (size_t i = 0; i < o.index_vars.size(); i++) {
      if (i) out += ',';
      out += o.index_vars[i];
    }
    out += ')';
    if (o.indirect) out += " indirect";
    out += '\n';
  }
  out += "loops:\n";
  for (const Loop& l : k.loops)
    out += strprintf("%s %llu %s\n", l.var.c_str(), (unsigned long long)l.extent,
                     to_string(l.kind));
  out += "ops:\n";
  for (const BodyOp& op : k.ops) {
    out += strprintf("%s %s (", to_string(op.kind), isa::to_string(op.dtype));
    for (size_t i = 0; i < op.inputs.size(); i++) {
      if (i) out += ',';
      out += op.inputs[i];
    }
    out += strprintf(") -> %s", op.output.c_str());
    if (op.conditional) out += " cond";
    out += '\n';
  }
  out += "order:\n";
  for (size_t i = 0; i < k.exec_order.size(); i++)
    out += strprintf(i ? " %u" : "%u", k.exec_order[i]);
  out += '\n';
  return out;
}

}  // namespace cnm::ir
