#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cnm/common.hpp"

namespace cnm::target {
struct TargetSpec;  // isa validation resolves levels/dtypes against a target
}

namespace cnm::isa {

enum class Opcode {
  LOAD, STORE, COPY, MOVI,
  ADD, SUB, MUL, DIV, MAC,
  AND, OR, SHL, SHR, CMP,
  JUMP, JNZ, RED,
  NOP, FENCE,
};

enum class DataType { i8, i16, i32, i64, f16, f32, f64 };

const char* to_string(Opcode op);
const char* to_string(DataType dt);
std::optional<Opcode> parse_opcode(std::string_view s);
std::optional<DataType> parse_dtype(std::string_view s);
unsigned width_bytes(DataType dt);

// ALU/FPU work as opposed to data movement or no-ops. Loop scaffolding
// (SUB/JNZ) shares opcodes with this set; consumers that need body-op counts
// filter by the kernel's op kinds and dtypes.
bool is_arithmetic(Opcode op);
bool is_control(Opcode op);
bool is_memory(Opcode op);  // LOAD/STORE/COPY

// Physical placement on location-sensitive targets: bank / DRAM row / column.
struct Location {
  uint32_t bank = 0;
  uint32_t row = 0;
  uint32_t col = 0;
  bool operator==(const Location&) const = default;
};

// One llvcnm instruction. Operands are opaque tokens, never evaluated.
struct Instruction {
  Opcode opcode = Opcode::NOP;
  DataType dtype = DataType::i32;
  std::vector<std::string> operands;
  std::optional<std::string> level;       // required on LOAD/STORE
  std::optional<uint64_t> size_bytes;     // bulk transfers; LOAD/STORE/COPY only
  std::optional<Location> location;
  bool operator==(const Instruction&) const = default;
};

struct LoopBegin {
  uint64_t trip = 1;
  bool operator==(const LoopBegin&) const = default;
};
struct LoopEnd {
  bool operator==(const LoopEnd&) const = default;
};
struct Label {
  std::string name;
  bool operator==(const Label&) const = default;
};

using Item = std::variant<Instruction, LoopBegin, LoopEnd, Label>;

// Structured llvcnm unit: instructions plus properly nested LOOP/ENDLOOP and
// unique labels. Immutable by convention once built.
struct Program {
  std::vector<Item> items;
  bool operator==(const Program&) const = default;
};

// Parses llvcnm text. Errors carry line:col. Enforces: known opcodes/dtypes,
// balanced LOOP/ENDLOOP, unique labels, LOAD/STORE carry @level, size only on
// LOAD/STORE/COPY.
Program parse_program(std::string_view text);

// Canonical text: one item per line, single spaces, attribute order
// "@level !b:r:c #size", no indentation, no trailing newline.
std::string emit_program(const Program& p);

// Target-dependent checks: levels exist, dtypes supported, locations present
// iff the target is location-sensitive.
std::vector<Diagnostic> validate_program(const Program& p, const target::TargetSpec& t);

// Number of instructions in the fully unrolled program (labels and loop
// markers excluded). Throws on 64-bit overflow.
uint64_t flat_length(const Program& p);

// Sequential walker over the unrolled instruction stream. O(depth) state,
// no materialization.
class TraceCursor {
 public:
  explicit TraceCursor(const Program* p);
  const Instruction* next();  // nullptr when exhausted

 private:
  struct Frame {
    size_t begin;        // first item inside the loop
    uint64_t remaining;  // iterations left after the current one
  };
  const Program* prog_;
  size_t idx_ = 0;
  std::vector<Frame> stack_;
  std::vector<size_t> match_;  // LoopBegin item index -> matching LoopEnd index
};

// Lazily unrolled view of a Program. Total length is known up front; if it
// exceeds `cap`, iteration stops at `cap` and truncated() reports it - never
// silently.
class InstructionTrace {
 public:
  InstructionTrace(const Program* p, uint64_t cap);
  uint64_t full_length() const { return full_length_; }
  uint64_t length() const { return full_length_ < cap_ ? full_length_ : cap_; }
  bool truncated() const { return full_length_ > cap_; }
  TraceCursor cursor() const { return TraceCursor(prog_); }
  const Program& program() const { return *prog_; }

 private:
  const Program* prog_;
  uint64_t full_length_;
  uint64_t cap_;
};

InstructionTrace flatten(const Program& p, uint64_t cap);

}  // namespace cnm::isa
