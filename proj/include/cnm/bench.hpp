#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnm/cnmir.hpp"
#include "cnm/isa.hpp"

namespace cnm::bench {

enum class Kind { va, gemv, gemm, red, sel, scan, hst, relu };

const char* to_string(Kind k);
std::optional<Kind> parse_kind(std::string_view s);

struct BenchSpec {
  Kind kind = Kind::va;
  std::vector<uint64_t> extents;
  isa::DataType dtype = isa::DataType::i32;
  std::optional<double> selectivity;  // required for sel
  std::optional<uint64_t> bins;       // required for hst
};

// Kernel builders for the benchmark set. Iterator kinds: va/relu/sel/hst all
// parallel, gemv (parallel, reduction), gemm (parallel, parallel, reduction),
// red/scan reduction.
ir::KernelIr build_benchmark(const BenchSpec& b);

// CLI kernel URI: bench:<name>:<e1>[x<e2>...][:<dtype>][:sigma=<f>][:bins=<n>]
BenchSpec parse_bench_uri(std::string_view uri);

}  // namespace cnm::bench
