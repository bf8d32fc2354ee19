#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hywu/generator.hpp"
#include "hywu/tokenizer.hpp"

// Self-contained verification routines shared by the CLI selfcheck command
// and the acceptance suite: tokenization round-trip fuzzing, zero-init
// equivalence, and the end-to-end generator gradient check.
namespace hywu {

struct CheckResult {
  bool passed = false;
  std::string detail;  // one-line summary with the observed numbers
};

// Fuzzes >= `layouts` random layouts (d_in, d_out in [2,12], r in {1,2,4},
// l in [1,4], 1-3 modules) and verifies detokenize(tokenize(x)) is bit-exact
// and that token count conservation l*s*r*d == total scalars holds.
CheckResult check_roundtrip_fuzz(std::size_t layouts, std::uint64_t seed);

// Freshly initialized generator: injected forward must equal the base forward
// with exact 64-bit equality for `inputs` random inputs.
CheckResult check_zero_init(std::size_t inputs, std::uint64_t seed);

// End-to-end gradient check on the tiny configuration (l=2, s=5, r=2, d=2,
// h=8, N=1, backbone width 4): a two-layer chain of non-square adapted maps
// (4x6 modules with a frozen 6x4 bridge) driven by generated adapters.
// Central differences with the given step; the per-parameter relative error
// is ||fd - analytic||_inf / max(||analytic||_inf, floor).
struct GradCheckResult {
  bool passed = false;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t params_checked = 0;
};

GradCheckResult check_end_to_end_gradients(double fd_step = 1e-3, double tolerance = 1e-4,
                                           std::uint64_t seed = 0);

}  // namespace hywu
