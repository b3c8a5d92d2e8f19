#pragma once

// Shared problem instances and reference solutions for the tests.

#include <random>
#include <stdexcept>
#include <string>

#include "nepv/nepv.hpp"

namespace fixture {

using namespace nepv;

inline NepvProblem make(const ExamplePreset& pr, double t) {
  return make_family_problem(pr.family, pr.a, pr.b, pr.d, t);
}

inline NepvProblem preset_problem(const std::string& id, double t) {
  return make(example_preset(id), t);
}

/// Reference solution of a printed example, by continuation from parameter 0.
inline StiefelPoint reference(const std::string& id, double t) {
  const ExamplePreset pr = example_preset(id);
  ScfOptions o;
  o.max_iters = 5000;
  const ContinuationResult c = continue_to([&](double s) { return make(pr, s); }, pr, 0.0, t, 50, o);
  if (!c.solution) throw std::runtime_error("no reference solution for " + id);
  return *c.solution;
}

inline StiefelPoint perturbed(const StiefelPoint& x, double size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return StiefelPoint::from_any(x.matrix() + size * random_tangent(x, rng));
}

}  // namespace fixture
