#pragma once

#include <array>
#include <string>
#include <vector>

#include "gss/core.h"

namespace gss {

// Construction recipe for a maximal-distance palette.
//
// Each channel m gets an arithmetic sequence a_i = start[m] + (i - 1) *
// interval[m] clipped to [0, 255]. Candidate colors are the Cartesian product
// of the three sequences in lexicographic order (R slowest, B fastest); the
// first K are kept, then per-entry jitter t in [0, jitter_bound] is added and
// the listed classes are refined away from their neighbours.
struct PaletteSpec {
  int num_classes = 1;
  std::array<int, 3> intervals{255, 255, 255};
  std::array<int, 3> starts{0, 0, 0};
  double jitter_bound = 0.0;
  std::vector<int> refine_classes;
  double gray_exclusion_radius = 60.0;

  // Defaults used by the experiments: misaligned starts (0, 1, 2), jitter
  // bound 15, and the widest interval whose sequence still fits in [0, 255]
  // after jitter.
  static PaletteSpec ForClasses(int num_classes);
};

// Number of colors each channel sequence contributes under `spec`.
std::array<int, 3> SequenceLengths(const PaletteSpec& spec);

// The jitter-free base colors (first K of the Cartesian product).
std::vector<Color> BaseColors(const PaletteSpec& spec);

Palette GenerateMaxDistance(const PaletteSpec& spec, Rng& rng);

// K distinct colors drawn uniformly from the integer lattice [0, 255]^3.
Palette GenerateRandom(int num_classes, Rng& rng);

// Reassigns each listed class (in order) the step-15 lattice color that
// maximizes its minimum distance to every other palette color, among lattice
// points at least `gray_exclusion_radius` from (128, 128, 128). A class keeps
// its current color when that color is admissible and at least as far from
// its neighbours as the best lattice candidate.
Palette Refine(const Palette& palette, const std::vector<int>& class_ids,
               double gray_exclusion_radius);

double MinPairwiseDistance(const Palette& palette);

// Minimum distance from color `k` to every other palette color.
double MinDistanceToOthers(const Palette& palette, int k);

double Distance(const Color& a, const Color& b);

}  // namespace gss
