#pragma once

#include "medi/registry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace medi::pipeline {

// Toy stand-in for a histopathology patch archive: the class sets the
// geometry of the pattern, the site sets a multiplicative colour tint.
struct ToySpec {
  std::vector<std::string> classes{"c0", "c1"};
  std::vector<std::string> sites{"s0", "s1"};
  int patches_per_class = 100;
  // 1 puts every patch of a class at its home sites; 0 spreads a class
  // evenly over all sites. Class k owns the sites whose index is k mod
  // |classes|, so different classes never share a home. With more classes
  // than sites, class k's single home is site k mod |sites|.
  double correlation = 0.0;
  int patches_per_patient = 4;
  int image_size = 16;
  double tint_strength = 0.35;
  double noise = 0.03;
  // Every pair of sites must differ by at least this much in some channel
  // mean (intensity units in [0, 1]) for every class.
  double min_tint_gap = 0.02;
  std::vector<std::string> races{"r0", "r1"};
  std::vector<std::string> genders{"female", "male"};
  std::uint64_t seed = 0;

  void validate() const;
};

// Class x site patch counts, row-major over (classes, sites). Each row is a
// largest-remainder apportionment of patches_per_class with weights
// correlation * [home] / |homes| + (1 - correlation) / |sites|; ties go to
// the lower site index.
std::vector<long> toy_counts(const ToySpec& spec);

std::array<double, 3> site_tint(const ToySpec& spec, std::size_t site_index);

// Records only (image_ref set, nothing written).
registry::DatasetManifest toy_records(const ToySpec& spec);

// Writes images under dir/images and the manifest to dir/manifest.tsv.
registry::DatasetManifest generate_toy_dataset(const ToySpec& spec, const std::filesystem::path& dir);

}  // namespace medi::pipeline
