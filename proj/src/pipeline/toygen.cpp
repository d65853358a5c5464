#include "medi/pipeline/toygen.hpp"

#include "medi/error.hpp"
#include "medi/image_io.hpp"
#include "medi/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace medi::pipeline {

namespace {

constexpr double kBaseLow = 0.1;   // darkest base intensity before tinting
constexpr double kBaseSpan = 0.6;  // base intensity range

double min_pairwise_gap(const ToySpec& spec) {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < spec.sites.size(); ++a)
    for (std::size_t b = a + 1; b < spec.sites.size(); ++b) {
      const auto ta = site_tint(spec, a), tb = site_tint(spec, b);
      double m = 0.0;
      for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(ta[c] - tb[c]));
      gap = std::min(gap, m);
    }
  return gap;
}

// Pattern value in [0, 1] for geometry `kind` at pixel (x, y).
double pattern(int kind, double freq, double phase, double cx, double cy, double radius, int x, int y, int size) {
  const double u = (x + 0.5) / size, v = (y + 0.5) / size;
  const double tau = 2.0 * std::numbers::pi;
  switch (kind) {
    case 0: return 0.5 + 0.5 * std::sin(tau * freq * v + phase);
    case 1: return 0.5 + 0.5 * std::sin(tau * freq * u + phase);
    case 2: return (std::sin(tau * freq * u + phase) * std::sin(tau * freq * v + phase) > 0) ? 1.0 : 0.0;
    case 3: return std::hypot(u - cx, v - cy) < radius ? 1.0 : 0.15;
    case 4: return 0.5 + 0.5 * std::sin(tau * freq * (u + v) / std::numbers::sqrt2 + phase);
    default: {
      const double r = std::hypot(u - cx, v - cy);
      return std::abs(r - radius) < 0.09 ? 1.0 : 0.1;
    }
  }
}

}  // namespace

void ToySpec::validate() const {
  if (classes.empty() || sites.empty()) throw ConfigError("toy dataset needs at least one class and one site");
  if (std::set<std::string>(classes.begin(), classes.end()).size() != classes.size() ||
      std::set<std::string>(sites.begin(), sites.end()).size() != sites.size())
    throw ConfigError("toy class and site names must be unique");
  if (patches_per_class <= 0) throw ConfigError("patches_per_class must be positive");
  if (patches_per_patient <= 0) throw ConfigError("patches_per_patient must be positive");
  if (image_size < 4) throw ConfigError("image_size must be at least 4");
  if (!(correlation >= 0.0 && correlation <= 1.0)) throw ConfigError("correlation must lie in [0, 1]");
  if (correlation == 1.0 && classes.size() > sites.size())
    throw ConfigError("correlation 1 needs a distinct home site per class: " + std::to_string(classes.size()) +
                      " classes but only " + std::to_string(sites.size()) + " sites");
  if (races.empty() || genders.empty()) throw ConfigError("race and gender lists must be non-empty");
  if (tint_strength < 0.0 || tint_strength > 0.4) throw ConfigError("tint_strength must lie in [0, 0.4]");
  if (sites.size() > 1 && kBaseLow * min_pairwise_gap(*this) < min_tint_gap)
    throw ConfigError("tint_strength " + std::to_string(tint_strength) + " with " + std::to_string(sites.size()) +
                      " sites cannot guarantee a channel-mean gap of " + std::to_string(min_tint_gap));
}

std::vector<long> toy_counts(const ToySpec& spec) {
  spec.validate();
  const std::size_t nc = spec.classes.size(), ns = spec.sites.size();
  std::vector<long> counts(nc * ns, 0);
  for (std::size_t c = 0; c < nc; ++c) {
    std::vector<char> home(ns, 0);
    double homes = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      home[s] = nc <= ns ? s % nc == c : s == c % ns;
      homes += home[s];
    }
    std::vector<double> quota(ns);
    long assigned = 0;
    for (std::size_t s = 0; s < ns; ++s) {
      const double w = spec.correlation * (home[s] ? 1.0 / homes : 0.0) + (1.0 - spec.correlation) / static_cast<double>(ns);
      quota[s] = w * spec.patches_per_class;
      counts[c * ns + s] = static_cast<long>(std::floor(quota[s] + 1e-9));
      assigned += counts[c * ns + s];
    }
    std::vector<std::size_t> order(ns);
    for (std::size_t s = 0; s < ns; ++s) order[s] = s;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return quota[a] - std::floor(quota[a] + 1e-9) > quota[b] - std::floor(quota[b] + 1e-9) + 1e-12;
    });
    for (std::size_t i = 0; assigned < spec.patches_per_class; ++i, ++assigned) ++counts[c * ns + order[i % ns]];
  }
  return counts;
}

std::array<double, 3> site_tint(const ToySpec& spec, std::size_t site_index) {
  const double tau = 2.0 * std::numbers::pi;
  const double hue = tau * static_cast<double>(site_index) / static_cast<double>(spec.sites.size());
  std::array<double, 3> t{};
  for (int c = 0; c < 3; ++c) t[c] = 1.0 + spec.tint_strength * std::cos(hue + tau * c / 3.0);
  return t;
}

registry::DatasetManifest toy_records(const ToySpec& spec) {
  const auto counts = toy_counts(spec);
  const std::size_t ns = spec.sites.size();
  std::mt19937_64 rng(derive_seed(spec.seed, "toy-metadata"));
  std::uniform_int_distribution<std::size_t> race(0, spec.races.size() - 1), gender(0, spec.genders.size() - 1);
  std::uniform_int_distribution<int> age(30, 85);
  std::vector<registry::PatchRecord> records;
  long patient = 0;
  for (std::size_t c = 0; c < spec.classes.size(); ++c)
    for (std::size_t s = 0; s < ns; ++s) {
      const long n = counts[c * ns + s];
      registry::PatchRecord proto;
      for (long i = 0; i < n; ++i) {
        if (i % spec.patches_per_patient == 0) {
          proto.patient_id = "p" + std::to_string(patient++);
          proto.race = spec.races[race(rng)];
          proto.gender = spec.genders[gender(rng)];
          proto.age = age(rng);
        }
        registry::PatchRecord r = proto;
        r.class_label = spec.classes[c];
        r.site = spec.sites[s];
        r.patch_id = spec.classes[c] + "-" + spec.sites[s] + "-" + std::to_string(i);
        r.image_ref = "images/" + r.patch_id + ".ppm";
        records.push_back(std::move(r));
      }
    }
  return registry::make_manifest(std::move(records));
}

registry::DatasetManifest generate_toy_dataset(const ToySpec& spec, const std::filesystem::path& dir) {
  auto manifest = toy_records(spec);
  manifest.base_dir = dir;
  std::filesystem::create_directories(dir / "images");
  const int size = spec.image_size;
  std::map<std::string, std::size_t> class_index, site_index;
  for (std::size_t i = 0; i < spec.classes.size(); ++i) class_index[spec.classes[i]] = i;
  for (std::size_t i = 0; i < spec.sites.size(); ++i) site_index[spec.sites[i]] = i;
  for (const auto& r : manifest.records) {
    std::mt19937_64 rng(derive_seed(spec.seed, r.patch_id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, spec.noise);
    const std::size_t k = class_index.at(r.class_label);
    const int kind = static_cast<int>(k % 6);
    const double freq = (2.0 + static_cast<double>(k / 6)) * (0.9 + 0.2 * unit(rng));
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double cx = 0.4 + 0.2 * unit(rng), cy = 0.4 + 0.2 * unit(rng);
    const double radius = 0.22 + 0.12 * unit(rng);
    const auto tint = site_tint(spec, site_index.at(r.site));
    image::Image img{size, size, std::vector<std::uint8_t>(static_cast<std::size_t>(size * size * 3))};
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double base = kBaseLow + kBaseSpan * pattern(kind, freq, phase, cx, cy, radius, x, y, size);
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(base * tint[c] + noise(rng), 0.0, 1.0);
          img.rgb[static_cast<std::size_t>((y * size + x) * 3 + c)] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
      }
    image::write_ppm(img, manifest.image_path(r));
  }
  registry::save_manifest(manifest, dir / "manifest.tsv");
  return manifest;
}

}  // namespace medi::pipeline
