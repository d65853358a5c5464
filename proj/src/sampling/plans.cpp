#include "medi/sampling.hpp"

#include "medi/error.hpp"
#include "medi/random.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace medi::sampling {

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::frequency_matched: return "frequency_matched";
    case Provenance::uniform_class: return "uniform_class";
    case Provenance::cartesian_fill: return "cartesian_fill";
  }
  return "?";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "frequency_matched" || s == "frequency") return Provenance::frequency_matched;
  if (s == "uniform_class" || s == "uniform") return Provenance::uniform_class;
  if (s == "cartesian_fill" || s == "cartesian") return Provenance::cartesian_fill;
  throw ConfigError("unknown plan type '" + s + "' (expected frequency, uniform or cartesian)");
}

void SamplingPlan::validate() const {
  if (attributes.empty() || attributes.front() != "class") throw Error("plan attributes must start with 'class'");
  long sum = 0;
  for (const auto& e : entries) {
    if (e.count < 0) throw Error("plan entry with negative count");
    if (e.values.size() != attributes.size()) throw Error("plan entry arity does not match plan attributes");
    sum += e.count;
  }
  if (sum != total)
    throw Error("plan counts sum to " + std::to_string(sum) + " but total is " + std::to_string(total));
}

long SamplingPlan::count_of(const std::vector<std::string>& values) const {
  for (const auto& e : entries)
    if (e.values == values) return e.count;
  return 0;
}

nlohmann::json to_json(const SamplingPlan& plan) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : plan.entries) entries.push_back({{"values", e.values}, {"count", e.count}});
  return {{"provenance", to_string(plan.provenance)},
          {"seed", plan.seed},
          {"attributes", plan.attributes},
          {"total", plan.total},
          {"entries", entries}};
}

SamplingPlan plan_from_json(const nlohmann::json& j) {
  SamplingPlan p;
  p.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  p.seed = j.at("seed").get<std::uint64_t>();
  p.attributes = j.at("attributes").get<std::vector<std::string>>();
  p.total = j.at("total").get<long>();
  for (const auto& e : j.at("entries"))
    p.entries.push_back({e.at("values").get<std::vector<std::string>>(), e.at("count").get<long>()});
  p.validate();
  return p;
}

SamplingPlan frequency_matched_plan(const registry::DatasetManifest& train,
                                    const std::vector<std::string>& meta_attributes, std::uint64_t seed) {
  if (train.empty()) throw Error("frequency_matched_plan: empty manifest");
  SamplingPlan p;
  p.provenance = Provenance::frequency_matched;
  p.seed = seed;
  p.attributes = {"class"};
  for (const auto& a : meta_attributes) {
    if (a == "class") throw ConfigError("'class' cannot be a metadata attribute");
    if (!train.schema.has_attribute(a)) throw ConfigError("manifest has no attribute '" + a + "'");
    p.attributes.push_back(a);
  }
  std::map<std::vector<std::string>, long> counts;
  for (const auto& r : train.records) {
    std::vector<std::string> key;
    key.reserve(p.attributes.size());
    for (const auto& a : p.attributes) key.push_back(r.attribute(a));
    ++counts[key];
  }
  for (auto& [key, n] : counts) p.entries.push_back({key, n});
  p.total = static_cast<long>(train.size());
  return p;
}

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v, const char* what) {
  std::sort(v.begin(), v.end());
  if (std::adjacent_find(v.begin(), v.end()) != v.end()) throw Error(std::string("duplicate ") + what);
  return v;
}

}  // namespace

SamplingPlan uniform_class_plan(std::vector<std::string> classes, long total, std::uint64_t seed) {
  if (classes.empty()) throw Error("uniform_class_plan: empty class list");
  classes = sorted_unique(std::move(classes), "class in uniform_class_plan");
  const long n = static_cast<long>(classes.size());
  if (total < n)
    throw Error("uniform_class_plan: total " + std::to_string(total) + " is less than the class count " +
                std::to_string(n));
  SamplingPlan p;
  p.provenance = Provenance::uniform_class;
  p.seed = seed;
  p.attributes = {"class"};
  p.total = total;
  for (long i = 0; i < n; ++i)
    p.entries.push_back({{classes[static_cast<std::size_t>(i)]}, total / n + (i < total % n ? 1 : 0)});
  return p;
}

SamplingPlan cartesian_fill_plan(std::vector<std::string> classes, std::vector<std::string> sites, long total,
                                 std::uint64_t seed, std::size_t max_entries) {
  if (classes.empty() || sites.empty()) throw Error("cartesian_fill_plan: empty class or site list");
  classes = sorted_unique(std::move(classes), "class in cartesian_fill_plan");
  sites = sorted_unique(std::move(sites), "site in cartesian_fill_plan");
  const std::size_t cells = classes.size() * sites.size();
  if (cells > max_entries)
    throw Error("cartesian_fill_plan: " + std::to_string(classes.size()) + " x " + std::to_string(sites.size()) +
                " combinations exceed the cap of " + std::to_string(max_entries));
  const long n = static_cast<long>(cells);
  if (total < n)
    throw Error("cartesian_fill_plan: total " + std::to_string(total) + " is less than the " + std::to_string(n) +
                " combinations");
  SamplingPlan p;
  p.provenance = Provenance::cartesian_fill;
  p.seed = seed;
  p.attributes = {"class", "site"};
  p.total = total;
  long i = 0;
  for (const auto& c : classes)
    for (const auto& s : sites) {
      p.entries.push_back({{c, s}, total / n + (i < total % n ? 1 : 0)});
      ++i;
    }
  return p;
}

std::uint64_t image_seed(std::uint64_t plan_seed, const std::vector<std::string>& values, long index) {
  std::string key;
  for (const auto& v : values) {
    key += v;
    key += '\x1f';
  }
  return derive_seed(derive_seed(plan_seed, key), static_cast<std::uint64_t>(index));
}

}  // namespace medi::sampling
