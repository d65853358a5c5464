#pragma once

#include "medi/error.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace medi::registry {

inline constexpr const char* kUnknown = "UNKNOWN";

// Categorical attributes carried by every record. "class" is the label;
// the others are metadata that can be used for conditioning or splitting.
inline const std::vector<std::string>& categorical_attributes() {
  static const std::vector<std::string> attrs{"class", "site", "race", "gender"};
  return attrs;
}

struct PatchRecord {
  std::string patch_id;
  std::string image_ref;
  std::string patient_id;
  std::string class_label;
  std::string site;
  std::string race = kUnknown;
  std::string gender = kUnknown;
  std::optional<int> age;
  bool synthetic = false;

  // Value of a categorical attribute by name; throws for unknown names.
  const std::string& attribute(const std::string& name) const;
  bool operator==(const PatchRecord&) const = default;
};

// Ordered category list for one attribute. Observed values are sorted
// lexicographically; UNKNOWN, when present, is the last id.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::string attribute, std::vector<std::string> observed);

  const std::string& attribute() const { return attribute_; }
  int size() const { return static_cast<int>(values_.size()); }
  const std::vector<std::string>& values() const { return values_; }

  bool contains(const std::string& value) const { return index_.contains(value); }
  int id_of(const std::string& value) const;
  const std::string& value_of(int id) const;

  bool operator==(const Vocabulary& o) const { return attribute_ == o.attribute_ && values_ == o.values_; }

 private:
  std::string attribute_;
  std::vector<std::string> values_;
  std::unordered_map<std::string, int> index_;
};

class MetadataSchema {
 public:
  static MetadataSchema from_records(const std::vector<PatchRecord>& records);

  const Vocabulary& vocabulary(const std::string& attribute) const;
  bool has_attribute(const std::string& attribute) const { return vocabs_.contains(attribute); }
  int cardinality(const std::string& attribute) const { return vocabulary(attribute).size(); }
  // Number of metadata attributes (everything except "class").
  int attribute_count() const { return static_cast<int>(vocabs_.size()) - 1; }

  bool operator==(const MetadataSchema&) const = default;

 private:
  std::map<std::string, Vocabulary> vocabs_;
};

struct DatasetManifest {
  std::vector<PatchRecord> records;
  MetadataSchema schema;
  std::filesystem::path base_dir;  // image_ref paths resolve against this

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  std::filesystem::path image_path(const PatchRecord& r) const;
};

// Builds a manifest (and its schema) from in-memory records. Throws on
// duplicate patch ids or missing class/site.
DatasetManifest make_manifest(std::vector<PatchRecord> records, std::filesystem::path base_dir = {});

// Same records, but keeps `schema` instead of rebuilding it, so ids agree
// with a parent manifest.
DatasetManifest subset_manifest(const DatasetManifest& parent, std::vector<PatchRecord> records);

// Tab-separated, header row: patch_id image_ref patient_id class site race
// gender age [synthetic]. Empty race/gender/age become UNKNOWN.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct CoverageMatrix {
  std::string attribute;
  std::vector<std::string> row_labels;  // classes
  std::vector<std::string> col_labels;  // attribute values
  std::vector<long> counts;             // row-major

  long at(std::size_t row, std::size_t col) const { return counts.at(row * col_labels.size() + col); }
  std::size_t cells() const { return counts.size(); }
  long total() const;
  std::size_t nonzero_cells() const;
};

CoverageMatrix coverage_matrix(const DatasetManifest& manifest, const std::string& attribute);
void write_coverage_table(const CoverageMatrix& m, const std::filesystem::path& path);

struct DatasetStats {
  std::size_t patients = 0;
  std::size_t patches = 0;
  std::size_t synthetic_patches = 0;
  std::map<std::string, std::size_t> per_class;
  std::map<std::string, int> cardinalities;
};

DatasetStats summarize(const DatasetManifest& manifest);
std::string format_stats(const DatasetStats& stats);

// Stable hash of the vocabularies of the given attributes; used to refuse
// sampling from a checkpoint against an incompatible manifest.
std::string schema_fingerprint(const std::vector<std::vector<std::string>>& vocabularies);
std::string schema_fingerprint(const MetadataSchema& schema, const std::vector<std::string>& attributes);

// Experiment-level regrouping of one attribute (e.g. site code -> center).
// Values without a mapping are kept as-is.
DatasetManifest remap_attribute(const DatasetManifest& manifest, const std::string& attribute,
                                const std::map<std::string, std::string>& mapping);

}  // namespace medi::registry
