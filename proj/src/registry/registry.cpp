#include "medi/registry.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

namespace medi::registry {

namespace {

const std::vector<std::string> kRequiredColumns{"patch_id", "image_ref", "patient_id", "class",
                                                "site",     "race",      "gender",     "age"};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string or_unknown(std::string v) { return v.empty() ? std::string(kUnknown) : v; }

}  // namespace

const std::string& PatchRecord::attribute(const std::string& name) const {
  if (name == "class") return class_label;
  if (name == "site") return site;
  if (name == "race") return race;
  if (name == "gender") return gender;
  throw Error("unknown categorical attribute '" + name + "'");
}

Vocabulary::Vocabulary(std::string attribute, std::vector<std::string> observed) : attribute_(std::move(attribute)) {
  std::sort(observed.begin(), observed.end());
  observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
  const auto unk = std::find(observed.begin(), observed.end(), kUnknown);
  const bool has_unknown = unk != observed.end();
  if (has_unknown) observed.erase(unk);
  values_ = std::move(observed);
  if (has_unknown) values_.emplace_back(kUnknown);
  for (std::size_t i = 0; i < values_.size(); ++i) index_.emplace(values_[i], static_cast<int>(i));
}

int Vocabulary::id_of(const std::string& value) const {
  const auto it = index_.find(value);
  if (it == index_.end()) throw Error("value '" + value + "' not in " + attribute_ + " vocabulary");
  return it->second;
}

const std::string& Vocabulary::value_of(int id) const {
  if (id < 0 || id >= size())
    throw Error(attribute_ + " id " + std::to_string(id) + " outside [0, " + std::to_string(size()) + ")");
  return values_[static_cast<std::size_t>(id)];
}

MetadataSchema MetadataSchema::from_records(const std::vector<PatchRecord>& records) {
  MetadataSchema s;
  for (const auto& attr : categorical_attributes()) {
    std::vector<std::string> values;
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(r.attribute(attr));
    s.vocabs_.emplace(attr, Vocabulary(attr, std::move(values)));
  }
  return s;
}

const Vocabulary& MetadataSchema::vocabulary(const std::string& attribute) const {
  const auto it = vocabs_.find(attribute);
  if (it == vocabs_.end()) throw Error("unknown attribute '" + attribute + "'");
  return it->second;
}

std::filesystem::path DatasetManifest::image_path(const PatchRecord& r) const {
  std::filesystem::path p(r.image_ref);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

DatasetManifest make_manifest(std::vector<PatchRecord> records, std::filesystem::path base_dir) {
  std::unordered_set<std::string> seen;
  seen.reserve(records.size());
  for (const auto& r : records) {
    if (r.class_label.empty() || r.class_label == kUnknown)
      throw ManifestError("record '" + r.patch_id + "' has no class label");
    if (r.site.empty() || (r.site == kUnknown && !r.synthetic))
      throw ManifestError("record '" + r.patch_id + "' has no site");
    if (!seen.insert(r.patch_id).second) throw ManifestError("duplicate patch_id '" + r.patch_id + "'");
  }
  DatasetManifest m;
  m.schema = MetadataSchema::from_records(records);
  m.records = std::move(records);
  m.base_dir = std::move(base_dir);
  return m;
}

DatasetManifest subset_manifest(const DatasetManifest& parent, std::vector<PatchRecord> records) {
  DatasetManifest m;
  m.records = std::move(records);
  m.schema = parent.schema;
  m.base_dir = parent.base_dir;
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ManifestError(path.string() + ": empty file, expected a header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_tabs(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& name : kRequiredColumns)
    if (!col.contains(name)) throw ManifestError(path.string() + ": missing required column '" + name + "'");
  const bool has_synthetic = col.contains("synthetic");

  std::vector<PatchRecord> records;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != header.size())
      throw ManifestError(where + "expected " + std::to_string(header.size()) + " fields, found " +
                          std::to_string(fields.size()));
    PatchRecord r;
    r.patch_id = fields[col["patch_id"]];
    r.image_ref = fields[col["image_ref"]];
    r.patient_id = fields[col["patient_id"]];
    r.class_label = fields[col["class"]];
    r.site = fields[col["site"]];
    r.race = or_unknown(fields[col["race"]]);
    r.gender = or_unknown(fields[col["gender"]]);
    if (has_synthetic) {
      const auto& s = fields[col["synthetic"]];
      r.synthetic = s == "1" || s == "true";
    }
    if (r.patch_id.empty()) throw ManifestError(where + "empty patch_id");
    if (r.class_label.empty()) throw ManifestError(where + "empty class");
    if (r.site.empty()) throw ManifestError(where + "empty site");
    const auto& age = fields[col["age"]];
    if (!age.empty() && age != kUnknown) {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(age.data(), age.data() + age.size(), v);
      if (ec != std::errc() || ptr != age.data() + age.size() || v < 0)
        throw ManifestError(where + "age '" + age + "' is not a non-negative integer");
      r.age = v;
    }
    if (!seen.insert(r.patch_id).second) throw ManifestError(where + "duplicate patch_id '" + r.patch_id + "'");
    records.push_back(std::move(r));
  }
  return make_manifest(std::move(records), path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  // Relative refs are rewritten against the new location so the file
  // resolves the same images wherever it is saved.
  const auto dest = std::filesystem::absolute(path).parent_path();
  auto ref_for = [&](const PatchRecord& r) -> std::string {
    if (manifest.base_dir.empty() || std::filesystem::path(r.image_ref).is_absolute()) return r.image_ref;
    const auto resolved = std::filesystem::absolute(manifest.base_dir / r.image_ref).lexically_normal();
    const auto rel = resolved.lexically_relative(dest);
    return rel.empty() ? resolved.string() : rel.generic_string();
  };
  out << "patch_id\timage_ref\tpatient_id\tclass\tsite\trace\tgender\tage\tsynthetic\n";
  for (const auto& r : manifest.records) {
    out << r.patch_id << '\t' << ref_for(r) << '\t' << r.patient_id << '\t' << r.class_label << '\t' << r.site
        << '\t' << r.race << '\t' << r.gender << '\t' << (r.age ? std::to_string(*r.age) : std::string()) << '\t'
        << (r.synthetic ? "1" : "0") << '\n';
  }
  if (!out) throw ManifestError("write failed for manifest " + path.string());
}

long CoverageMatrix::total() const {
  long s = 0;
  for (auto c : counts) s += c;
  return s;
}

std::size_t CoverageMatrix::nonzero_cells() const {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](long c) { return c != 0; }));
}

CoverageMatrix coverage_matrix(const DatasetManifest& manifest, const std::string& attribute) {
  if (attribute == "class" || !manifest.schema.has_attribute(attribute))
    throw Error("unknown metadata attribute '" + attribute + "'");
  const auto& rows = manifest.schema.vocabulary("class");
  const auto& cols = manifest.schema.vocabulary(attribute);
  CoverageMatrix m;
  m.attribute = attribute;
  m.row_labels = rows.values();
  m.col_labels = cols.values();
  m.counts.assign(m.row_labels.size() * m.col_labels.size(), 0);
  for (const auto& r : manifest.records)
    ++m.counts[static_cast<std::size_t>(rows.id_of(r.class_label)) * m.col_labels.size() +
               static_cast<std::size_t>(cols.id_of(r.attribute(attribute)))];
  return m;
}

void write_coverage_table(const CoverageMatrix& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write coverage table " + path.string());
  out << "class";
  for (const auto& c : m.col_labels) out << '\t' << c;
  out << '\n';
  for (std::size_t r = 0; r < m.row_labels.size(); ++r) {
    out << m.row_labels[r];
    for (std::size_t c = 0; c < m.col_labels.size(); ++c) out << '\t' << m.at(r, c);
    out << '\n';
  }
}

DatasetStats summarize(const DatasetManifest& manifest) {
  DatasetStats s;
  std::unordered_set<std::string> patients;
  for (const auto& r : manifest.records) {
    patients.insert(r.patient_id);
    ++s.per_class[r.class_label];
    if (r.synthetic) ++s.synthetic_patches;
  }
  s.patients = patients.size();
  s.patches = manifest.records.size();
  for (const auto& attr : categorical_attributes())
    s.cardinalities[attr] = manifest.schema.has_attribute(attr) ? manifest.schema.cardinality(attr) : 0;
  return s;
}

std::string format_stats(const DatasetStats& stats) {
  std::ostringstream o;
  o << "patients\t" << stats.patients << '\n' << "patches\t" << stats.patches << '\n';
  if (stats.synthetic_patches) o << "synthetic\t" << stats.synthetic_patches << '\n';
  for (const auto& [attr, n] : stats.cardinalities) o << "cardinality." << attr << '\t' << n << '\n';
  for (const auto& [cls, n] : stats.per_class) o << "class." << cls << '\t' << n << '\n';
  return o.str();
}

std::string schema_fingerprint(const std::vector<std::vector<std::string>>& vocabularies) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& vocab : vocabularies) {
    for (const auto& v : vocab) {
      for (unsigned char c : v) mix(c);
      mix(0x1f);
    }
    mix(0x1e);
  }
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

std::string schema_fingerprint(const MetadataSchema& schema, const std::vector<std::string>& attributes) {
  std::vector<std::vector<std::string>> vocabs;
  for (const auto& a : attributes) vocabs.push_back(schema.vocabulary(a).values());
  return schema_fingerprint(vocabs);
}

DatasetManifest remap_attribute(const DatasetManifest& manifest, const std::string& attribute,
                                const std::map<std::string, std::string>& mapping) {
  if (attribute == "class" || !manifest.schema.has_attribute(attribute))
    throw Error("cannot remap attribute '" + attribute + "'");
  std::vector<PatchRecord> records = manifest.records;
  for (auto& r : records) {
    std::string& field = attribute == "site" ? r.site : attribute == "race" ? r.race : r.gender;
    if (const auto it = mapping.find(field); it != mapping.end()) field = it->second;
  }
  return make_manifest(std::move(records), manifest.base_dir);
}

}  // namespace medi::registry
