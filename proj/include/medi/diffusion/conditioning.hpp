#pragma once

#include "medi/diffusion/layers.hpp"

#include <string>
#include <vector>

namespace medi::diffusion {

// Widths and vocabulary sizes of the class + metadata conditioning.
// The class embedding (d_class) and the k metadata embeddings (d_e each)
// are concatenated and added to the timestep embedding, so
// d_class + k * d_e must equal d_t. k = 0 is the class-only model.
struct ConditioningSpec {
  int d_class = 0;
  int d_e = 0;
  int d_t = 0;
  int class_cardinality = 0;
  std::vector<std::string> meta_attributes;  // e.g. {"site"}; size k
  std::vector<int> meta_cardinalities;

  int k() const { return static_cast<int>(meta_attributes.size()); }
  bool class_only() const { return meta_attributes.empty(); }

  // Throws ConfigError unless the spec is internally consistent.
  void validate() const;

  // Class-only spec: d_class = d_t.
  static ConditioningSpec class_only_spec(int d_t, int class_cardinality);

  bool operator==(const ConditioningSpec&) const = default;
};

// One conditioning tuple: class id plus one id per metadata attribute.
struct Condition {
  int class_id = 0;
  std::vector<int> meta_ids;

  bool operator==(const Condition&) const = default;
  auto operator<=>(const Condition&) const = default;
};

template <typename T>
class EmbeddingTables {
 public:
  EmbeddingTables() = default;
  explicit EmbeddingTables(const ConditioningSpec& spec);

  const ConditioningSpec& spec() const { return spec_; }

  // Zero-mean Gaussian init.
  void init(std::mt19937_64& rng, T stddev = T(0.02));

  // concat(z_class, z_meta_1, ..., z_meta_k) for a single tuple.
  Vec<T> build(const Condition& cond) const;
  // Batched version, one column per tuple (d_t x N).
  Mat<T> build(std::span<const Condition> conds) const;
  void backward(std::span<const Condition> conds, const Mat<T>& grad_out);

  nn::Embedding<T>& class_table() { return class_table_; }
  const nn::Embedding<T>& class_table() const { return class_table_; }
  nn::Embedding<T>& meta_table(int i) { return meta_tables_.at(static_cast<std::size_t>(i)); }
  const nn::Embedding<T>& meta_table(int i) const { return meta_tables_.at(static_cast<std::size_t>(i)); }

  std::vector<nn::Param<T>*> params();

 private:
  void check(const Condition& cond) const;

  ConditioningSpec spec_;
  nn::Embedding<T> class_table_;
  std::vector<nn::Embedding<T>> meta_tables_;
};

template <typename T>
Vec<T> build_conditioning(const Condition& cond, const EmbeddingTables<T>& tables) {
  return tables.build(cond);
}

// z_final = z_t + z_cond. Throws when the widths differ.
template <typename T>
Mat<T> combine_with_timestep(const Mat<T>& z_t, const Mat<T>& z_cond);

}  // namespace medi::diffusion
