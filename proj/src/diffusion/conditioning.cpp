#include "medi/diffusion/conditioning.hpp"

#include "medi/error.hpp"

namespace medi::diffusion {

void ConditioningSpec::validate() const {
  if (d_t <= 0 || d_class <= 0) throw ConfigError("conditioning widths must be positive");
  if (meta_attributes.size() != meta_cardinalities.size())
    throw ConfigError("conditioning spec: " + std::to_string(meta_attributes.size()) + " metadata attributes but " +
                      std::to_string(meta_cardinalities.size()) + " cardinalities");
  if (k() > 0 && d_e <= 0) throw ConfigError("conditioning spec: d_e must be positive when k > 0");
  if (d_class + k() * d_e != d_t)
    throw ConfigError("conditioning spec violates d_class + k*d_e = d_t: " + std::to_string(d_class) + " + " +
                      std::to_string(k()) + "*" + std::to_string(d_e) + " = " + std::to_string(d_class + k() * d_e) +
                      " != " + std::to_string(d_t));
  if (class_cardinality <= 0) throw ConfigError("conditioning spec: class cardinality must be positive");
  for (std::size_t i = 0; i < meta_cardinalities.size(); ++i)
    if (meta_cardinalities[i] <= 0)
      throw ConfigError("conditioning spec: attribute '" + meta_attributes[i] + "' has no categories");
}

ConditioningSpec ConditioningSpec::class_only_spec(int d_t, int class_cardinality) {
  ConditioningSpec s;
  s.d_class = d_t;
  s.d_t = d_t;
  s.class_cardinality = class_cardinality;
  return s;
}

template <typename T>
EmbeddingTables<T>::EmbeddingTables(const ConditioningSpec& spec) : spec_(spec) {
  spec_.validate();
  class_table_ = nn::Embedding<T>("cond.class", spec.class_cardinality, spec.d_class);
  for (int i = 0; i < spec.k(); ++i)
    meta_tables_.emplace_back("cond." + spec.meta_attributes[static_cast<std::size_t>(i)],
                              spec.meta_cardinalities[static_cast<std::size_t>(i)], spec.d_e);
}

template <typename T>
void EmbeddingTables<T>::init(std::mt19937_64& rng, T stddev) {
  nn::init_normal(class_table_.table, stddev, rng);
  for (auto& t : meta_tables_) nn::init_normal(t.table, stddev, rng);
}

template <typename T>
void EmbeddingTables<T>::check(const Condition& cond) const {
  if (static_cast<int>(cond.meta_ids.size()) != spec_.k())
    throw Error("conditioning expects " + std::to_string(spec_.k()) + " metadata ids, got " +
                std::to_string(cond.meta_ids.size()));
  if (cond.class_id < 0 || cond.class_id >= spec_.class_cardinality)
    throw Error("class id " + std::to_string(cond.class_id) + " outside [0, " +
                std::to_string(spec_.class_cardinality) + ")");
  for (int i = 0; i < spec_.k(); ++i) {
    const int id = cond.meta_ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= spec_.meta_cardinalities[static_cast<std::size_t>(i)])
      throw Error(spec_.meta_attributes[static_cast<std::size_t>(i)] + " id " + std::to_string(id) + " outside [0, " +
                  std::to_string(spec_.meta_cardinalities[static_cast<std::size_t>(i)]) + ")");
  }
}

template <typename T>
Vec<T> EmbeddingTables<T>::build(const Condition& cond) const {
  check(cond);
  Vec<T> z(spec_.d_t);
  z.head(spec_.d_class) = class_table_.table.value.row(cond.class_id).transpose();
  for (int i = 0; i < spec_.k(); ++i)
    z.segment(spec_.d_class + i * spec_.d_e, spec_.d_e) =
        meta_tables_[static_cast<std::size_t>(i)].table.value.row(cond.meta_ids[static_cast<std::size_t>(i)]).transpose();
  return z;
}

template <typename T>
Mat<T> EmbeddingTables<T>::build(std::span<const Condition> conds) const {
  Mat<T> z(spec_.d_t, static_cast<Eigen::Index>(conds.size()));
  for (std::size_t j = 0; j < conds.size(); ++j) z.col(static_cast<Eigen::Index>(j)) = build(conds[j]);
  return z;
}

template <typename T>
void EmbeddingTables<T>::backward(std::span<const Condition> conds, const Mat<T>& grad_out) {
  std::vector<int> ids(conds.size());
  for (std::size_t j = 0; j < conds.size(); ++j) ids[j] = conds[j].class_id;
  class_table_.backward(ids, grad_out.topRows(spec_.d_class));
  for (int i = 0; i < spec_.k(); ++i) {
    for (std::size_t j = 0; j < conds.size(); ++j) ids[j] = conds[j].meta_ids[static_cast<std::size_t>(i)];
    meta_tables_[static_cast<std::size_t>(i)].backward(ids, grad_out.middleRows(spec_.d_class + i * spec_.d_e, spec_.d_e));
  }
}

template <typename T>
std::vector<nn::Param<T>*> EmbeddingTables<T>::params() {
  std::vector<nn::Param<T>*> out{&class_table_.table};
  for (auto& t : meta_tables_) out.push_back(&t.table);
  return out;
}

template <typename T>
Mat<T> combine_with_timestep(const Mat<T>& z_t, const Mat<T>& z_cond) {
  if (z_t.rows() != z_cond.rows() || z_t.cols() != z_cond.cols())
    throw Error("cannot add conditioning of width " + std::to_string(z_cond.rows()) + " to timestep embedding of width " +
                std::to_string(z_t.rows()) + "; d_class + k*d_e must equal d_t");
  return z_t + z_cond;
}

template class EmbeddingTables<float>;
template class EmbeddingTables<double>;
template Mat<float> combine_with_timestep<float>(const Mat<float>&, const Mat<float>&);
template Mat<double> combine_with_timestep<double>(const Mat<double>&, const Mat<double>&);

}  // namespace medi::diffusion
