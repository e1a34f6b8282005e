#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tensorcalc {

using Label = std::string;
using Labels = std::vector<Label>;

struct Index {
  Label label;
  std::int64_t dim = 1;

  friend bool operator==(const Index&, const Index&) = default;
};

// Ordered sequence of distinct index labels with bound extents. Set
// operations compare labels only; concatenation keeps order.
class IndexSet {
 public:
  IndexSet() = default;
  IndexSet(std::initializer_list<Index> indices);
  explicit IndexSet(std::vector<Index> indices);

  // Builds an index set from labels and matching extents.
  static IndexSet from(const Labels& labels, const std::vector<std::int64_t>& dims);

  std::size_t rank() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const Index& operator[](std::size_t i) const { return indices_[i]; }
  auto begin() const { return indices_.begin(); }
  auto end() const { return indices_.end(); }
  const std::vector<Index>& indices() const { return indices_; }

  Labels labels() const;
  std::vector<std::int64_t> dims() const;
  std::int64_t elements() const;

  bool contains(std::string_view label) const;
  std::optional<std::size_t> position(std::string_view label) const;
  std::int64_t dim_of(std::string_view label) const;

  // Concatenation s1s2; labels must be disjoint.
  IndexSet concat(const IndexSet& other) const;

  // "i:2,j:3" style text used in diagnostics and serialization.
  std::string to_string() const;

  friend bool operator==(const IndexSet&, const IndexSet&) = default;

 private:
  std::vector<Index> indices_;
};

// Splits a compact label string into labels: each label is one ASCII letter
// followed by any number of digits, so "ij" -> {i, j} and "i1j" -> {i1, j}.
Labels split_labels(std::string_view text);
std::string join_labels(const Labels& labels);

bool is_label_char_start(char c);

Labels labels_union(const Labels& a, const Labels& b);
bool labels_contain(const Labels& labels, std::string_view label);
bool has_duplicates(const Labels& labels);

}  // namespace tensorcalc
