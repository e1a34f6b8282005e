#include "tensorcalc/index.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "tensorcalc/error.hpp"

namespace tensorcalc {

IndexSet::IndexSet(std::initializer_list<Index> indices) : IndexSet(std::vector<Index>(indices)) {}

IndexSet::IndexSet(std::vector<Index> indices) : indices_(std::move(indices)) {
  std::set<Label> seen;
  for (const auto& idx : indices_) {
    if (idx.dim < 1) {
      throw Error(ErrorCode::DimMismatch, "index '" + idx.label + "' has non-positive extent");
    }
    if (!seen.insert(idx.label).second) {
      throw Error(ErrorCode::DuplicateIndex, "label '" + idx.label + "' repeated in index set");
    }
  }
}

IndexSet IndexSet::from(const Labels& labels, const std::vector<std::int64_t>& dims) {
  if (labels.size() != dims.size()) {
    throw Error(ErrorCode::DimMismatch, "label count " + std::to_string(labels.size()) +
                                            " does not match rank " + std::to_string(dims.size()));
  }
  std::vector<Index> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({labels[i], dims[i]});
  return IndexSet(std::move(out));
}

Labels IndexSet::labels() const {
  Labels out;
  out.reserve(indices_.size());
  for (const auto& idx : indices_) out.push_back(idx.label);
  return out;
}

std::vector<std::int64_t> IndexSet::dims() const {
  std::vector<std::int64_t> out;
  out.reserve(indices_.size());
  for (const auto& idx : indices_) out.push_back(idx.dim);
  return out;
}

std::int64_t IndexSet::elements() const {
  std::int64_t n = 1;
  for (const auto& idx : indices_) n *= idx.dim;
  return n;
}

bool IndexSet::contains(std::string_view label) const { return position(label).has_value(); }

std::optional<std::size_t> IndexSet::position(std::string_view label) const {
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i].label == label) return i;
  }
  return std::nullopt;
}

std::int64_t IndexSet::dim_of(std::string_view label) const {
  auto pos = position(label);
  if (!pos) throw Error(ErrorCode::BadOutputIndex, "label '" + std::string(label) + "' not in index set");
  return indices_[*pos].dim;
}

IndexSet IndexSet::concat(const IndexSet& other) const {
  std::vector<Index> out = indices_;
  out.insert(out.end(), other.indices_.begin(), other.indices_.end());
  return IndexSet(std::move(out));
}

std::string IndexSet::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (i) out += ',';
    out += indices_[i].label + ':' + std::to_string(indices_[i].dim);
  }
  return out;
}

bool is_label_char_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

Labels split_labels(std::string_view text) {
  Labels out;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (!is_label_char_start(c)) {
      throw Error(ErrorCode::SyntaxError, "invalid index label text '" + std::string(text) + "'");
    }
    std::size_t j = i + 1;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_labels(const Labels& labels) {
  std::string out;
  for (const auto& l : labels) out += l;
  return out;
}

Labels labels_union(const Labels& a, const Labels& b) {
  Labels out = a;
  for (const auto& l : b) {
    if (!labels_contain(out, l)) out.push_back(l);
  }
  return out;
}

bool labels_contain(const Labels& labels, std::string_view label) {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

bool has_duplicates(const Labels& labels) {
  std::set<Label> seen(labels.begin(), labels.end());
  return seen.size() != labels.size();
}

}  // namespace tensorcalc
