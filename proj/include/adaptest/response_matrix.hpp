#pragma once

// Person x item response matrices from test tryouts.
//
// File format: CSV whose header is `person_id` followed by one column per
// item id; cells are 0, 1 or NA (an empty cell also counts as missing).

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adaptest/item_bank.hpp"

namespace adaptest {

enum class Cell : std::int8_t { missing = -1, incorrect = 0, correct = 1 };

struct ResponseMatrix {
  std::vector<std::string> persons;
  std::vector<std::string> items;
  /// Defaults to scored; set from a bank with apply_item_kinds.
  std::vector<ItemKind> kinds;
  std::vector<Cell> cells;  // row-major, persons x items

  ResponseMatrix() = default;
  ResponseMatrix(std::vector<std::string> persons, std::vector<std::string> items);

  std::size_t n_persons() const { return persons.size(); }
  std::size_t n_items() const { return items.size(); }
  Cell at(std::size_t person, std::size_t item) const { return cells[person * items.size() + item]; }
  void set(std::size_t person, std::size_t item, Cell c) { cells[person * items.size() + item] = c; }
  std::optional<std::size_t> item_index(const std::string& item_id) const;

  /// Throws Error(validation) on inconsistent dimensions or duplicate ids.
  void validate() const;

  friend bool operator==(const ResponseMatrix&, const ResponseMatrix&) = default;
};

/// Copies item kinds from the bank. Columns absent from the bank are an error.
void apply_item_kinds(ResponseMatrix& matrix, const ItemBank& bank);

ResponseMatrix read_response_matrix(const std::filesystem::path& path);
void write_response_matrix(const ResponseMatrix& matrix, std::ostream& out);
void save_response_matrix(const ResponseMatrix& matrix, const std::filesystem::path& path);

}  // namespace adaptest
