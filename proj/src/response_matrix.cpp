#include "adaptest/response_matrix.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include "csv.hpp"

namespace adaptest {

ResponseMatrix::ResponseMatrix(std::vector<std::string> persons_, std::vector<std::string> items_)
    : persons(std::move(persons_)),
      items(std::move(items_)),
      kinds(items.size(), ItemKind::scored),
      cells(persons.size() * items.size(), Cell::missing) {}

std::optional<std::size_t> ResponseMatrix::item_index(const std::string& item_id) const {
  const auto it = std::find(items.begin(), items.end(), item_id);
  if (it == items.end()) return std::nullopt;
  return static_cast<std::size_t>(it - items.begin());
}

void ResponseMatrix::validate() const {
  if (kinds.size() != items.size() || cells.size() != persons.size() * items.size()) {
    throw Error(ErrorCode::validation, "response matrix dimensions are inconsistent");
  }
  std::set<std::string> seen;
  for (const auto& id : items) {
    if (id.empty()) throw Error(ErrorCode::validation, "empty item id in response matrix");
    if (!seen.insert(id).second) throw Error(ErrorCode::validation, "duplicate item column '" + id + "'");
  }
  seen.clear();
  for (const auto& id : persons) {
    if (!seen.insert(id).second) throw Error(ErrorCode::validation, "duplicate person '" + id + "'");
  }
}

void apply_item_kinds(ResponseMatrix& matrix, const ItemBank& bank) {
  matrix.kinds.resize(matrix.items.size());
  for (std::size_t i = 0; i < matrix.items.size(); ++i) {
    const auto idx = bank.find(matrix.items[i]);
    if (!idx) {
      throw Error(ErrorCode::validation, "item '" + matrix.items[i] + "' is not in bank '" + bank.bank_id + "'");
    }
    matrix.kinds[i] = bank.items[*idx].kind;
  }
}

ResponseMatrix read_response_matrix(const std::filesystem::path& path) {
  const auto rows = csv::read_rows(path.string());
  if (rows.empty()) throw Error(ErrorCode::validation, "response matrix is empty");
  const auto& header = rows.front();
  if (header.empty() || header.front() != "person_id") {
    throw Error(ErrorCode::validation, "response matrix header must start with person_id");
  }
  std::vector<std::string> persons;
  for (std::size_t r = 1; r < rows.size(); ++r) persons.push_back(rows[r].front());
  ResponseMatrix m(std::move(persons), std::vector<std::string>(header.begin() + 1, header.end()));
  m.validate();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw Error(ErrorCode::validation, "line " + std::to_string(r + 1) + ": expected " +
                                             std::to_string(header.size()) + " fields");
    }
    for (std::size_t i = 1; i < row.size(); ++i) {
      const auto& v = row[i];
      Cell c;
      if (v == "1") {
        c = Cell::correct;
      } else if (v == "0") {
        c = Cell::incorrect;
      } else if (v == "NA" || v.empty()) {
        c = Cell::missing;
      } else {
        throw Error(ErrorCode::validation, "line " + std::to_string(r + 1) + ": invalid cell '" + v + "'");
      }
      m.set(r - 1, i - 1, c);
    }
  }
  return m;
}

void write_response_matrix(const ResponseMatrix& matrix, std::ostream& out) {
  out << "person_id";
  for (const auto& id : matrix.items) out << ',' << id;
  out << '\n';
  for (std::size_t p = 0; p < matrix.n_persons(); ++p) {
    out << matrix.persons[p];
    for (std::size_t i = 0; i < matrix.n_items(); ++i) {
      switch (matrix.at(p, i)) {
        case Cell::correct: out << ",1"; break;
        case Cell::incorrect: out << ",0"; break;
        case Cell::missing: out << ",NA"; break;
      }
    }
    out << '\n';
  }
}

void save_response_matrix(const ResponseMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  write_response_matrix(matrix, out);
}

}  // namespace adaptest
