#pragma once

// Item and item-bank data model, the JSON bank file format, validation and a
// synthetic bank generator.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "adaptest/error.hpp"
#include "adaptest/irt.hpp"

namespace adaptest {

enum class ItemKind { scored, unscored_normal };
enum class TestFamily { vlat_like, calvi_like, custom };

std::string_view to_string(ItemKind kind);
std::string_view to_string(TestFamily family);
ItemKind item_kind_from_string(std::string_view s);
TestFamily test_family_from_string(std::string_view s);

struct Stimulus {
  std::string image_ref;
  std::string alt_text;
  friend bool operator==(const Stimulus&, const Stimulus&) = default;
};

struct Item {
  std::string item_id;
  ItemKind kind = ItemKind::scored;
  std::optional<ItemParams> params;  // present iff kind == scored
  std::map<std::string, std::string> features;  // dimension -> value
  Stimulus stimulus;
  std::string question;
  std::vector<std::string> options;
  int correct_index = 0;
  bool has_cbi_option = false;

  bool scored() const noexcept { return kind == ItemKind::scored; }
  friend bool operator==(const Item&, const Item&) = default;
};

struct ThetaPrior {
  double mean = 0.0;
  double sd = 1.0;
  friend bool operator==(const ThetaPrior&, const ThetaPrior&) = default;
};

struct BankViolation {
  std::string item_id;  // empty for bank-level rules
  std::string rule;
  std::string message;
  friend bool operator==(const BankViolation&, const BankViolation&) = default;
};

class BankValidationError : public Error {
 public:
  explicit BankValidationError(std::vector<BankViolation> violations);
  const std::vector<BankViolation>& violations() const noexcept { return violations_; }

 private:
  std::vector<BankViolation> violations_;
};

struct ItemBank {
  std::string bank_id;
  TestFamily test_family = TestFamily::custom;
  ThetaPrior theta_prior;
  std::vector<std::string> covering_dimensions;
  std::map<std::string, std::vector<std::string>> vocabularies;
  std::vector<Item> items;
  std::optional<std::vector<std::string>> static_reference_ids;

  /// Index of an item id, or nullopt.
  std::optional<std::size_t> find(std::string_view item_id) const;
  const Item& at(std::string_view item_id) const;

  std::size_t scored_count() const;
  /// Sum of vocabulary sizes over covering dimensions.
  std::size_t coverage_feature_count() const;

  /// Rebuilds the id index; call after mutating `items`.
  void reindex();

  friend bool operator==(const ItemBank& a, const ItemBank& b) {
    return a.bank_id == b.bank_id && a.test_family == b.test_family &&
           a.theta_prior == b.theta_prior && a.covering_dimensions == b.covering_dimensions &&
           a.vocabularies == b.vocabularies && a.items == b.items &&
           a.static_reference_ids == b.static_reference_ids;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

namespace vocab {
inline constexpr std::string_view kChartType = "chart_type";
inline constexpr std::string_view kTask = "task";
inline constexpr std::string_view kMisleader = "misleader";

const std::vector<std::string>& chart_types();  // 12
const std::vector<std::string>& tasks();        // 8
const std::vector<std::string>& misleaders();   // 11
}  // namespace vocab

std::vector<BankViolation> validate_bank(const ItemBank& bank);

/// Parses and validates. Strict mode rejects unknown keys.
ItemBank bank_from_json(const nlohmann::json& j, bool lenient = false);
nlohmann::json bank_to_json(const ItemBank& bank);

ItemBank load_bank(const std::filesystem::path& path, bool lenient = false);
void save_bank(const ItemBank& bank, const std::filesystem::path& path);
/// Canonical serialization (2-space indent, trailing newline).
std::string dump_bank(const ItemBank& bank);

const std::vector<std::string>& feature_values(const ItemBank& bank, std::string_view dimension);

struct SynthSpec {
  TestFamily family = TestFamily::vlat_like;
  std::size_t n_scored = 53;
  std::size_t n_unscored = 0;
  std::size_t n_cbi_unscored = 0;
  /// Dimension -> vocabulary; empty means the family's canonical vocabularies.
  std::vector<std::pair<std::string, std::vector<std::string>>> dimensions;
  double log_discrimination_mean = 0.0;  // a ~ LogNormal(mean, sd)
  double log_discrimination_sd = 0.5;
  double easiness_mean = 0.0;  // b ~ Normal(mean, sd)
  double easiness_sd = 1.0;
  ThetaPrior theta_prior;
  std::size_t static_reference_size = 0;  // 0 -> every scored item

  static SynthSpec vlat_defaults();
  static SynthSpec calvi_defaults();
};

ItemBank synth_bank(std::uint64_t seed, const SynthSpec& spec);

}  // namespace adaptest
