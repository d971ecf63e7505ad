#include "adaptest/item_bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "adaptest/random.hpp"

namespace adaptest {

using nlohmann::json;

std::string_view to_string(ItemKind kind) {
  return kind == ItemKind::scored ? "scored" : "unscored_normal";
}

std::string_view to_string(TestFamily family) {
  switch (family) {
    case TestFamily::vlat_like: return "vlat_like";
    case TestFamily::calvi_like: return "calvi_like";
    case TestFamily::custom: return "custom";
  }
  return "custom";
}

ItemKind item_kind_from_string(std::string_view s) {
  if (s == "scored") return ItemKind::scored;
  if (s == "unscored_normal") return ItemKind::unscored_normal;
  throw Error(ErrorCode::validation, "unknown item kind '" + std::string(s) + "'");
}

TestFamily test_family_from_string(std::string_view s) {
  if (s == "vlat_like" || s == "vlat") return TestFamily::vlat_like;
  if (s == "calvi_like" || s == "calvi") return TestFamily::calvi_like;
  if (s == "custom") return TestFamily::custom;
  throw Error(ErrorCode::validation, "unknown test family '" + std::string(s) + "'");
}

namespace {

std::string join_messages(const std::vector<BankViolation>& violations) {
  std::string out = "bank validation failed";
  for (const auto& v : violations) {
    out += "\n  ";
    if (!v.item_id.empty()) out += "[" + v.item_id + "] ";
    out += v.rule + ": " + v.message;
  }
  return out;
}

}  // namespace

BankValidationError::BankValidationError(std::vector<BankViolation> violations)
    : Error(ErrorCode::validation, join_messages(violations)), violations_(std::move(violations)) {}

std::optional<std::size_t> ItemBank::find(std::string_view item_id) const {
  if (index_.size() != items.size()) {
    // Index is stale (bank built by hand); fall back to a scan.
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].item_id == item_id) return i;
    }
    return std::nullopt;
  }
  auto it = index_.find(std::string(item_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Item& ItemBank::at(std::string_view item_id) const {
  auto idx = find(item_id);
  if (!idx) throw Error(ErrorCode::not_found, "unknown item '" + std::string(item_id) + "'");
  return items[*idx];
}

std::size_t ItemBank::scored_count() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const Item& i) { return i.scored(); }));
}

std::size_t ItemBank::coverage_feature_count() const {
  std::size_t total = 0;
  for (const auto& dim : covering_dimensions) {
    auto it = vocabularies.find(dim);
    if (it != vocabularies.end()) total += it->second.size();
  }
  return total;
}

void ItemBank::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < items.size(); ++i) {
    index_.emplace(items[i].item_id, i);
  }
}

namespace vocab {

const std::vector<std::string>& chart_types() {
  static const std::vector<std::string> values = {
      "Area Chart",     "Bar Chart",          "Bubble Chart",      "Choropleth Map",
      "Histogram",      "Line Chart",         "Pie Chart",         "Scatterplot",
      "Stacked Area Chart", "Stacked Bar Chart", "Treemap",       "100% Stacked Bar Chart",
  };
  return values;
}

const std::vector<std::string>& tasks() {
  static const std::vector<std::string> values = {
      "Determine Range",          "Identify the Hierarchical Structure",
      "Find Anomalies",           "Find Clusters",
      "Find Correlations/Trends", "Find Extremum",
      "Make Comparisons",         "Retrieve Value",
  };
  return values;
}

const std::vector<std::string>& misleaders() {
  static const std::vector<std::string> values = {
      "Cherry Picking",
      "Concealed Uncertainty",
      "Inappropriate Aggregation",
      "Manipulation of Scales - Inappropriate Order",
      "Manipulation of Scales - Inappropriate Scale Range",
      "Manipulation of Scales - Inappropriate Use of Scale Functions",
      "Manipulation of Scales - Unconventional Scale Directions",
      "Misleading Annotations",
      "Missing Data",
      "Missing Normalization",
      "Overplotting",
  };
  return values;
}

}  // namespace vocab

std::vector<BankViolation> validate_bank(const ItemBank& bank) {
  std::vector<BankViolation> out;
  auto add = [&](std::string item, std::string rule, std::string msg) {
    out.push_back({std::move(item), std::move(rule), std::move(msg)});
  };

  if (bank.bank_id.empty()) add("", "bank_id", "bank_id must be non-empty");
  if (!std::isfinite(bank.theta_prior.mean) || !(bank.theta_prior.sd > 0.0) ||
      !std::isfinite(bank.theta_prior.sd)) {
    add("", "theta_prior", "theta_prior needs a finite mean and positive sd");
  }
  for (const auto& dim : bank.covering_dimensions) {
    if (!bank.vocabularies.count(dim)) {
      add("", "covering_dimension", "covering dimension '" + dim + "' has no vocabulary");
    }
  }

  std::set<std::string> seen;
  for (const auto& item : bank.items) {
    const std::string& id = item.item_id;
    if (id.empty()) add(id, "item_id", "item_id must be non-empty");
    if (!seen.insert(id).second) add(id, "duplicate_id", "duplicate item_id '" + id + "'");
    if (item.options.size() < 2) add(id, "options", "at least 2 options required");
    if (item.correct_index < 0 || static_cast<std::size_t>(item.correct_index) >= item.options.size()) {
      add(id, "correct_index", "correct_index out of range");
    }
    if (item.scored()) {
      if (!item.params) {
        add(id, "missing_params", "scored item missing params");
      } else {
        const auto& p = *item.params;
        if (!std::isfinite(p.discrimination) || !std::isfinite(p.easiness)) {
          add(id, "params_finite", "item parameters must be finite");
        } else if (p.discrimination <= 0.0) {
          add(id, "discrimination", "discrimination must be positive");
        }
      }
    } else if (item.params) {
      add(id, "unscored_params", "unscored items carry no params");
    }
    for (const auto& [dim, value] : item.features) {
      auto voc = bank.vocabularies.find(dim);
      if (voc == bank.vocabularies.end()) {
        add(id, "unknown_dimension", "feature dimension '" + dim + "' has no vocabulary");
      } else if (std::find(voc->second.begin(), voc->second.end(), value) == voc->second.end()) {
        add(id, "unknown_feature_value", "feature value not in vocabulary: " + dim + "=" + value);
      }
    }
  }

  for (const auto& dim : bank.covering_dimensions) {
    auto voc = bank.vocabularies.find(dim);
    if (voc == bank.vocabularies.end()) continue;
    for (const auto& value : voc->second) {
      const bool covered = std::any_of(bank.items.begin(), bank.items.end(), [&](const Item& i) {
        if (!i.scored()) return false;
        auto f = i.features.find(dim);
        return f != i.features.end() && f->second == value;
      });
      if (!covered) add("", "uncoverable_feature", "feature uncoverable: " + dim + "=" + value);
    }
  }

  if (bank.static_reference_ids) {
    for (const auto& id : *bank.static_reference_ids) {
      if (!seen.count(id)) add(id, "static_reference", "static reference id not in bank");
    }
  }
  return out;
}

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& item_id, const std::string& where,
                         std::vector<BankViolation>& out) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      out.push_back({item_id, "unknown_key", "unknown key '" + key + "' in " + where});
    }
  }
}

Item item_from_json(const json& j, bool lenient, std::vector<BankViolation>& out) {
  Item item;
  item.item_id = j.at("item_id").get<std::string>();
  if (!lenient) {
    reject_unknown_keys(j, {"item_id", "kind", "params", "features", "stimulus", "question",
                            "options", "correct_index", "has_cbi_option"},
                        item.item_id, "item", out);
  }
  item.kind = item_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("params") && !j.at("params").is_null()) {
    const auto& p = j.at("params");
    if (!lenient) reject_unknown_keys(p, {"a", "b"}, item.item_id, "params", out);
    item.params = ItemParams{p.at("a").get<double>(), p.at("b").get<double>()};
  }
  if (j.contains("features")) {
    item.features = j.at("features").get<std::map<std::string, std::string>>();
  }
  if (j.contains("stimulus")) {
    const auto& s = j.at("stimulus");
    if (!lenient) reject_unknown_keys(s, {"image_ref", "alt_text"}, item.item_id, "stimulus", out);
    item.stimulus.image_ref = s.value("image_ref", "");
    item.stimulus.alt_text = s.value("alt_text", "");
  }
  item.question = j.value("question", "");
  item.options = j.at("options").get<std::vector<std::string>>();
  item.correct_index = j.at("correct_index").get<int>();
  item.has_cbi_option = j.value("has_cbi_option", false);
  return item;
}

json item_to_json(const Item& item) {
  json j;
  j["item_id"] = item.item_id;
  j["kind"] = to_string(item.kind);
  if (item.params) {
    j["params"] = {{"a", item.params->discrimination}, {"b", item.params->easiness}};
  } else {
    j["params"] = nullptr;
  }
  j["features"] = item.features;
  j["stimulus"] = {{"image_ref", item.stimulus.image_ref}, {"alt_text", item.stimulus.alt_text}};
  j["question"] = item.question;
  j["options"] = item.options;
  j["correct_index"] = item.correct_index;
  j["has_cbi_option"] = item.has_cbi_option;
  return j;
}

}  // namespace

ItemBank bank_from_json(const json& j, bool lenient) {
  std::vector<BankViolation> out;
  ItemBank bank;
  try {
    if (!j.is_object()) throw Error(ErrorCode::validation, "bank file must be a JSON object");
    if (!lenient) {
      reject_unknown_keys(j, {"bank_id", "test_family", "theta_prior", "covering_dimensions",
                              "vocabularies", "static_reference_ids", "items"},
                          "", "bank", out);
    }
    bank.bank_id = j.at("bank_id").get<std::string>();
    bank.test_family = test_family_from_string(j.at("test_family").get<std::string>());
    const auto& prior = j.at("theta_prior");
    if (!lenient) reject_unknown_keys(prior, {"mean", "sd"}, "", "theta_prior", out);
    bank.theta_prior = {prior.at("mean").get<double>(), prior.at("sd").get<double>()};
    bank.covering_dimensions = j.at("covering_dimensions").get<std::vector<std::string>>();
    bank.vocabularies = j.at("vocabularies").get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("static_reference_ids") && !j.at("static_reference_ids").is_null()) {
      bank.static_reference_ids = j.at("static_reference_ids").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    out.push_back({"", "schema", e.what()});
    throw BankValidationError(std::move(out));
  } catch (const BankValidationError&) {
    throw;
  } catch (const Error& e) {
    out.push_back({"", "schema", e.what()});
    throw BankValidationError(std::move(out));
  }

  const json items = j.value("items", json::array());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& ij = items[i];
    const std::string label =
        ij.is_object() && ij.contains("item_id") && ij["item_id"].is_string()
            ? ij["item_id"].get<std::string>()
            : "#" + std::to_string(i);
    try {
      bank.items.push_back(item_from_json(ij, lenient, out));
    } catch (const json::exception& e) {
      out.push_back({label, "schema", e.what()});
    } catch (const Error& e) {
      out.push_back({label, "schema", e.what()});
    }
  }
  bank.reindex();
  auto semantic = validate_bank(bank);
  out.insert(out.end(), semantic.begin(), semantic.end());
  if (!out.empty()) throw BankValidationError(std::move(out));
  return bank;
}

json bank_to_json(const ItemBank& bank) {
  json j;
  j["bank_id"] = bank.bank_id;
  j["test_family"] = to_string(bank.test_family);
  j["theta_prior"] = {{"mean", bank.theta_prior.mean}, {"sd", bank.theta_prior.sd}};
  j["covering_dimensions"] = bank.covering_dimensions;
  j["vocabularies"] = bank.vocabularies;
  if (bank.static_reference_ids) {
    j["static_reference_ids"] = *bank.static_reference_ids;
  } else {
    j["static_reference_ids"] = nullptr;
  }
  json items = json::array();
  for (const auto& item : bank.items) items.push_back(item_to_json(item));
  j["items"] = std::move(items);
  return j;
}

std::string dump_bank(const ItemBank& bank) { return bank_to_json(bank).dump(2) + "\n"; }

ItemBank load_bank(const std::filesystem::path& path, bool lenient) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open bank file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw BankValidationError({{"", "parse", e.what()}});
  }
  return bank_from_json(j, lenient);
}

void save_bank(const ItemBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write bank file '" + path.string() + "'");
  out << dump_bank(bank);
}

const std::vector<std::string>& feature_values(const ItemBank& bank, std::string_view dimension) {
  const bool covering = std::find(bank.covering_dimensions.begin(), bank.covering_dimensions.end(),
                                  dimension) != bank.covering_dimensions.end();
  auto it = bank.vocabularies.find(std::string(dimension));
  if (!covering || it == bank.vocabularies.end()) {
    throw Error(ErrorCode::invalid_argument, "unknown dimension '" + std::string(dimension) + "'");
  }
  return it->second;
}

SynthSpec SynthSpec::vlat_defaults() {
  SynthSpec s;
  s.family = TestFamily::vlat_like;
  s.n_scored = 53;
  s.dimensions = {{std::string(vocab::kChartType), vocab::chart_types()},
                  {std::string(vocab::kTask), vocab::tasks()}};
  s.theta_prior = {0.0, 1.0};
  return s;
}

SynthSpec SynthSpec::calvi_defaults() {
  SynthSpec s;
  s.family = TestFamily::calvi_like;
  s.n_scored = 45;
  s.n_unscored = 15;
  s.n_cbi_unscored = 4;
  s.dimensions = {{std::string(vocab::kMisleader), vocab::misleaders()}};
  s.theta_prior = {-1.0, 1.0};
  s.static_reference_size = 15;
  return s;
}

namespace {

std::string padded_id(std::string_view prefix, std::size_t n, std::size_t total) {
  const int width = total >= 100 ? 3 : 2;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return std::string(prefix) + buf;
}

constexpr std::string_view kCbiOption = "Cannot be inferred / inadequate information";

// Values round-tripped through JSON must compare equal after reload, so keep
// synthetic parameters on a fixed decimal grid.
double round6(double x) { return std::round(x * 1e6) / 1e6; }

}  // namespace

ItemBank synth_bank(std::uint64_t seed, const SynthSpec& spec) {
  auto dims = spec.dimensions;
  if (dims.empty()) {
    dims = spec.family == TestFamily::calvi_like ? SynthSpec::calvi_defaults().dimensions
                                                 : SynthSpec::vlat_defaults().dimensions;
  }
  std::size_t largest_vocab = 0;
  std::size_t total_vocab = 0;
  for (const auto& [name, values] : dims) {
    if (values.empty()) throw Error(ErrorCode::invalid_argument, "empty vocabulary for " + name);
    largest_vocab = std::max(largest_vocab, values.size());
    total_vocab += values.size();
  }
  if (spec.n_scored < total_vocab) {
    throw Error(ErrorCode::infeasible,
                "synthetic spec infeasible: n_scored must be at least the total vocabulary size (" +
                    std::to_string(total_vocab) + ")");
  }
  if (spec.n_cbi_unscored > spec.n_unscored) {
    throw Error(ErrorCode::infeasible, "more CBI-flagged items than unscored items");
  }
  if (spec.static_reference_size > spec.n_scored) {
    throw Error(ErrorCode::infeasible, "static reference larger than the scored pool");
  }

  Rng rng(derive_seed(seed, 0x5eed));
  std::normal_distribution<double> normal(0.0, 1.0);

  // Feature assignment: the first `largest_vocab` slots walk every vocabulary
  // cyclically so each value is carried at least once; the rest are uniform.
  std::vector<std::map<std::string, std::string>> features(spec.n_scored);
  for (std::size_t k = 0; k < spec.n_scored; ++k) {
    for (const auto& [name, values] : dims) {
      const std::size_t v = k < largest_vocab ? k % values.size()
                                              : static_cast<std::size_t>(rng() % values.size());
      features[k][name] = values[v];
    }
  }
  std::shuffle(features.begin(), features.end(), rng);

  const bool calvi = spec.family == TestFamily::calvi_like;
  ItemBank bank;
  bank.bank_id = std::string(calvi ? "calvi-like" : spec.family == TestFamily::vlat_like ? "vlat-like"
                                                                                         : "custom") +
                 "-synth-" + std::to_string(seed);
  bank.test_family = spec.family;
  bank.theta_prior = spec.theta_prior;
  for (const auto& [name, values] : dims) {
    bank.covering_dimensions.push_back(name);
    bank.vocabularies[name] = values;
  }

  const std::string_view scored_prefix = calvi ? "T" : "I";
  for (std::size_t k = 0; k < spec.n_scored; ++k) {
    Item item;
    item.item_id = padded_id(scored_prefix, k + 1, spec.n_scored);
    item.kind = ItemKind::scored;
    const double a = std::exp(spec.log_discrimination_mean + spec.log_discrimination_sd * normal(rng));
    const double b = spec.easiness_mean + spec.easiness_sd * normal(rng);
    item.params = ItemParams{round6(a), round6(b)};
    item.features = features[k];
    std::string label;
    for (const auto& [dim, value] : item.features) label += (label.empty() ? "" : ", ") + value;
    item.stimulus = {"synthetic/" + item.item_id + ".png", "Synthetic chart (" + label + ")"};
    item.question = "Synthetic question for item " + item.item_id + ".";
    const std::size_t n_options = 3 + rng() % 2;
    for (std::size_t o = 0; o < n_options; ++o) {
      item.options.push_back("Option " + std::string(1, static_cast<char>('A' + o)));
    }
    if (calvi && rng() % 3 == 0) {
      item.options.emplace_back(kCbiOption);
      item.has_cbi_option = true;
      item.correct_index = static_cast<int>(item.options.size() - 1);
    } else {
      item.correct_index = static_cast<int>(rng() % item.options.size());
    }
    bank.items.push_back(std::move(item));
  }

  for (std::size_t k = 0; k < spec.n_unscored; ++k) {
    Item item;
    item.item_id = padded_id("N", k + 1, spec.n_unscored);
    item.kind = ItemKind::unscored_normal;
    item.stimulus = {"synthetic/" + item.item_id + ".png", "Synthetic well-formed chart"};
    item.question = "Synthetic question for item " + item.item_id + ".";
    const std::size_t n_options = 3 + rng() % 2;
    for (std::size_t o = 0; o < n_options; ++o) {
      item.options.push_back("Option " + std::string(1, static_cast<char>('A' + o)));
    }
    item.correct_index = static_cast<int>(rng() % item.options.size());
    if (k < spec.n_cbi_unscored) {
      // CBI option present but never the key.
      item.options.emplace_back(kCbiOption);
      item.has_cbi_option = true;
    }
    bank.items.push_back(std::move(item));
  }

  if (spec.static_reference_size > 0) {
    // A fixed form covering every feature value, padded with random items.
    std::vector<std::string> ref;
    std::set<std::pair<std::string, std::string>> uncovered;
    for (const auto& [name, values] : dims) {
      for (const auto& v : values) uncovered.insert({name, v});
    }
    std::vector<std::size_t> order(spec.n_scored);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> taken(spec.n_scored, false);
    for (std::size_t idx : order) {
      if (uncovered.empty()) break;
      bool helps = false;
      for (const auto& f : bank.items[idx].features) helps |= uncovered.count(f) > 0;
      if (!helps) continue;
      for (const auto& f : bank.items[idx].features) uncovered.erase(f);
      taken[idx] = true;
    }
    for (std::size_t idx : order) {
      if (std::count(taken.begin(), taken.end(), true) >=
          static_cast<std::ptrdiff_t>(spec.static_reference_size)) {
        break;
      }
      taken[idx] = true;
    }
    for (std::size_t idx = 0; idx < spec.n_scored; ++idx) {
      if (taken[idx]) ref.push_back(bank.items[idx].item_id);
    }
    bank.static_reference_ids = std::move(ref);
  } else {
    std::vector<std::string> ref;
    for (std::size_t k = 0; k < spec.n_scored; ++k) ref.push_back(bank.items[k].item_id);
    bank.static_reference_ids = std::move(ref);
  }

  bank.reindex();
  auto violations = validate_bank(bank);
  if (!violations.empty()) throw BankValidationError(std::move(violations));
  return bank;
}

}  // namespace adaptest
