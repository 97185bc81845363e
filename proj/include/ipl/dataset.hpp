#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ipl {

/// Bijection between external id tokens and dense internal indices.
/// Shared by every split of a dataset so indices stay global.
struct IdMaps {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> item_index;
};

/// One parsed interaction row, before indexing.
struct Interaction {
  std::string user_id;
  std::string item_id;
  std::optional<double> weight;  // rating when present; unused after ingest
};

/// Sparse positive interactions with both orientations materialized.
/// by_user and by_item are transposes of each other and every adjacency
/// list is sorted ascending.
class InteractionLog {
 public:
  InteractionLog() = default;
  InteractionLog(int n_users, int n_items,
                 std::vector<std::pair<int, int>> pairs,
                 std::shared_ptr<const IdMaps> ids = nullptr);

  int n_users() const { return n_users_; }
  int n_items() const { return n_items_; }
  std::int64_t n_interactions() const { return n_interactions_; }
  bool empty() const { return n_interactions_ == 0; }

  const std::vector<int>& items_of(int user) const { return by_user_[user]; }
  const std::vector<int>& users_of(int item) const { return by_item_[item]; }
  bool has(int user, int item) const;

  const std::shared_ptr<const IdMaps>& id_maps() const { return ids_; }

  /// Interactions flattened as (user, item), ordered by user then item.
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }

 private:
  int n_users_ = 0;
  int n_items_ = 0;
  std::int64_t n_interactions_ = 0;
  std::vector<std::vector<int>> by_user_;
  std::vector<std::vector<int>> by_item_;
  std::vector<std::pair<int, int>> pairs_;
  std::shared_ptr<const IdMaps> ids_;
};

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

struct SplitBundle {
  InteractionLog train;
  InteractionLog validation;
  InteractionLog test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

/// Per-item observed popularity and per-user degree of one log.
struct PopularityStats {
  std::vector<std::int64_t> q_star;      // |users_of(i)|
  std::vector<std::int64_t> user_degree; // |items_of(u)|
  std::optional<double> gamma;           // exponent, set by the estimator
};

enum class Delimiter { tab, comma, double_colon };

struct ParseFormat {
  Delimiter delimiter = Delimiter::tab;
  int user_col = 0;
  int item_col = 1;
  int rating_col = -1;               // -1: no rating column
  double rating_threshold = -1e300;  // keep row iff rating >= threshold
};

struct ParseReport {
  std::int64_t rows_read = 0;
  std::int64_t rows_malformed = 0;
  std::int64_t rows_below_threshold = 0;
  std::int64_t rows_duplicate = 0;
};

/// Reads delimited interaction rows into a deduplicated, densely indexed
/// log. Internal indices follow first appearance order. Throws if the
/// stream yields no valid interaction.
InteractionLog parse_interactions(std::istream& source, const ParseFormat& format,
                                  ParseReport* report = nullptr);
InteractionLog parse_interactions_file(const std::string& path, const ParseFormat& format,
                                       ParseReport* report = nullptr);

/// Per-item uniform split. Each item's interactions are shuffled with the
/// seeded generator and partitioned by the ratios; bucket sizes are
/// floor(ratio*n) plus largest-remainder rounding with ties resolved
/// train > validation > test, so every bucket count is within 1 of
/// ratio*n. All three members share the source log's id maps.
SplitBundle stratified_split(const InteractionLog& log, const SplitRatios& ratios,
                             std::uint64_t seed);

/// Observed popularity and user degrees; gamma left unset.
PopularityStats popularity(const InteractionLog& log);

/// Writes train/validation/test as delimited files plus a JSON manifest
/// (seed, ratios, counts) into dir. Returns the manifest path.
std::string save_split(const SplitBundle& bundle, const std::string& dir,
                       Delimiter delimiter = Delimiter::tab);
SplitBundle load_split(const std::string& dir);

}  // namespace ipl
