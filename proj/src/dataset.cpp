#include "ipl/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ipl/math.hpp"
#include "json.hpp"

namespace ipl {

namespace {

const char* delimiter_token(Delimiter d) {
  switch (d) {
    case Delimiter::tab: return "\t";
    case Delimiter::comma: return ",";
    case Delimiter::double_colon: return "::";
  }
  return "\t";
}

void split_fields(const std::string& line, Delimiter d, std::vector<std::string>& out) {
  out.clear();
  const std::string sep = delimiter_token(d);
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

}  // namespace

InteractionLog::InteractionLog(int n_users, int n_items,
                               std::vector<std::pair<int, int>> pairs,
                               std::shared_ptr<const IdMaps> ids)
    : n_users_(n_users), n_items_(n_items), ids_(std::move(ids)) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  by_user_.assign(n_users_, {});
  by_item_.assign(n_items_, {});
  for (auto [u, i] : pairs) {
    if (u < 0 || u >= n_users_ || i < 0 || i >= n_items_)
      throw std::out_of_range("interaction index outside log dimensions");
    by_user_[u].push_back(i);
    by_item_[i].push_back(u);
  }
  // by_user rows are sorted by construction; by_item needs it only if the
  // pair order were not (user,item)-sorted, which it is.
  n_interactions_ = static_cast<std::int64_t>(pairs.size());
  pairs_ = std::move(pairs);
}

bool InteractionLog::has(int user, int item) const {
  const auto& row = by_user_[user];
  return std::binary_search(row.begin(), row.end(), item);
}

InteractionLog parse_interactions(std::istream& source, const ParseFormat& format,
                                  ParseReport* report) {
  if (!source) throw std::runtime_error("interaction source is not readable");
  if (format.user_col < 0 || format.item_col < 0)
    throw std::invalid_argument("column indices must be non-negative");

  auto ids = std::make_shared<IdMaps>();
  std::vector<std::pair<int, int>> pairs;
  ParseReport rep;

  int max_col = std::max(format.user_col, format.item_col);
  if (format.rating_col >= 0) max_col = std::max(max_col, format.rating_col);

  std::string line;
  std::vector<std::string> fields;
  while (std::getline(source, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    ++rep.rows_read;
    split_fields(line, format.delimiter, fields);
    if (static_cast<int>(fields.size()) <= max_col) {
      ++rep.rows_malformed;
      continue;
    }
    const std::string& user_tok = fields[format.user_col];
    const std::string& item_tok = fields[format.item_col];
    if (user_tok.empty() || item_tok.empty()) {
      ++rep.rows_malformed;
      continue;
    }
    if (format.rating_col >= 0) {
      double rating = 0.0;
      try {
        rating = std::stod(fields[format.rating_col]);
      } catch (const std::exception&) {
        ++rep.rows_malformed;
        continue;
      }
      if (rating < format.rating_threshold) {
        ++rep.rows_below_threshold;
        continue;
      }
    }
    auto [uit, u_new] = ids->user_index.try_emplace(user_tok, static_cast<int>(ids->user_ids.size()));
    if (u_new) ids->user_ids.push_back(user_tok);
    auto [iit, i_new] = ids->item_index.try_emplace(item_tok, static_cast<int>(ids->item_ids.size()));
    if (i_new) ids->item_ids.push_back(item_tok);
    pairs.emplace_back(uit->second, iit->second);
  }

  std::sort(pairs.begin(), pairs.end());
  auto unique_end = std::unique(pairs.begin(), pairs.end());
  rep.rows_duplicate = static_cast<std::int64_t>(pairs.end() - unique_end);
  pairs.erase(unique_end, pairs.end());

  if (pairs.empty()) throw std::runtime_error("no valid interaction rows in source");

  const int n_users = static_cast<int>(ids->user_ids.size());
  const int n_items = static_cast<int>(ids->item_ids.size());
  InteractionLog log(n_users, n_items, std::move(pairs), std::move(ids));
  if (report) *report = rep;
  return log;
}

InteractionLog parse_interactions_file(const std::string& path, const ParseFormat& format,
                                       ParseReport* report) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open interaction file: " + path);
  return parse_interactions(in, format, report);
}

SplitBundle stratified_split(const InteractionLog& log, const SplitRatios& ratios,
                             std::uint64_t seed) {
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split ratios must be positive and sum to 1");
  if (log.empty()) throw std::invalid_argument("cannot split an empty log");

  const std::array<double, 3> ratio{ratios.train, ratios.validation, ratios.test};
  std::array<std::vector<std::pair<int, int>>, 3> buckets;

  Rng rng(seed);
  std::vector<int> users;
  for (int i = 0; i < log.n_items(); ++i) {
    users.assign(log.users_of(i).begin(), log.users_of(i).end());
    fisher_yates(users, rng);
    const std::size_t n = users.size();

    std::array<std::size_t, 3> count;
    std::array<double, 3> frac;
    std::size_t assigned = 0;
    for (int b = 0; b < 3; ++b) {
      double exact = ratio[b] * static_cast<double>(n);
      count[b] = static_cast<std::size_t>(std::floor(exact));
      frac[b] = exact - static_cast<double>(count[b]);
      assigned += count[b];
    }
    // Largest fractional remainder takes the leftovers; ties favor the
    // earlier bucket (train > validation > test).
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[a] > frac[b]; });
    for (std::size_t r = 0; r < n - assigned; ++r) ++count[order[r % 3]];

    std::size_t pos = 0;
    for (int b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < count[b]; ++c, ++pos)
        buckets[b].emplace_back(users[pos], i);
  }

  SplitBundle bundle;
  bundle.train = InteractionLog(log.n_users(), log.n_items(), std::move(buckets[0]), log.id_maps());
  bundle.validation = InteractionLog(log.n_users(), log.n_items(), std::move(buckets[1]), log.id_maps());
  bundle.test = InteractionLog(log.n_users(), log.n_items(), std::move(buckets[2]), log.id_maps());
  bundle.ratios = ratios;
  bundle.seed = seed;
  return bundle;
}

PopularityStats popularity(const InteractionLog& log) {
  PopularityStats stats;
  stats.q_star.resize(log.n_items());
  stats.user_degree.resize(log.n_users());
  for (int i = 0; i < log.n_items(); ++i)
    stats.q_star[i] = static_cast<std::int64_t>(log.users_of(i).size());
  for (int u = 0; u < log.n_users(); ++u)
    stats.user_degree[u] = static_cast<std::int64_t>(log.items_of(u).size());
  return stats;
}

namespace {

void write_log_file(const InteractionLog& log, const std::string& path, Delimiter d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split file: " + path);
  const char* sep = delimiter_token(d);
  const IdMaps* ids = log.id_maps().get();
  for (auto [u, i] : log.pairs()) {
    if (ids)
      out << ids->user_ids[u] << sep << ids->item_ids[i] << '\n';
    else
      out << u << sep << i << '\n';
  }
}

}  // namespace

std::string save_split(const SplitBundle& bundle, const std::string& dir, Delimiter delimiter) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_log_file(bundle.train, dir + "/train.tsv", delimiter);
  write_log_file(bundle.validation, dir + "/validation.tsv", delimiter);
  write_log_file(bundle.test, dir + "/test.tsv", delimiter);

  nlohmann::json manifest;
  manifest["seed"] = bundle.seed;
  manifest["ratios"] = {bundle.ratios.train, bundle.ratios.validation, bundle.ratios.test};
  manifest["n_users"] = bundle.train.n_users();
  manifest["n_items"] = bundle.train.n_items();
  manifest["counts"] = {{"train", bundle.train.n_interactions()},
                        {"validation", bundle.validation.n_interactions()},
                        {"test", bundle.test.n_interactions()}};
  std::string path = dir + "/split_manifest.json";
  std::ofstream out(path);
  out << manifest.dump(2) << '\n';
  return path;
}

SplitBundle load_split(const std::string& dir) {
  std::ifstream min(dir + "/split_manifest.json");
  if (!min) throw std::runtime_error("missing split manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(min);

  // Rebuild shared id maps from the union so indices stay global even for
  // users/items absent from one member.
  auto ids = std::make_shared<IdMaps>();
  ParseFormat fmt;  // tab, cols 0/1
  std::array<std::vector<std::pair<int, int>>, 3> member_pairs;
  const std::array<std::string, 3> names{"train", "validation", "test"};
  for (int m = 0; m < 3; ++m) {
    std::ifstream in(dir + "/" + names[m] + ".tsv");
    if (!in) throw std::runtime_error("missing split member " + names[m] + " in " + dir);
    std::string line;
    std::vector<std::string> fields;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      split_fields(line, fmt.delimiter, fields);
      if (fields.size() < 2) throw std::runtime_error("malformed split row: " + line);
      auto [uit, u_new] = ids->user_index.try_emplace(fields[0], static_cast<int>(ids->user_ids.size()));
      if (u_new) ids->user_ids.push_back(fields[0]);
      auto [iit, i_new] = ids->item_index.try_emplace(fields[1], static_cast<int>(ids->item_ids.size()));
      if (i_new) ids->item_ids.push_back(fields[1]);
      member_pairs[m].emplace_back(uit->second, iit->second);
    }
  }
  const int n_users = manifest.value("n_users", static_cast<int>(ids->user_ids.size()));
  const int n_items = manifest.value("n_items", static_cast<int>(ids->item_ids.size()));

  SplitBundle bundle;
  std::shared_ptr<const IdMaps> shared = ids;
  bundle.train = InteractionLog(n_users, n_items, std::move(member_pairs[0]), shared);
  bundle.validation = InteractionLog(n_users, n_items, std::move(member_pairs[1]), shared);
  bundle.test = InteractionLog(n_users, n_items, std::move(member_pairs[2]), shared);
  bundle.seed = manifest.value("seed", 0ULL);
  auto r = manifest["ratios"];
  bundle.ratios = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
  return bundle;
}

}  // namespace ipl
