#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "ipl/dataset.hpp"
#include "ipl/math.hpp"

using namespace ipl;

namespace {

InteractionLog tiny_log() {
  // {(u1,i1),(u2,i1),(u1,i2)} from the comma format
  std::istringstream in("u1,i1\nu1,i2\nu2,i1\n");
  ParseFormat fmt;
  fmt.delimiter = Delimiter::comma;
  return parse_interactions(in, fmt);
}

InteractionLog synth_random_log(int n_users, int n_items, double density, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < n_users; ++u)
    for (int i = 0; i < n_items; ++i)
      if (draw_unit(rng) < density) pairs.emplace_back(u, i);
  if (pairs.empty()) pairs.emplace_back(0, 0);
  return InteractionLog(n_users, n_items, std::move(pairs));
}

}  // namespace

TEST_CASE("parsing builds a dense deduplicated log") {
  std::istringstream in("u1,i1\nu1,i2\nu2,i1\n");
  ParseFormat fmt;
  fmt.delimiter = Delimiter::comma;
  ParseReport report;
  InteractionLog log = parse_interactions(in, fmt, &report);
  CHECK(log.n_users() == 2);
  CHECK(log.n_items() == 2);
  CHECK(log.n_interactions() == 3);
  CHECK(report.rows_read == 3);
  CHECK(report.rows_malformed == 0);
}

TEST_CASE("duplicate pairs collapse to one interaction") {
  std::istringstream in("u1,i1\nu1,i1\n");
  ParseFormat fmt;
  fmt.delimiter = Delimiter::comma;
  ParseReport report;
  InteractionLog log = parse_interactions(in, fmt, &report);
  CHECK(log.n_interactions() == 1);
  CHECK(report.rows_duplicate == 1);
}

TEST_CASE("movielens-style rows honor the rating threshold") {
  // 10-row fixture; hand filter: ratings >= 4 keeps 6 rows.
  const char* rows =
      "1::1193::5::978300760\n"
      "1::661::3::978302109\n"
      "1::914::3::978301968\n"
      "1::3408::4::978300275\n"
      "2::1357::5::978298709\n"
      "2::3068::4::978299000\n"
      "2::1537::4::978299620\n"
      "2::647::3::978299351\n"
      "3::1270::3::977594963\n"
      "3::1721::4::977594698\n";
  ParseFormat fmt;
  fmt.delimiter = Delimiter::double_colon;
  fmt.rating_col = 2;
  fmt.rating_threshold = 4.0;
  std::istringstream in(rows);
  ParseReport report;
  InteractionLog log = parse_interactions(in, fmt, &report);
  CHECK(log.n_interactions() == 6);
  CHECK(report.rows_below_threshold == 4);

  // threshold off keeps everything
  std::istringstream in2(rows);
  ParseFormat fmt2 = fmt;
  fmt2.rating_threshold = -1e300;
  CHECK(parse_interactions(in2, fmt2).n_interactions() == 10);
}

TEST_CASE("malformed rows are counted, not fatal") {
  std::istringstream in("u1,i1\nbroken_row\nu2,i2\n");
  ParseFormat fmt;
  fmt.delimiter = Delimiter::comma;
  ParseReport report;
  InteractionLog log = parse_interactions(in, fmt, &report);
  CHECK(log.n_interactions() == 2);
  CHECK(report.rows_malformed == 1);
}

TEST_CASE("parse errors: empty source and out-of-range columns") {
  std::istringstream empty("");
  ParseFormat fmt;
  CHECK_THROWS_AS(parse_interactions(empty, fmt), std::runtime_error);

  std::istringstream rows("a,b\n");
  ParseFormat far;
  far.delimiter = Delimiter::comma;
  far.user_col = 0;
  far.item_col = 7;  // no row has 8 columns -> nothing valid
  CHECK_THROWS_AS(parse_interactions(rows, far), std::runtime_error);
}

TEST_CASE("popularity counts users and items") {
  InteractionLog log = tiny_log();
  PopularityStats stats = popularity(log);
  CHECK(stats.q_star == std::vector<std::int64_t>{2, 1});
  CHECK(stats.user_degree == std::vector<std::int64_t>{2, 1});
  CHECK(std::accumulate(stats.q_star.begin(), stats.q_star.end(), std::int64_t{0}) == 3);
  CHECK_FALSE(stats.gamma.has_value());
}

TEST_CASE("an item indexed but absent from a split has q_star 0") {
  std::vector<std::pair<int, int>> pairs{{0, 0}, {1, 0}};
  InteractionLog log(2, 3, std::move(pairs));  // items 1,2 have no interactions
  PopularityStats stats = popularity(log);
  CHECK(stats.q_star == std::vector<std::int64_t>{2, 0, 0});
}

TEST_CASE("transpose property holds after parsing") {
  InteractionLog log = tiny_log();
  for (int u = 0; u < log.n_users(); ++u)
    for (int i : log.items_of(u)) {
      const auto& users = log.users_of(i);
      CHECK(std::find(users.begin(), users.end(), u) != users.end());
    }
  for (int i = 0; i < log.n_items(); ++i)
    for (int u : log.users_of(i)) CHECK(log.has(u, i));
}

TEST_CASE("stratified split: counts, determinism, disjointness") {
  InteractionLog log = synth_random_log(40, 30, 0.3, 99);
  SplitRatios ratios{0.7, 0.1, 0.2};
  SplitBundle a = stratified_split(log, ratios, 7);
  SplitBundle b = stratified_split(log, ratios, 7);
  SplitBundle c = stratified_split(log, ratios, 8);

  CHECK(a.train.pairs() == b.train.pairs());
  CHECK(a.validation.pairs() == b.validation.pairs());
  CHECK(a.test.pairs() == b.test.pairs());
  CHECK(a.train.pairs() != c.train.pairs());  // different shuffle

  // identical per-item counts regardless of seed
  for (int i = 0; i < log.n_items(); ++i) {
    CHECK(a.train.users_of(i).size() == c.train.users_of(i).size());
    CHECK(a.test.users_of(i).size() == c.test.users_of(i).size());
  }

  // per-item bucket sizes within 1 of ratio * Q*
  for (int i = 0; i < log.n_items(); ++i) {
    const double n = static_cast<double>(log.users_of(i).size());
    CHECK(std::abs(static_cast<double>(a.train.users_of(i).size()) - 0.7 * n) < 1.0);
    CHECK(std::abs(static_cast<double>(a.validation.users_of(i).size()) - 0.1 * n) < 1.0);
    CHECK(std::abs(static_cast<double>(a.test.users_of(i).size()) - 0.2 * n) < 1.0);
  }

  // disjoint union equals the source
  std::vector<std::pair<int, int>> all = a.train.pairs();
  all.insert(all.end(), a.validation.pairs().begin(), a.validation.pairs().end());
  all.insert(all.end(), a.test.pairs().begin(), a.test.pairs().end());
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
  CHECK(all == log.pairs());
}

TEST_CASE("split of a 10-interaction item is exactly 7/1/2") {
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < 10; ++u) pairs.emplace_back(u, 0);
  InteractionLog log(10, 1, std::move(pairs));
  SplitBundle s = stratified_split(log, {0.7, 0.1, 0.2}, 3);
  CHECK(s.train.users_of(0).size() == 7);
  CHECK(s.validation.users_of(0).size() == 1);
  CHECK(s.test.users_of(0).size() == 2);
}

TEST_CASE("single-interaction item lands in train") {
  std::vector<std::pair<int, int>> pairs{{0, 0}};
  InteractionLog log(1, 1, std::move(pairs));
  SplitBundle s = stratified_split(log, {0.7, 0.1, 0.2}, 1);
  CHECK(s.train.n_interactions() == 1);
  CHECK(s.validation.n_interactions() == 0);
  CHECK(s.test.n_interactions() == 0);
}

TEST_CASE("split rejects bad ratios and empty logs") {
  InteractionLog log = tiny_log();
  CHECK_THROWS_AS(stratified_split(log, {0.7, 0.1, 0.1}, 1), std::invalid_argument);
  InteractionLog empty;
  CHECK_THROWS_AS(stratified_split(empty, {0.7, 0.1, 0.2}, 1), std::invalid_argument);
}

TEST_CASE("popularity is conserved across the split") {
  InteractionLog log = synth_random_log(25, 20, 0.4, 5);
  SplitBundle s = stratified_split(log, {0.7, 0.1, 0.2}, 11);
  PopularityStats full = popularity(log);
  PopularityStats tr = popularity(s.train);
  PopularityStats va = popularity(s.validation);
  PopularityStats te = popularity(s.test);
  for (int i = 0; i < log.n_items(); ++i)
    CHECK(tr.q_star[i] + va.q_star[i] + te.q_star[i] == full.q_star[i]);
  for (int u = 0; u < log.n_users(); ++u)
    CHECK(tr.user_degree[u] + va.user_degree[u] + te.user_degree[u] == full.user_degree[u]);
}

TEST_CASE("split members share id maps and keep the transpose property") {
  InteractionLog log = tiny_log();
  SplitBundle s = stratified_split(log, {0.7, 0.1, 0.2}, 2);
  CHECK(s.train.id_maps().get() == log.id_maps().get());
  CHECK(s.test.id_maps().get() == log.id_maps().get());
  for (const InteractionLog* member : {&s.train, &s.validation, &s.test}) {
    for (int u = 0; u < member->n_users(); ++u)
      for (int i : member->items_of(u)) {
        const auto& users = member->users_of(i);
        CHECK(std::find(users.begin(), users.end(), u) != users.end());
      }
  }
}

TEST_CASE("split round-trips through files") {
  namespace fs = std::filesystem;
  InteractionLog log = tiny_log();
  SplitBundle s = stratified_split(log, {0.7, 0.1, 0.2}, 21);
  const std::string dir = (fs::temp_directory_path() / "ipl_split_rt").string();
  save_split(s, dir);
  SplitBundle loaded = load_split(dir);
  CHECK(loaded.seed == 21);
  CHECK(loaded.train.n_interactions() == s.train.n_interactions());
  CHECK(loaded.test.n_interactions() == s.test.n_interactions());
  CHECK(loaded.train.n_users() == s.train.n_users());
  CHECK(loaded.train.n_items() == s.train.n_items());
  // same external pairs regardless of internal index remapping
  auto externalize = [](const InteractionLog& l) {
    std::vector<std::pair<std::string, std::string>> out;
    const IdMaps* ids = l.id_maps().get();
    for (auto [u, i] : l.pairs()) out.emplace_back(ids->user_ids[u], ids->item_ids[i]);
    std::sort(out.begin(), out.end());
    return out;
  };
  CHECK(externalize(loaded.train) == externalize(s.train));
  CHECK(externalize(loaded.test) == externalize(s.test));
  fs::remove_all(dir);
}
