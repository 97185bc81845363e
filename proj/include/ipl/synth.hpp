#pragma once

#include <cstdint>
#include <vector>

#include "ipl/dataset.hpp"

namespace ipl {

/// Generator of implicit-feedback logs with a planted exposure bias.
///
/// Observed item popularity Q* follows a capped power-law profile; each
/// item's exposure probability is e_i = e_max * (Q*_i / Q*_max)^gamma
/// (optionally log-normal-noised), and its true-liker count is
/// Q_i = Q*_i / e_i, clamped to the user count. Likers are a contiguous
/// window on a user ring, which gives the log a low-rank preference
/// structure a factorization model can learn; the observed users are a
/// uniform sample of the window of size Q*_i.
struct SynthConfig {
  int n_users = 6000;
  int n_items = 2000;
  std::int64_t target_interactions = 120000;
  int q_star_min = 20;
  int q_star_cap = 450;
  double popularity_exponent = 0.8;  // power-law profile of Q*
  double gamma = 1.5;                // planted exposure exponent
  double exposure_noise = 0.0;       // sigma of log-normal noise on e_i
  double e_max = 0.8;
  std::uint64_t seed = 7;
};

struct SynthData {
  InteractionLog log;
  std::vector<double> exposure;       // realized e_i = Q*_i / Q_i
  std::vector<std::int64_t> q_star;   // realized observed popularity
  std::vector<std::int64_t> q_true;   // planted liker counts
  double gamma = 0.0;
};

SynthData generate_biased_log(const SynthConfig& config);

}  // namespace ipl
