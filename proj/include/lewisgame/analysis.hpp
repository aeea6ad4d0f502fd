#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lewisgame/agents.hpp"
#include "lewisgame/data.hpp"
#include "lewisgame/error.hpp"
#include "lewisgame/game.hpp"
#include "lewisgame/numerics.hpp"

namespace lewisgame {

// ---------------------------------------------------------------------------
// RSA: correlate the pairwise-similarity structure of two spaces
// ---------------------------------------------------------------------------

struct RSAResult {
  double rho = 0.0;
  std::size_t n_items = 0;
  std::size_t n_pairs = 0;  // unordered distinct pairs, N(N-1)/2
};

// Cosine similarities over all unordered distinct index pairs, in canonical
// (i, j) i<j lexicographic order.
inline std::vector<double> pairwise_cosines(const std::vector<Vec64>& reps) {
  const std::size_t n = reps.size();
  std::vector<double> sims;
  sims.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      sims.push_back(cosine(reps[i], reps[j]));
    }
  }
  return sims;
}

// Spearman correlation between the two spaces' pairwise cosine-similarity
// vectors. The item collections must be index-aligned; dimensionality may
// differ between them.
inline RSAResult rsa_score(const std::vector<Vec64>& reps1, const std::vector<Vec64>& reps2) {
  if (reps1.size() != reps2.size()) {
    fail(ErrorKind::Parameter, "rsa_score: collections must be index-aligned");
  }
  if (reps1.size() < 3) fail(ErrorKind::Parameter, "rsa_score: need at least 3 items");
  for (std::size_t i = 0; i < reps1.size(); ++i) {
    if (norm(reps1[i]) == 0.0 || norm(reps2[i]) == 0.0) {
      fail(ErrorKind::Degenerate, "rsa_score: zero-norm representation at item " +
                                      std::to_string(i));
    }
  }
  const std::vector<double> s1 = pairwise_cosines(reps1);
  const std::vector<double> s2 = pairwise_cosines(reps2);
  RSAResult out;
  out.n_items = reps1.size();
  out.n_pairs = s1.size();
  out.rho = spearman(s1, s2);
  return out;
}

struct AlignmentReport {
  double rho_sr = 0.0;  // sender vs receiver
  double rho_si = 0.0;  // sender vs input
  double rho_ri = 0.0;  // receiver vs input
  std::size_t n_items = 0;
  std::size_t n_pairs = 0;
  std::string probe_id;
  std::string checkpoint_id;
};

// Embeds the probe rows with both agents and scores all three space pairs
// against the raw input features.
inline AlignmentReport alignment_report(const FeatureStore& store, const SenderParams& sender,
                                        const ReceiverParams& receiver,
                                        std::span<const std::size_t> probe_rows,
                                        std::string probe_id = "",
                                        std::string checkpoint_id = "") {
  if (probe_rows.empty()) fail(ErrorKind::Parameter, "alignment_report: empty probe");
  std::vector<Vec64> input_reps, sender_reps, receiver_reps;
  input_reps.reserve(probe_rows.size());
  sender_reps.reserve(probe_rows.size());
  receiver_reps.reserve(probe_rows.size());
  for (std::size_t r : probe_rows) {
    Vec64 x = store.row(r);
    sender_reps.push_back(sender_embed(sender, x));
    receiver_reps.push_back(receiver_embed(receiver, x));
    input_reps.push_back(std::move(x));
  }
  AlignmentReport report;
  const RSAResult sr = rsa_score(sender_reps, receiver_reps);
  report.rho_sr = sr.rho;
  report.rho_si = rsa_score(sender_reps, input_reps).rho;
  report.rho_ri = rsa_score(receiver_reps, input_reps).rho;
  report.n_items = sr.n_items;
  report.n_pairs = sr.n_pairs;
  report.probe_id = std::move(probe_id);
  report.checkpoint_id = std::move(checkpoint_id);
  return report;
}

// Deterministic probe selection: up to `probe_size` of the given rows,
// sampled without replacement from the run's seed.
inline std::vector<std::size_t> select_probe_rows(std::span<const std::size_t> rows,
                                                  std::size_t probe_size, std::uint64_t seed) {
  std::vector<std::size_t> probe(rows.begin(), rows.end());
  if (probe.size() <= probe_size) return probe;
  RngStream rng(seed, Stream::kProbe);
  for (std::size_t i = 0; i < probe_size; ++i) {
    const std::size_t j = i + rng.next_index(probe.size() - i);
    std::swap(probe[i], probe[j]);
  }
  probe.resize(probe_size);
  std::sort(probe.begin(), probe.end());
  return probe;
}

// ---------------------------------------------------------------------------
// z-normalized subgroup similarity
// ---------------------------------------------------------------------------

enum class SpaceLabel { Input, Sender, Receiver };
enum class GroupBy { Concept, Class };

inline std::string to_string(SpaceLabel s) {
  switch (s) {
    case SpaceLabel::Input: return "input";
    case SpaceLabel::Sender: return "sender";
    case SpaceLabel::Receiver: return "receiver";
  }
  fail(ErrorKind::Parameter, "invalid space label");
}

inline std::string to_string(GroupBy g) {
  return g == GroupBy::Concept ? "concept" : "class";
}

struct SubgroupSimilarityReport {
  SpaceLabel space = SpaceLabel::Input;
  GroupBy grouping = GroupBy::Concept;
  double mean_z_within = 0.0;
  std::size_t n_within_pairs = 0;
  std::size_t n_total_pairs = 0;
};

namespace detail {

struct ZStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

inline ZStats population_stats(std::span<const double> xs) {
  if (xs.empty()) fail(ErrorKind::Parameter, "population_stats: empty population");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  return {mean, std::sqrt(var)};
}

// Mean z-score of the selected subset against the whole population.
inline double mean_z_of_subset(std::span<const double> population,
                               std::span<const std::size_t> subset) {
  const ZStats stats = population_stats(population);
  if (stats.stddev == 0.0) {
    fail(ErrorKind::Degenerate, "mean_z_of_subset: population has zero variance");
  }
  if (subset.empty()) fail(ErrorKind::Parameter, "mean_z_of_subset: empty subset");
  double acc = 0.0;
  for (std::size_t idx : subset) acc += (population[idx] - stats.mean) / stats.stddev;
  return acc / static_cast<double>(subset.size());
}

}  // namespace detail

// Mean z-normalized similarity of same-group pairs: all unordered pairwise
// cosines form the population; pairs sharing the grouping label are the
// subset. labels must be aligned with reps; grouping by class requires a
// class id on every item.
inline SubgroupSimilarityReport z_subgroup_similarity(const std::vector<Vec64>& reps,
                                                      const std::vector<ManifestEntry>& manifest,
                                                      GroupBy grouping,
                                                      SpaceLabel space = SpaceLabel::Input) {
  if (reps.size() != manifest.size()) {
    fail(ErrorKind::Parameter, "z_subgroup_similarity: reps and manifest must be aligned");
  }
  if (reps.size() < 3) fail(ErrorKind::Parameter, "z_subgroup_similarity: need at least 3 items");
  std::vector<int> labels(reps.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (grouping == GroupBy::Concept) {
      labels[i] = manifest[i].concept_id;
    } else {
      if (!manifest[i].class_id) {
        fail(ErrorKind::Grouping, "z_subgroup_similarity: item '" + manifest[i].image_id +
                                      "' has no class id");
      }
      labels[i] = *manifest[i].class_id;
    }
  }

  const std::vector<double> sims = pairwise_cosines(reps);
  std::vector<std::size_t> within;
  std::size_t pair_index = 0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    for (std::size_t j = i + 1; j < reps.size(); ++j, ++pair_index) {
      if (labels[i] == labels[j]) within.push_back(pair_index);
    }
  }
  if (within.empty()) {
    fail(ErrorKind::Grouping, "z_subgroup_similarity: no pair shares a group (all singletons)");
  }
  if (within.size() == sims.size()) {
    fail(ErrorKind::Grouping, "z_subgroup_similarity: every pair shares the single group");
  }

  SubgroupSimilarityReport report;
  report.space = space;
  report.grouping = grouping;
  report.mean_z_within = detail::mean_z_of_subset(sims, within);
  report.n_within_pairs = within.size();
  report.n_total_pairs = sims.size();
  return report;
}

// ---------------------------------------------------------------------------
// Largest-shift pairs between input and agent space
// ---------------------------------------------------------------------------

struct ShiftPair {
  std::string image_id_a;
  std::string image_id_b;
  double sim_input = 0.0;
  double sim_sender = 0.0;
  double sim_receiver = 0.0;
  double delta = 0.0;  // sim_input - sim_sender
};

// Ranks unordered pairs by delta = input similarity minus sender similarity.
// Returns the k most positive deltas (pairs that drifted apart) followed by
// the k most negative (pairs that drifted together); truncated when fewer
// pairs exist.
inline std::vector<ShiftPair> top_shift_pairs(const std::vector<Vec64>& input_reps,
                                              const std::vector<Vec64>& sender_reps,
                                              const std::vector<Vec64>& receiver_reps,
                                              const std::vector<ManifestEntry>& manifest,
                                              std::size_t k) {
  const std::size_t n = input_reps.size();
  if (sender_reps.size() != n || receiver_reps.size() != n || manifest.size() != n) {
    fail(ErrorKind::Parameter, "top_shift_pairs: collections must be aligned");
  }
  if (n < 2) fail(ErrorKind::Parameter, "top_shift_pairs: need at least 2 items");
  if (k < 1) fail(ErrorKind::Parameter, "top_shift_pairs: k must be >= 1");

  std::vector<ShiftPair> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      ShiftPair sp;
      sp.image_id_a = manifest[i].image_id;
      sp.image_id_b = manifest[j].image_id;
      sp.sim_input = cosine(input_reps[i], input_reps[j]);
      sp.sim_sender = cosine(sender_reps[i], sender_reps[j]);
      sp.sim_receiver = cosine(receiver_reps[i], receiver_reps[j]);
      sp.delta = sp.sim_input - sp.sim_sender;
      pairs.push_back(std::move(sp));
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const ShiftPair& a, const ShiftPair& b) { return a.delta > b.delta; });
  const std::size_t take = std::min(k, pairs.size());
  std::vector<ShiftPair> out;
  // most positive first ...
  for (std::size_t i = 0; i < take; ++i) out.push_back(pairs[i]);
  // ... then most negative, skipping any overlap on tiny collections
  const std::size_t neg_take = std::min(k, pairs.size() - take);
  for (std::size_t i = 0; i < neg_take; ++i) out.push_back(pairs[pairs.size() - 1 - i]);
  return out;
}

// ---------------------------------------------------------------------------
// Noise-pair swap test
// ---------------------------------------------------------------------------

struct SwapTestResult {
  std::size_t n_pairs = 0;
  std::size_t runs = 0;
  double fraction_changed = 0.0;
};

namespace detail {

inline std::size_t argmax_symbol(const SenderParams& sender, const Vec64& target,
                                 const Vec64& distractor) {
  const SenderOutput out = sender_eval(sender, target, distractor);
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.probs.size(); ++i) {
    if (out.probs[i] > out.probs[best]) best = i;
  }
  return best;
}

}  // namespace detail

// Draws fresh unit-norm noise pairs each run and counts how often the
// sender's argmax symbol changes when target and distractor are swapped.
inline SwapTestResult swap_test(const SenderParams& sender, std::size_t d, std::size_t n_pairs,
                                std::size_t runs, RngStream& rng) {
  if (n_pairs < 1 || runs < 1) fail(ErrorKind::Parameter, "swap_test: need n_pairs, runs >= 1");
  std::size_t changed = 0;
  for (std::size_t run = 0; run < runs; ++run) {
    for (std::size_t i = 0; i < n_pairs; ++i) {
      std::vector<double> a(d), b(d);
      for (std::size_t j = 0; j < d; ++j) a[j] = rng.next_normal();
      for (std::size_t j = 0; j < d; ++j) b[j] = rng.next_normal();
      const Vec64 z1 = l2_normalize(Vec64(std::move(a)));
      const Vec64 z2 = l2_normalize(Vec64(std::move(b)));
      if (detail::argmax_symbol(sender, z1, z2) != detail::argmax_symbol(sender, z2, z1)) {
        ++changed;
      }
    }
  }
  SwapTestResult result;
  result.n_pairs = n_pairs;
  result.runs = runs;
  result.fraction_changed = static_cast<double>(changed) / static_cast<double>(n_pairs * runs);
  return result;
}

// ---------------------------------------------------------------------------
// Cross-condition evaluation table
// ---------------------------------------------------------------------------

// Mean percent rewards, train condition x test condition. Cells stay empty
// when the matching checkpoint (rows) or the feature store (image columns)
// is unavailable.
struct CrossEvalTable {
  static constexpr std::size_t kTrainSame = 0;
  static constexpr std::size_t kTrainDiff = 1;
  static constexpr std::size_t kTestSame = 0;
  static constexpr std::size_t kTestDiff = 1;
  static constexpr std::size_t kTestNoise = 2;

  std::array<std::array<std::optional<double>, 3>, 2> cells;
};

struct CrossEvalOptions {
  std::size_t runs = 10;
  std::size_t batches = 1000;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Plays freshly sampled test games for every (checkpoint, condition) cell and
// averages the reward over runs x batches x batch_size plays.
inline CrossEvalTable cross_eval(const std::vector<Checkpoint>& checkpoints,
                                 const FeatureStore* store, const SplitSpec* split,
                                 const CrossEvalOptions& options) {
  if (checkpoints.empty()) fail(ErrorKind::Parameter, "cross_eval: need at least one checkpoint");
  CrossEvalTable table;
  SamplePool test_pool;
  if (store != nullptr && split != nullptr) {
    test_pool = make_pool(*store, split->test_rows);
  }

  for (const Checkpoint& ck : checkpoints) {
    const GameMode trained = game_mode_from_string(ck.meta.game_mode);
    const std::size_t row = trained == GameMode::SameImage ? CrossEvalTable::kTrainSame
                                                           : CrossEvalTable::kTrainDiff;
    for (std::size_t col = 0; col < 3; ++col) {
      const GameMode test_mode = col == CrossEvalTable::kTestSame    ? GameMode::SameImage
                                 : col == CrossEvalTable::kTestDiff ? GameMode::DifferentImage
                                                                    : GameMode::Noise;
      if (test_mode != GameMode::Noise && (store == nullptr || split == nullptr)) {
        continue;  // image columns need a feature store
      }
      double total = 0.0;
      std::size_t plays = 0;
      for (std::size_t run = 0; run < options.runs; ++run) {
        // independent derived stream per (row, column, run)
        RngStream rng(options.seed, 1000 + (row * 3 + col) * 100 + run);
        for (std::size_t b = 0; b < options.batches * options.batch_size; ++b) {
          GameInstance g;
          switch (test_mode) {
            case GameMode::SameImage:
              g = sample_same_image_game(*store, test_pool, rng);
              break;
            case GameMode::DifferentImage:
              g = sample_different_image_game(*store, test_pool, rng);
              break;
            case GameMode::Noise:
              g = sample_noise_game(ck.meta.d, rng);
              break;
          }
          total += play_game(ck.sender, ck.receiver, g, rng).reward;
          ++plays;
        }
      }
      table.cells[row][col] = 100.0 * total / static_cast<double>(plays);
    }
  }
  return table;
}

}  // namespace lewisgame
