#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lewisgame/error.hpp"
#include "lewisgame/numerics.hpp"
#include "lewisgame/rng.hpp"

#include "json.hpp"

namespace lewisgame {

inline constexpr std::size_t kNoRow = static_cast<std::size_t>(-1);

struct ManifestEntry {
  std::string image_id;
  int concept_id = 0;
  std::optional<int> class_id;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// Immutable collection of L2-normalized feature rows plus their identities.
class FeatureStore {
 public:
  FeatureStore(Mat64 features, std::vector<ManifestEntry> manifest)
      : features_(std::move(features)), manifest_(std::move(manifest)) {
    if (manifest_.size() != features_.rows()) {
      fail(ErrorKind::Format, "FeatureStore: manifest length " +
                                  std::to_string(manifest_.size()) +
                                  " does not match row count " +
                                  std::to_string(features_.rows()));
    }
    normalize_rows();
    index_concepts();
  }

  std::size_t size() const { return features_.rows(); }
  std::size_t dim() const { return features_.cols(); }

  const Mat64& features() const { return features_; }
  const std::vector<ManifestEntry>& manifest() const { return manifest_; }

  Vec64 row(std::size_t r) const { return features_.row(r); }
  const ManifestEntry& entry(std::size_t r) const { return manifest_[r]; }
  int concept_of(std::size_t r) const { return manifest_[r].concept_id; }
  std::optional<int> class_of(std::size_t r) const { return manifest_[r].class_id; }

  // Distinct concept ids in ascending order.
  const std::vector<int>& concept_ids() const { return concept_ids_; }

  const std::vector<std::size_t>& rows_of_concept(int concept_id) const {
    auto it = rows_by_concept_.find(concept_id);
    if (it == rows_by_concept_.end()) {
      fail(ErrorKind::Dataset, "unknown concept id " + std::to_string(concept_id));
    }
    return it->second;
  }

  std::size_t n_classes() const {
    std::vector<int> seen;
    for (const auto& e : manifest_) {
      if (e.class_id) seen.push_back(*e.class_id);
    }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    return seen.size();
  }

 private:
  void normalize_rows() {
    for (std::size_t r = 0; r < features_.rows(); ++r) {
      double sq = 0.0;
      for (std::size_t c = 0; c < features_.cols(); ++c) {
        sq += features_(r, c) * features_(r, c);
      }
      const double n = std::sqrt(sq);
      if (n == 0.0) {
        fail(ErrorKind::Format, "FeatureStore: zero-norm feature row " + std::to_string(r));
      }
      for (std::size_t c = 0; c < features_.cols(); ++c) features_(r, c) /= n;
    }
  }

  void index_concepts() {
    for (std::size_t r = 0; r < manifest_.size(); ++r) {
      rows_by_concept_[manifest_[r].concept_id].push_back(r);
    }
    concept_ids_.reserve(rows_by_concept_.size());
    for (const auto& [cid, rows] : rows_by_concept_) concept_ids_.push_back(cid);
  }

  Mat64 features_;
  std::vector<ManifestEntry> manifest_;
  std::map<int, std::vector<std::size_t>> rows_by_concept_;
  std::vector<int> concept_ids_;
};

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

// Hierarchical Gaussian stand-in for a ConvNet feature set: classes contain
// concepts, concepts contain images, with configurable spread at each level.
struct SyntheticConfig {
  std::size_t n_classes = 5;
  std::size_t concepts_per_class = 10;
  std::size_t images_per_concept = 100;
  std::size_t dim = 64;
  double class_spread = 1.0;
  double concept_spread = 0.5;
  double image_spread = 0.3;
  bool clamp_nonnegative = false;

  void validate() const {
    if (n_classes < 1 || concepts_per_class < 1 || images_per_concept < 1 || dim < 1) {
      fail(ErrorKind::Config, "SyntheticConfig: all counts must be >= 1");
    }
    if (!(class_spread > 0.0) || !(concept_spread > 0.0) || !(image_spread > 0.0)) {
      fail(ErrorKind::Config, "SyntheticConfig: spreads must be positive");
    }
  }
};

inline FeatureStore generate_synthetic_features(const SyntheticConfig& cfg, RngStream& rng) {
  cfg.validate();
  const std::size_t n_concepts = cfg.n_classes * cfg.concepts_per_class;
  const std::size_t n_rows = n_concepts * cfg.images_per_concept;
  Mat64 features(n_rows, cfg.dim);
  std::vector<ManifestEntry> manifest;
  manifest.reserve(n_rows);

  std::vector<double> class_mean(cfg.dim), concept_mean(cfg.dim);
  std::size_t row = 0;
  int concept_id = 0;
  for (std::size_t k = 0; k < cfg.n_classes; ++k) {
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      class_mean[j] = cfg.class_spread * rng.next_normal();
    }
    for (std::size_t c = 0; c < cfg.concepts_per_class; ++c, ++concept_id) {
      for (std::size_t j = 0; j < cfg.dim; ++j) {
        concept_mean[j] = class_mean[j] + cfg.concept_spread * rng.next_normal();
      }
      for (std::size_t i = 0; i < cfg.images_per_concept; ++i, ++row) {
        for (std::size_t j = 0; j < cfg.dim; ++j) {
          double x = concept_mean[j] + cfg.image_spread * rng.next_normal();
          if (cfg.clamp_nonnegative && x < 0.0) x = 0.0;
          features(row, j) = x;
        }
        manifest.push_back(ManifestEntry{
            "img_" + std::to_string(concept_id) + "_" + std::to_string(i),
            concept_id, static_cast<int>(k)});
      }
    }
  }
  return FeatureStore(std::move(features), std::move(manifest));
}

// ---------------------------------------------------------------------------
// LFS1 binary format + JSON manifest sidecar
// ---------------------------------------------------------------------------
//
//   bytes "LFS1" | u32 version=1 | u32 N | u32 d | N*d float32, row-major
//
// All integers and floats little-endian. The manifest is a row-aligned JSON
// array of {"image_id": string, "concept_id": int, "class_id": int|null}.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

inline float get_f32(const unsigned char* p) {
  return std::bit_cast<float>(get_u32(p));
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

}  // namespace detail

inline std::string default_manifest_path(const std::string& features_path) {
  return features_path + ".manifest.json";
}

inline nlohmann::json manifest_to_json(const std::vector<ManifestEntry>& manifest) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : manifest) {
    nlohmann::json obj;
    obj["image_id"] = e.image_id;
    obj["concept_id"] = e.concept_id;
    obj["class_id"] = e.class_id ? nlohmann::json(*e.class_id) : nlohmann::json(nullptr);
    arr.push_back(std::move(obj));
  }
  return arr;
}

inline std::vector<ManifestEntry> manifest_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) fail(ErrorKind::Format, "manifest: expected a JSON array");
  std::vector<ManifestEntry> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const nlohmann::json& obj = arr[i];
    if (!obj.is_object() || !obj.contains("image_id") || !obj.contains("concept_id")) {
      fail(ErrorKind::Format, "manifest: malformed entry at index " + std::to_string(i));
    }
    if (!obj["image_id"].is_string() || !obj["concept_id"].is_number_integer()) {
      fail(ErrorKind::Format, "manifest: bad field types at index " + std::to_string(i));
    }
    ManifestEntry e;
    e.image_id = obj["image_id"].get<std::string>();
    e.concept_id = obj["concept_id"].get<int>();
    if (obj.contains("class_id") && !obj["class_id"].is_null()) {
      if (!obj["class_id"].is_number_integer()) {
        fail(ErrorKind::Format, "manifest: class_id must be int or null at index " +
                                    std::to_string(i));
      }
      e.class_id = obj["class_id"].get<int>();
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline void save_feature_store(const FeatureStore& store, const std::string& features_path,
                               const std::string& manifest_path) {
  std::string bytes;
  bytes.reserve(16 + store.size() * store.dim() * 4);
  bytes += "LFS1";
  detail::put_u32(bytes, 1u);
  detail::put_u32(bytes, static_cast<std::uint32_t>(store.size()));
  detail::put_u32(bytes, static_cast<std::uint32_t>(store.dim()));
  for (std::size_t r = 0; r < store.size(); ++r) {
    for (std::size_t c = 0; c < store.dim(); ++c) {
      detail::put_f32(bytes, static_cast<float>(store.features()(r, c)));
    }
  }
  detail::write_file_bytes(features_path, bytes);
  detail::write_file_bytes(manifest_path, manifest_to_json(store.manifest()).dump(2) + "\n");
}

inline void save_feature_store(const FeatureStore& store, const std::string& features_path) {
  save_feature_store(store, features_path, default_manifest_path(features_path));
}

inline FeatureStore load_feature_store(const std::string& features_path,
                                       const std::string& manifest_path) {
  const std::string bytes = detail::read_file_bytes(features_path);
  if (bytes.size() < 16 || bytes.compare(0, 4, "LFS1") != 0) {
    fail(ErrorKind::Format, features_path + ": not an LFS1 file (bad magic)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != 1) {
    fail(ErrorKind::Format, features_path + ": unsupported LFS1 version " +
                                std::to_string(version));
  }
  const std::uint32_t n = detail::get_u32(p + 8);
  const std::uint32_t d = detail::get_u32(p + 12);
  const std::size_t expected = 16 + static_cast<std::size_t>(n) * d * 4;
  if (bytes.size() != expected) {
    fail(ErrorKind::Format, features_path + ": header says " + std::to_string(n) + "x" +
                                std::to_string(d) + " but payload holds " +
                                std::to_string((bytes.size() - 16) / 4) + " floats");
  }
  std::vector<double> values(static_cast<std::size_t>(n) * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = detail::get_f32(p + 16 + i * 4);
    if (!std::isfinite(f)) {
      fail(ErrorKind::Format, features_path + ": non-finite value in row " +
                                  std::to_string(i / d));
    }
    values[i] = static_cast<double>(f);
  }

  nlohmann::json manifest_json;
  try {
    manifest_json = nlohmann::json::parse(detail::read_file_bytes(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Format, manifest_path + ": " + e.what());
  }
  std::vector<ManifestEntry> manifest = manifest_from_json(manifest_json);
  if (manifest.size() != n) {
    fail(ErrorKind::Format, manifest_path + ": manifest has " + std::to_string(manifest.size()) +
                                " entries for " + std::to_string(n) + " rows");
  }
  // FeatureStore normalizes rows and reports any zero-norm row.
  return FeatureStore(Mat64(n, d, std::move(values)), std::move(manifest));
}

inline FeatureStore load_feature_store(const std::string& features_path) {
  return load_feature_store(features_path, default_manifest_path(features_path));
}

// CSV ingestion: image_id, concept_id, class_id, then d floats per row.
// An empty or "null" class_id field maps to null. A header row starting with
// "image_id" is skipped.
inline FeatureStore load_feature_store_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::vector<ManifestEntry> manifest;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) fields.push_back(cell);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    if (lineno == 1 && !fields.empty() && fields[0] == "image_id") continue;
    if (fields.size() < 4) {
      fail(ErrorKind::Format, path + ":" + std::to_string(lineno) + ": too few fields");
    }
    ManifestEntry e;
    e.image_id = fields[0];
    try {
      e.concept_id = std::stoi(fields[1]);
      if (!fields[2].empty() && fields[2] != "null") e.class_id = std::stoi(fields[2]);
      const std::size_t row_dim = fields.size() - 3;
      if (dim == 0) {
        dim = row_dim;
      } else if (row_dim != dim) {
        fail(ErrorKind::Format, path + ":" + std::to_string(lineno) +
                                    ": inconsistent feature dimensionality");
      }
      for (std::size_t i = 3; i < fields.size(); ++i) values.push_back(std::stod(fields[i]));
    } catch (const std::invalid_argument&) {
      fail(ErrorKind::Format, path + ":" + std::to_string(lineno) + ": unparsable number");
    } catch (const std::out_of_range&) {
      fail(ErrorKind::Format, path + ":" + std::to_string(lineno) + ": number out of range");
    }
    manifest.push_back(std::move(e));
  }
  if (manifest.empty()) fail(ErrorKind::Format, path + ": no data rows");
  const std::size_t n = manifest.size();
  return FeatureStore(Mat64(n, dim, std::move(values)), std::move(manifest));
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

// Disjoint row pools. Validation games are pre-sampled from validation_rows
// and reused for every evaluation during a run.
struct SplitSpec {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;
};

// Per concept: shuffle rows, reserve test_per_concept for test and
// val_per_concept for validation, leave the remainder for training.
inline SplitSpec make_splits(const FeatureStore& store, std::size_t test_per_concept,
                             std::size_t val_per_concept, RngStream& rng) {
  SplitSpec split;
  for (int cid : store.concept_ids()) {
    std::vector<std::size_t> rows = store.rows_of_concept(cid);
    if (rows.size() < test_per_concept + val_per_concept + 1) {
      fail(ErrorKind::Dataset, "concept " + std::to_string(cid) + " has only " +
                                   std::to_string(rows.size()) +
                                   " rows; cannot reserve " + std::to_string(test_per_concept) +
                                   " test + " + std::to_string(val_per_concept) +
                                   " validation rows");
    }
    for (std::size_t i = rows.size(); i > 1; --i) {
      std::swap(rows[i - 1], rows[rng.next_index(i)]);
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < test_per_concept; ++i) split.test_rows.push_back(rows[k++]);
    for (std::size_t i = 0; i < val_per_concept; ++i) split.validation_rows.push_back(rows[k++]);
    for (; k < rows.size(); ++k) split.train_rows.push_back(rows[k]);
  }
  std::sort(split.train_rows.begin(), split.train_rows.end());
  std::sort(split.validation_rows.begin(), split.validation_rows.end());
  std::sort(split.test_rows.begin(), split.test_rows.end());
  return split;
}

inline std::vector<std::size_t> all_rows(const FeatureStore& store) {
  std::vector<std::size_t> rows(store.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

// Rows of one split grouped by concept, precomputed for samplers.
struct SamplePool {
  std::vector<std::size_t> rows;
  std::vector<int> concepts;                          // ascending
  std::vector<std::vector<std::size_t>> concept_rows; // parallel to concepts
};

inline SamplePool make_pool(const FeatureStore& store, std::span<const std::size_t> rows) {
  SamplePool pool;
  pool.rows.assign(rows.begin(), rows.end());
  std::map<int, std::vector<std::size_t>> grouped;
  for (std::size_t r : rows) {
    if (r >= store.size()) fail(ErrorKind::Parameter, "make_pool: row index out of range");
    grouped[store.concept_of(r)].push_back(r);
  }
  for (auto& [cid, crows] : grouped) {
    pool.concepts.push_back(cid);
    pool.concept_rows.push_back(std::move(crows));
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Game instances and samplers
// ---------------------------------------------------------------------------

enum class GameMode { SameImage, DifferentImage, Noise };

inline std::string to_string(GameMode mode) {
  switch (mode) {
    case GameMode::SameImage: return "same-image";
    case GameMode::DifferentImage: return "different-image";
    case GameMode::Noise: return "noise";
  }
  fail(ErrorKind::Parameter, "invalid game mode");
}

inline GameMode game_mode_from_string(const std::string& s) {
  if (s == "same-image" || s == "same") return GameMode::SameImage;
  if (s == "different-image" || s == "diff") return GameMode::DifferentImage;
  if (s == "noise") return GameMode::Noise;
  fail(ErrorKind::Config, "unknown game mode '" + s + "'");
}

// One round's views. The sender always receives (target, distractor) in that
// order; the receiver receives the same pair permuted, with target_position
// recording where the target landed. Feature vectors are resolved at sampling
// time so a game is playable without further dataset access.
struct GameInstance {
  GameMode mode = GameMode::SameImage;
  std::size_t sender_target_row = kNoRow;
  std::size_t sender_distractor_row = kNoRow;
  std::size_t receiver_left_row = kNoRow;
  std::size_t receiver_right_row = kNoRow;
  int target_position = 0;  // 0 or 1, position of the target on the receiver side

  Vec64 sender_target_x;
  Vec64 sender_distractor_x;
  Vec64 receiver_left_x;
  Vec64 receiver_right_x;

  // Noise mode only: the (target, distractor) pair, unit-norm.
  std::optional<std::pair<Vec64, Vec64>> noise_payload;
};

namespace detail {

// Ordered pair of distinct concept indices, uniform over all ordered pairs.
inline std::pair<std::size_t, std::size_t> pick_concept_pair(const SamplePool& pool,
                                                             RngStream& rng) {
  if (pool.concepts.size() < 2) {
    fail(ErrorKind::Dataset, "sampling requires at least 2 concepts, pool has " +
                                 std::to_string(pool.concepts.size()));
  }
  const std::size_t i = rng.next_index(pool.concepts.size());
  std::size_t j = rng.next_index(pool.concepts.size() - 1);
  if (j >= i) ++j;
  return {i, j};
}

inline void assign_receiver_order(GameInstance& g, std::size_t target_row,
                                  std::size_t distractor_row, const Vec64& target_x,
                                  const Vec64& distractor_x, RngStream& rng) {
  const bool target_left = rng.next_coin();
  g.target_position = target_left ? 0 : 1;
  g.receiver_left_row = target_left ? target_row : distractor_row;
  g.receiver_right_row = target_left ? distractor_row : target_row;
  g.receiver_left_x = target_left ? target_x : distractor_x;
  g.receiver_right_x = target_left ? distractor_x : target_x;
}

}  // namespace detail

// Same-image game: both agents see the same two rows, which always belong to
// different concepts. The target concept is uniform over ordered concept
// pairs; the receiver-side order is a fair coin.
inline GameInstance sample_same_image_game(const FeatureStore& store, const SamplePool& pool,
                                           RngStream& rng) {
  const auto [ti, di] = detail::pick_concept_pair(pool, rng);
  const auto& trows = pool.concept_rows[ti];
  const auto& drows = pool.concept_rows[di];
  const std::size_t target_row = trows[rng.next_index(trows.size())];
  const std::size_t distractor_row = drows[rng.next_index(drows.size())];

  GameInstance g;
  g.mode = GameMode::SameImage;
  g.sender_target_row = target_row;
  g.sender_distractor_row = distractor_row;
  g.sender_target_x = store.row(target_row);
  g.sender_distractor_x = store.row(distractor_row);
  detail::assign_receiver_order(g, target_row, distractor_row, g.sender_target_x,
                                g.sender_distractor_x, rng);
  return g;
}

// Different-image game: the receiver sees other images of the sender's two
// concepts, so the four rows are pairwise distinct.
inline GameInstance sample_different_image_game(const FeatureStore& store,
                                                const SamplePool& pool, RngStream& rng) {
  const auto [ti, di] = detail::pick_concept_pair(pool, rng);
  for (std::size_t ci : {ti, di}) {
    if (pool.concept_rows[ci].size() < 2) {
      fail(ErrorKind::Dataset, "different-image game needs >= 2 images per concept; concept " +
                                   std::to_string(pool.concepts[ci]) + " has " +
                                   std::to_string(pool.concept_rows[ci].size()));
    }
  }
  auto pick_two = [&rng](const std::vector<std::size_t>& rows) {
    const std::size_t a = rng.next_index(rows.size());
    std::size_t b = rng.next_index(rows.size() - 1);
    if (b >= a) ++b;
    return std::pair<std::size_t, std::size_t>{rows[a], rows[b]};
  };
  const auto [sender_target, receiver_target] = pick_two(pool.concept_rows[ti]);
  const auto [sender_distractor, receiver_distractor] = pick_two(pool.concept_rows[di]);

  GameInstance g;
  g.mode = GameMode::DifferentImage;
  g.sender_target_row = sender_target;
  g.sender_distractor_row = sender_distractor;
  g.sender_target_x = store.row(sender_target);
  g.sender_distractor_x = store.row(sender_distractor);
  detail::assign_receiver_order(g, receiver_target, receiver_distractor,
                                store.row(receiver_target), store.row(receiver_distractor), rng);
  return g;
}

// Noise game: two independent standard-Normal vectors, L2-normalized. Needs
// no feature store.
inline GameInstance sample_noise_game(std::size_t d, RngStream& rng) {
  if (d < 2) fail(ErrorKind::Parameter, "sample_noise_game: d must be >= 2");
  auto draw_unit = [&rng, d]() {
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = rng.next_normal();
    return l2_normalize(Vec64(std::move(v)));
  };
  const Vec64 z1 = draw_unit();
  const Vec64 z2 = draw_unit();
  const bool first_is_target = rng.next_coin();
  const Vec64& target = first_is_target ? z1 : z2;
  const Vec64& distractor = first_is_target ? z2 : z1;

  GameInstance g;
  g.mode = GameMode::Noise;
  g.sender_target_x = target;
  g.sender_distractor_x = distractor;
  g.noise_payload = std::make_pair(target, distractor);
  detail::assign_receiver_order(g, kNoRow, kNoRow, target, distractor, rng);
  return g;
}

// Fixed evaluation set: sampled once, replayed for every evaluation.
inline std::vector<GameInstance> build_validation_set(const FeatureStore& store,
                                                      const SamplePool& pool, GameMode mode,
                                                      std::size_t n, RngStream& rng) {
  if (n < 1) fail(ErrorKind::Parameter, "build_validation_set: n must be >= 1");
  if (mode == GameMode::Noise) {
    fail(ErrorKind::Parameter, "build_validation_set: mode must be same-image or different-image");
  }
  std::vector<GameInstance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(mode == GameMode::SameImage
                      ? sample_same_image_game(store, pool, rng)
                      : sample_different_image_game(store, pool, rng));
  }
  return out;
}

// Validates the mode invariants of an instance; returns a description of the
// first violation, or nullopt if the instance is well-formed. store may be
// null for noise instances.
inline std::optional<std::string> check_instance(const FeatureStore* store,
                                                 const GameInstance& g) {
  auto same = [](const Vec64& a, const Vec64& b) { return a.values() == b.values(); };
  if (g.target_position != 0 && g.target_position != 1) return "target_position not 0/1";
  const Vec64& recv_target = g.target_position == 0 ? g.receiver_left_x : g.receiver_right_x;
  const Vec64& recv_distractor = g.target_position == 0 ? g.receiver_right_x : g.receiver_left_x;

  if (g.mode == GameMode::Noise) {
    if (!g.noise_payload) return "noise instance without payload";
    if (std::abs(norm(g.noise_payload->first) - 1.0) > 1e-9 ||
        std::abs(norm(g.noise_payload->second) - 1.0) > 1e-9) {
      return "noise payload not unit-norm";
    }
    if (!same(g.sender_target_x, g.noise_payload->first) ||
        !same(g.sender_distractor_x, g.noise_payload->second)) {
      return "sender views disagree with payload";
    }
    if (!same(recv_target, g.sender_target_x) || !same(recv_distractor, g.sender_distractor_x)) {
      return "receiver views disagree with payload";
    }
    return std::nullopt;
  }

  if (store == nullptr) return "store required for image-mode instance";
  for (std::size_t r : {g.sender_target_row, g.sender_distractor_row, g.receiver_left_row,
                        g.receiver_right_row}) {
    if (r >= store->size()) return "row index out of range";
  }
  if (store->concept_of(g.sender_target_row) == store->concept_of(g.sender_distractor_row)) {
    return "sender pair shares a concept";
  }
  const std::size_t recv_target_row =
      g.target_position == 0 ? g.receiver_left_row : g.receiver_right_row;
  const std::size_t recv_distractor_row =
      g.target_position == 0 ? g.receiver_right_row : g.receiver_left_row;
  if (store->concept_of(recv_target_row) != store->concept_of(g.sender_target_row)) {
    return "receiver target concept mismatch";
  }
  if (store->concept_of(recv_distractor_row) != store->concept_of(g.sender_distractor_row)) {
    return "receiver distractor concept mismatch";
  }

  if (g.mode == GameMode::SameImage) {
    if (recv_target_row != g.sender_target_row || recv_distractor_row != g.sender_distractor_row) {
      return "same-image receiver rows differ from sender rows";
    }
  } else {
    if (recv_target_row == g.sender_target_row || recv_target_row == g.sender_distractor_row ||
        recv_distractor_row == g.sender_target_row ||
        recv_distractor_row == g.sender_distractor_row) {
      return "different-image rows not disjoint";
    }
  }
  if (!same(g.sender_target_x, store->row(g.sender_target_row)) ||
      !same(g.sender_distractor_x, store->row(g.sender_distractor_row)) ||
      !same(g.receiver_left_x, store->row(g.receiver_left_row)) ||
      !same(g.receiver_right_x, store->row(g.receiver_right_row))) {
    return "resolved views disagree with store rows";
  }
  return std::nullopt;
}

}  // namespace lewisgame
