#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "lewisgame/data.hpp"

using namespace lewisgame;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Raw LFS1 writer kept independent of the library's serializer.
void write_raw_lfs1(const std::string& path, std::uint32_t n, std::uint32_t d,
                    const std::vector<float>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write("LFS1", 4);
  auto put_u32 = [&out](std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
  };
  put_u32(1);
  put_u32(n);
  put_u32(d);
  for (float f : payload) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                 static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    out.write(b, 4);
  }
}

void write_manifest(const std::string& path, std::size_t n) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    arr.push_back({{"image_id", "img" + std::to_string(i)},
                   {"concept_id", static_cast<int>(i)},
                   {"class_id", nullptr}});
  }
  std::ofstream(path) << arr.dump();
}

FeatureStore tiny_store(std::size_t concepts, std::size_t images_per_concept,
                        std::uint64_t seed = 0) {
  SyntheticConfig cfg;
  cfg.n_classes = 1;
  cfg.concepts_per_class = concepts;
  cfg.images_per_concept = images_per_concept;
  cfg.dim = 8;
  RngStream rng(seed, Stream::kData);
  return generate_synthetic_features(cfg, rng);
}

double mean_cosine(const FeatureStore& store,
                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  double acc = 0.0;
  for (const auto& [a, b] : pairs) acc += cosine(store.row(a), store.row(b));
  return acc / static_cast<double>(pairs.size());
}

}  // namespace

TEST_CASE("LFS1 load of a minimal well-formed file", "[data]") {
  const std::string f = temp_path("lfs1_min.lfs1");
  write_raw_lfs1(f, 2, 3, {1.0f, 0.0f, 0.0f, 3.0f, 4.0f, 0.0f});
  write_manifest(default_manifest_path(f), 2);
  const FeatureStore store = load_feature_store(f);
  REQUIRE(store.size() == 2);
  REQUIRE(store.dim() == 3);
  CHECK(norm(store.row(0)) == Catch::Approx(1.0).margin(1e-9));
  CHECK(norm(store.row(1)) == Catch::Approx(1.0).margin(1e-9));
  CHECK(store.row(1)[0] == Catch::Approx(0.6).margin(1e-7));
  CHECK(store.row(1)[1] == Catch::Approx(0.8).margin(1e-7));
}

TEST_CASE("LFS1 header and payload mismatches are format errors", "[data]") {
  const std::string f = temp_path("lfs1_bad.lfs1");

  SECTION("row count mismatch") {
    write_raw_lfs1(f, 5, 2, std::vector<float>(8, 1.0f));  // says 5 rows, holds 4
    write_manifest(default_manifest_path(f), 5);
    try {
      load_feature_store(f);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
    }
  }

  SECTION("bad magic") {
    std::ofstream(f, std::ios::binary) << "NOPEnopenopenopenope";
    write_manifest(default_manifest_path(f), 0);
    try {
      load_feature_store(f);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
    }
  }

  SECTION("zero-norm row names the row") {
    write_raw_lfs1(f, 2, 2, {1.0f, 0.0f, 0.0f, 0.0f});
    write_manifest(default_manifest_path(f), 2);
    try {
      load_feature_store(f);
      FAIL("expected format error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Format);
      CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
  }

  SECTION("manifest length mismatch") {
    write_raw_lfs1(f, 2, 2, {1.0f, 0.0f, 0.0f, 1.0f});
    write_manifest(default_manifest_path(f), 3);
    CHECK_THROWS_AS(load_feature_store(f), Error);
  }

  SECTION("missing file is an io error") {
    try {
      load_feature_store(temp_path("does_not_exist.lfs1"));
      FAIL("expected io error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Io);
    }
  }
}

TEST_CASE("LFS1 round-trip preserves manifest and features to f32 precision", "[data]") {
  const FeatureStore store = tiny_store(3, 4, 42);
  const std::string f = temp_path("lfs1_rt.lfs1");
  save_feature_store(store, f);
  const FeatureStore loaded = load_feature_store(f);
  REQUIRE(loaded.size() == store.size());
  REQUIRE(loaded.dim() == store.dim());
  CHECK(loaded.manifest() == store.manifest());
  for (std::size_t r = 0; r < store.size(); ++r) {
    for (std::size_t c = 0; c < store.dim(); ++c) {
      CHECK(loaded.features()(r, c) == Catch::Approx(store.features()(r, c)).margin(1e-6));
    }
  }

  SECTION("loading twice is identical (normalization idempotent)") {
    const FeatureStore again = load_feature_store(f);
    CHECK(again.features() == loaded.features());
  }

  SECTION("saving the loaded store again is byte-identical") {
    const std::string f2 = temp_path("lfs1_rt2.lfs1");
    save_feature_store(loaded, f2);
    save_feature_store(loaded, f);
    std::ifstream a(f, std::ios::binary), b(f2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK_FALSE(sa.empty());
  }
}

TEST_CASE("CSV ingestion", "[data]") {
  const std::string f = temp_path("features.csv");
  std::ofstream(f) << "image_id,concept_id,class_id,f0,f1\n"
                      "a,0,1,1.0,0.0\n"
                      "b,0,,0.0,2.0\n"
                      "c,1,null,1.0,1.0\n";
  const FeatureStore store = load_feature_store_csv(f);
  REQUIRE(store.size() == 3);
  REQUIRE(store.dim() == 2);
  CHECK(store.entry(0).class_id == std::optional<int>(1));
  CHECK_FALSE(store.entry(1).class_id.has_value());
  CHECK_FALSE(store.entry(2).class_id.has_value());
  CHECK(norm(store.row(2)) == Catch::Approx(1.0).margin(1e-12));

  SECTION("inconsistent width is a format error") {
    std::ofstream(f) << "a,0,1,1.0,0.0\nb,0,1,1.0\n";
    CHECK_THROWS_AS(load_feature_store_csv(f), Error);
  }
  SECTION("unparsable number is a format error") {
    std::ofstream(f) << "a,0,1,xyz,0.0\n";
    CHECK_THROWS_AS(load_feature_store_csv(f), Error);
  }
}

TEST_CASE("synthetic generation shapes and manifest", "[data]") {
  SECTION("one concept, two images") {
    const FeatureStore store = tiny_store(1, 2);
    REQUIRE(store.size() == 2);
    CHECK(store.concept_of(0) == store.concept_of(1));
    CHECK(store.concept_ids().size() == 1);
  }

  SECTION("near-zero image spread collapses concepts to a point") {
    SyntheticConfig cfg;
    cfg.n_classes = 1;
    cfg.concepts_per_class = 2;
    cfg.images_per_concept = 3;
    cfg.dim = 16;
    cfg.image_spread = 1e-12;
    RngStream rng(7, Stream::kData);
    const FeatureStore store = generate_synthetic_features(cfg, rng);
    for (int cid : store.concept_ids()) {
      const auto& rows = store.rows_of_concept(cid);
      for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(cosine(store.row(rows[0]), store.row(rows[i])) ==
              Catch::Approx(1.0).margin(1e-9));
      }
    }
  }

  SECTION("default config separates concept structure") {
    SyntheticConfig cfg;            // 5 classes x 10 concepts, d=64
    cfg.images_per_concept = 20;    // smaller than default for test speed
    RngStream rng(11, Stream::kData);
    const FeatureStore store = generate_synthetic_features(cfg, rng);
    REQUIRE(store.size() == 1000);
    REQUIRE(store.n_classes() == 5);

    RngStream pick(0, Stream::kEval);
    std::vector<std::pair<std::size_t, std::size_t>> within, across;
    while (within.size() < 400) {
      const int cid = store.concept_ids()[pick.next_index(store.concept_ids().size())];
      const auto& rows = store.rows_of_concept(cid);
      const std::size_t a = pick.next_index(rows.size());
      std::size_t b = pick.next_index(rows.size() - 1);
      if (b >= a) ++b;
      within.emplace_back(rows[a], rows[b]);
    }
    while (across.size() < 400) {
      const std::size_t a = pick.next_index(store.size());
      const std::size_t b = pick.next_index(store.size());
      if (store.concept_of(a) != store.concept_of(b)) across.emplace_back(a, b);
    }
    CHECK(mean_cosine(store, within) > mean_cosine(store, across));
  }

  SECTION("deterministic given seed") {
    const FeatureStore a = tiny_store(3, 5, 99);
    const FeatureStore b = tiny_store(3, 5, 99);
    CHECK(a.features() == b.features());
    CHECK(a.manifest() == b.manifest());
  }

  SECTION("config validation") {
    SyntheticConfig cfg;
    cfg.n_classes = 0;
    RngStream rng(0, Stream::kData);
    CHECK_THROWS_AS(generate_synthetic_features(cfg, rng), Error);
    cfg = SyntheticConfig{};
    cfg.image_spread = 0.0;
    CHECK_THROWS_AS(generate_synthetic_features(cfg, rng), Error);
  }
}

TEST_CASE("synthetic hierarchy orders within-concept, within-class, across-class", "[data]") {
  SyntheticConfig cfg;
  cfg.images_per_concept = 10;
  RngStream rng(5, Stream::kData);
  const FeatureStore store = generate_synthetic_features(cfg, rng);
  double sum_concept = 0.0, sum_class = 0.0, sum_across = 0.0;
  std::size_t n_concept = 0, n_class = 0, n_across = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (std::size_t j = i + 1; j < store.size(); ++j) {
      const double sim = cosine(store.row(i), store.row(j));
      if (store.concept_of(i) == store.concept_of(j)) {
        sum_concept += sim;
        ++n_concept;
      } else if (store.class_of(i) == store.class_of(j)) {
        sum_class += sim;
        ++n_class;
      } else {
        sum_across += sim;
        ++n_across;
      }
    }
  }
  const double mean_concept = sum_concept / static_cast<double>(n_concept);
  const double mean_class = sum_class / static_cast<double>(n_class);
  const double mean_across = sum_across / static_cast<double>(n_across);
  CHECK(mean_concept > mean_class);
  CHECK(mean_class > mean_across);
}

TEST_CASE("splits are disjoint and sized per concept", "[data]") {
  const FeatureStore store = tiny_store(4, 10);
  RngStream rng(1, Stream::kSplit);
  const SplitSpec split = make_splits(store, 2, 3, rng);
  CHECK(split.test_rows.size() == 8);
  CHECK(split.validation_rows.size() == 12);
  CHECK(split.train_rows.size() == 20);

  std::set<std::size_t> all;
  for (const auto* rows : {&split.train_rows, &split.validation_rows, &split.test_rows}) {
    for (std::size_t r : *rows) {
      CHECK(all.insert(r).second);  // no row in more than one split
    }
  }
  CHECK(all.size() == store.size());

  SECTION("not enough rows per concept") {
    RngStream rng2(1, Stream::kSplit);
    CHECK_THROWS_AS(make_splits(store, 5, 5, rng2), Error);
  }
}

TEST_CASE("same-image sampler respects its contract", "[data]") {
  const FeatureStore store = tiny_store(4, 3);
  const SamplePool pool = make_pool(store, all_rows(store));
  RngStream rng(17, Stream::kSampling);
  for (int i = 0; i < 2000; ++i) {
    const GameInstance g = sample_same_image_game(store, pool, rng);
    CHECK_FALSE(check_instance(&store, g).has_value());
  }
}

TEST_CASE("same-image sampler on a forced 2-concept support", "[data]") {
  const FeatureStore store = tiny_store(2, 1);
  const SamplePool pool = make_pool(store, all_rows(store));
  RngStream rng(23, Stream::kSampling);
  bool saw_target0 = false, saw_target1 = false;
  for (int i = 0; i < 200; ++i) {
    const GameInstance g = sample_same_image_game(store, pool, rng);
    const std::set<std::size_t> rows{g.sender_target_row, g.sender_distractor_row};
    CHECK(rows == std::set<std::size_t>{0, 1});
    if (g.sender_target_row == 0) saw_target0 = true;
    if (g.sender_target_row == 1) saw_target1 = true;
  }
  CHECK(saw_target0);
  CHECK(saw_target1);
}

TEST_CASE("same-image concept pairs near uniform over 10k draws", "[data]") {
  const FeatureStore store = tiny_store(4, 2);
  const SamplePool pool = make_pool(store, all_rows(store));
  RngStream rng(31, Stream::kSampling);
  std::map<std::pair<int, int>, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const GameInstance g = sample_same_image_game(store, pool, rng);
    int a = store.concept_of(g.sender_target_row);
    int b = store.concept_of(g.sender_distractor_row);
    if (a > b) std::swap(a, b);
    counts[{a, b}] += 1;
  }
  REQUIRE(counts.size() == 6);  // C(4,2) unordered pairs
  const double expected = n / 6.0;
  for (const auto& [pair, c] : counts) {
    CHECK(c > expected * 0.8);
    CHECK(c < expected * 1.2);
  }
}

TEST_CASE("same-image sampler needs two concepts", "[data]") {
  const FeatureStore store = tiny_store(1, 4);
  const SamplePool pool = make_pool(store, all_rows(store));
  RngStream rng(0, Stream::kSampling);
  CHECK_THROWS_AS(sample_same_image_game(store, pool, rng), Error);
}

TEST_CASE("different-image sampler respects its contract", "[data]") {
  const FeatureStore store = tiny_store(3, 4);
  const SamplePool pool = make_pool(store, all_rows(store));
  RngStream rng(41, Stream::kSampling);
  for (int i = 0; i < 2000; ++i) {
    const GameInstance g = sample_different_image_game(store, pool, rng);
    CHECK_FALSE(check_instance(&store, g).has_value());
  }
}

TEST_CASE("different-image on 2x2 support gives complements", "[data]") {
  const FeatureStore store = tiny_store(2, 2);
  const SamplePool pool = make_pool(store, all_rows(store));
  RngStream rng(43, Stream::kSampling);
  for (int i = 0; i < 200; ++i) {
    const GameInstance g = sample_different_image_game(store, pool, rng);
    std::set<std::size_t> all{g.sender_target_row, g.sender_distractor_row, g.receiver_left_row,
                              g.receiver_right_row};
    CHECK(all.size() == 4);  // receiver rows are exactly the complements
  }
}

TEST_CASE("different-image receiver target position is a fair coin", "[data]") {
  const FeatureStore store = tiny_store(3, 3);
  const SamplePool pool = make_pool(store, all_rows(store));
  RngStream rng(47, Stream::kSampling);
  int at0 = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    if (sample_different_image_game(store, pool, rng).target_position == 0) ++at0;
  }
  const double freq = static_cast<double>(at0) / n;
  CHECK(freq >= 0.48);
  CHECK(freq <= 0.52);
}

TEST_CASE("different-image sampler rejects single-image concepts by name", "[data]") {
  const FeatureStore store = tiny_store(2, 1);
  const SamplePool pool = make_pool(store, all_rows(store));
  RngStream rng(0, Stream::kSampling);
  try {
    sample_different_image_game(store, pool, rng);
    FAIL("expected dataset error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dataset);
    CHECK(std::string(e.what()).find("concept") != std::string::npos);
  }
}

TEST_CASE("noise sampler emits unit payloads with low cross-similarity", "[data]") {
  RngStream rng(53, Stream::kNoise);
  double abs_cos_sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const GameInstance g = sample_noise_game(64, rng);
    CHECK_FALSE(check_instance(nullptr, g).has_value());
    REQUIRE(g.noise_payload.has_value());
    CHECK(norm(g.noise_payload->first) == Catch::Approx(1.0).margin(1e-9));
    CHECK(norm(g.noise_payload->second) == Catch::Approx(1.0).margin(1e-9));
    abs_cos_sum += std::abs(cosine(g.noise_payload->first, g.noise_payload->second));
  }
  CHECK(abs_cos_sum / 1000.0 <= 0.25);

  SECTION("paper-scale dimensionality works") {
    const GameInstance g = sample_noise_game(4096, rng);
    CHECK(g.sender_target_x.size() == 4096);
  }
  SECTION("d below 2 rejected") {
    CHECK_THROWS_AS(sample_noise_game(1, rng), Error);
  }
}

TEST_CASE("validation set is fixed by seed", "[data]") {
  const FeatureStore store = tiny_store(4, 4);
  const SamplePool pool = make_pool(store, all_rows(store));

  auto build = [&](std::uint64_t seed, std::size_t n) {
    RngStream rng(seed, Stream::kEval);
    return build_validation_set(store, pool, GameMode::SameImage, n, rng);
  };
  const auto a = build(5, 32);
  const auto b = build(5, 32);
  REQUIRE(a.size() == 32);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sender_target_row == b[i].sender_target_row);
    CHECK(a[i].sender_distractor_row == b[i].sender_distractor_row);
    CHECK(a[i].receiver_left_row == b[i].receiver_left_row);
    CHECK(a[i].target_position == b[i].target_position);
  }

  CHECK(build(5, 1).size() == 1);
  RngStream rng(0, Stream::kEval);
  CHECK_THROWS_AS(build_validation_set(store, pool, GameMode::Noise, 4, rng), Error);
  CHECK_THROWS_AS(build_validation_set(store, pool, GameMode::SameImage, 0, rng), Error);
}

TEST_CASE("game mode string round trip", "[data]") {
  CHECK(game_mode_from_string("same-image") == GameMode::SameImage);
  CHECK(game_mode_from_string("diff") == GameMode::DifferentImage);
  CHECK(to_string(GameMode::Noise) == "noise");
  CHECK_THROWS_AS(game_mode_from_string("bogus"), Error);
}
