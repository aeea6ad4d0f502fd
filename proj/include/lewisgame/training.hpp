#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lewisgame/agents.hpp"
#include "lewisgame/analysis.hpp"
#include "lewisgame/data.hpp"
#include "lewisgame/error.hpp"
#include "lewisgame/game.hpp"
#include "lewisgame/rng.hpp"

namespace lewisgame {

struct TrainConfig {
  std::size_t vocab_size = 100;  // V
  std::size_t hidden_dim = 50;   // h
  std::size_t batch_size = 32;
  std::size_t total_batches = 50000;
  double learning_rate = 0.01;
  double baseline_decay = 0.99;
  double entropy_bonus = 0.0;          // off by default
  std::size_t validation_every = 100;  // batches between validation records
  GameMode mode = GameMode::SameImage;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::size_t validation_pairs = 1024;
  std::size_t test_rows_per_concept = 10;
  std::size_t validation_rows_per_concept = 10;
  std::size_t rsa_probe_size = 100;  // probe items for curve RSA; 0 disables

  void validate() const {
    if (vocab_size < 2) fail(ErrorKind::Config, "TrainConfig: vocab_size must be >= 2");
    if (vocab_size > 1000) {
      fail(ErrorKind::Config, "TrainConfig: vocab_size above the supported 2..1000 range");
    }
    if (hidden_dim < 1) fail(ErrorKind::Config, "TrainConfig: hidden_dim must be >= 1");
    if (batch_size < 1) fail(ErrorKind::Config, "TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail(ErrorKind::Config, "TrainConfig: learning_rate must be > 0");
    if (!(baseline_decay > 0.0 && baseline_decay < 1.0)) {
      fail(ErrorKind::Config, "TrainConfig: baseline_decay must be in (0,1)");
    }
    if (entropy_bonus < 0.0) fail(ErrorKind::Config, "TrainConfig: entropy_bonus must be >= 0");
    if (validation_every < 1) fail(ErrorKind::Config, "TrainConfig: validation_every must be >= 1");
    if (validation_pairs < 1) fail(ErrorKind::Config, "TrainConfig: validation_pairs must be >= 1");
    if (!(temperature > 0.0)) fail(ErrorKind::Config, "TrainConfig: temperature must be > 0");
    if (mode == GameMode::Noise) {
      fail(ErrorKind::Config, "TrainConfig: training mode must be same-image or different-image");
    }
  }
};

// Exponential moving average of the batch reward, subtracted from rewards to
// reduce gradient variance without changing the estimator's expectation.
struct BaselineState {
  double value = 0.0;
  double decay = 0.99;

  void update(double mean_batch_reward) {
    value = decay * value + (1.0 - decay) * mean_batch_reward;
  }
};

// One baseline-corrected policy-gradient ascent step from a played batch.
// The baseline is read once for the whole batch and updated afterwards from
// the batch's mean reward. Gradients are averaged, not summed, so the
// learning rate is independent of batch size.
inline void reinforce_update(SenderParams& sender, ReceiverParams& receiver,
                             const std::vector<TrajectoryRecord>& batch, BaselineState& baseline,
                             double learning_rate, double entropy_bonus = 0.0) {
  if (batch.empty()) fail(ErrorKind::Parameter, "reinforce_update: empty batch");
  SenderGrad s_acc = zeros_like(sender);
  ReceiverGrad r_acc = zeros_like(receiver);
  const double b = baseline.value;
  double reward_sum = 0.0;
  for (const TrajectoryRecord& t : batch) {
    reward_sum += t.reward;
    const double advantage = t.reward - b;
    if (advantage != 0.0) {
      accumulate(s_acc, advantage,
                 sender_grad_logp(sender, t.sender_out, t.instance.sender_target_x,
                                  t.instance.sender_distractor_x));
      accumulate(r_acc, advantage,
                 receiver_grad_logp(receiver, t.receiver_out, t.instance.receiver_left_x,
                                    t.instance.receiver_right_x, t.sender_out.symbol));
    }
    if (entropy_bonus > 0.0) {
      accumulate(s_acc, entropy_bonus,
                 sender_grad_entropy(sender, t.sender_out, t.instance.sender_target_x,
                                     t.instance.sender_distractor_x));
    }
  }
  const double scale = learning_rate / static_cast<double>(batch.size());
  apply_step(sender, scale, s_acc);
  apply_step(receiver, scale, r_acc);
  baseline.update(reward_sum / static_cast<double>(batch.size()));
}

struct ValidationRecord {
  std::size_t batch = 0;
  double mvr = 0.0;
  std::optional<double> rsa_sr;
  std::optional<double> rsa_si;
  std::optional<double> rsa_ri;
};

inline constexpr double kSuccessThreshold = 0.80;

struct TrainRunResult {
  SenderParams sender;
  ReceiverParams receiver;
  std::vector<ValidationRecord> curve;
  bool success = false;  // final MVR >= 0.80
  std::uint64_t seed = 0;
  double final_mvr = 0.0;
  SplitSpec split;
  std::vector<std::size_t> probe_rows;
  std::size_t batches_trained = 0;
};

// Full training run: fixed splits and validation set, `total_batches`
// Reinforce updates, a validation record every `validation_every` batches
// plus one final record. Everything is derived from (config, store, seed).
inline TrainRunResult train(const TrainConfig& config, const FeatureStore& store) {
  config.validate();
  const std::size_t d = store.dim();

  TrainRunResult result;
  result.seed = config.seed;

  RngStream split_rng(config.seed, Stream::kSplit);
  result.split = make_splits(store, config.test_rows_per_concept,
                             config.validation_rows_per_concept, split_rng);
  const SamplePool train_pool = make_pool(store, result.split.train_rows);
  const SamplePool val_pool = make_pool(store, result.split.validation_rows);

  RngStream init_rng(config.seed, Stream::kInit);
  auto [sender, receiver] = init_agents(d, config.hidden_dim, config.vocab_size, init_rng);
  sender.tau = config.temperature;

  RngStream eval_rng(config.seed, Stream::kEval);
  const std::vector<GameInstance> validation_set =
      build_validation_set(store, val_pool, config.mode, config.validation_pairs, eval_rng);

  if (config.rsa_probe_size >= 3 && result.split.test_rows.size() >= 3) {
    result.probe_rows =
        select_probe_rows(result.split.test_rows, config.rsa_probe_size, config.seed);
  }

  auto record_validation = [&](std::size_t batch_index) {
    ValidationRecord rec;
    rec.batch = batch_index;
    rec.mvr = evaluate(sender, receiver, validation_set, eval_rng, 1);
    if (!result.probe_rows.empty()) {
      const AlignmentReport a = alignment_report(store, sender, receiver, result.probe_rows);
      rec.rsa_sr = a.rho_sr;
      rec.rsa_si = a.rho_si;
      rec.rsa_ri = a.rho_ri;
    }
    result.curve.push_back(rec);
    return rec.mvr;
  };

  RngStream sampling_rng(config.seed, Stream::kSampling);
  BaselineState baseline{0.0, config.baseline_decay};
  std::vector<TrajectoryRecord> batch;
  batch.reserve(config.batch_size);
  double last_mvr = 0.0;
  bool have_final_record = false;
  for (std::size_t b = 1; b <= config.total_batches; ++b) {
    batch.clear();
    for (std::size_t i = 0; i < config.batch_size; ++i) {
      GameInstance g = config.mode == GameMode::SameImage
                           ? sample_same_image_game(store, train_pool, sampling_rng)
                           : sample_different_image_game(store, train_pool, sampling_rng);
      batch.push_back(play_game(sender, receiver, g, sampling_rng));
    }
    reinforce_update(sender, receiver, batch, baseline, config.learning_rate,
                     config.entropy_bonus);
    if (b % config.validation_every == 0) {
      last_mvr = record_validation(b);
      have_final_record = b == config.total_batches;
    }
  }
  if (!have_final_record) {
    last_mvr = record_validation(config.total_batches);
  }

  result.sender = std::move(sender);
  result.receiver = std::move(receiver);
  result.final_mvr = last_mvr;
  result.success = last_mvr >= kSuccessThreshold;
  result.batches_trained = config.total_batches;
  return result;
}

// Independent runs with seeds 0..n_seeds-1. Worker threads each own their
// run's RNG streams, so results are identical for any thread count; they are
// returned ordered by seed. n_threads = 0 picks from LEWISGAME_THREADS or the
// hardware concurrency.
inline std::vector<TrainRunResult> run_seed_sweep(
    const TrainConfig& config, const FeatureStore& store, std::size_t n_seeds,
    std::size_t n_threads = 0,
    const std::function<void(const TrainRunResult&)>& on_complete = nullptr) {
  if (n_seeds < 1) fail(ErrorKind::Parameter, "run_seed_sweep: n_seeds must be >= 1");
  if (n_threads == 0) {
    if (const char* env = std::getenv("LEWISGAME_THREADS")) {
      const long parsed = std::strtol(env, nullptr, 10);
      if (parsed >= 1) n_threads = static_cast<std::size_t>(parsed);
    }
    if (n_threads == 0) {
      const unsigned hw = std::thread::hardware_concurrency();
      n_threads = hw > 0 ? hw : 1;
    }
  }
  n_threads = std::min(n_threads, n_seeds);

  std::vector<std::optional<TrainRunResult>> slots(n_seeds);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first_error;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_seeds) return;
      try {
        TrainConfig cfg = config;
        cfg.seed = static_cast<std::uint64_t>(i);
        TrainRunResult r = train(cfg, store);
        std::lock_guard<std::mutex> lock(mu);
        slots[i] = std::move(r);
        if (on_complete) on_complete(*slots[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<TrainRunResult> results;
  results.reserve(n_seeds);
  for (auto& slot : slots) results.push_back(std::move(*slot));
  return results;
}

}  // namespace lewisgame
