#pragma once

#include <cstddef>
#include <vector>

#include "lewisgame/agents.hpp"
#include "lewisgame/data.hpp"
#include "lewisgame/error.hpp"
#include "lewisgame/rng.hpp"

namespace lewisgame {

// One played round: actions, reward, and the cached activations the
// policy-gradient update needs.
struct TrajectoryRecord {
  GameInstance instance;
  SenderOutput sender_out;
  ReceiverOutput receiver_out;
  double reward = 0.0;  // 1 iff the receiver picked the target position
};

inline TrajectoryRecord play_game(const SenderParams& sender, const ReceiverParams& receiver,
                                  const GameInstance& instance, RngStream& rng) {
  TrajectoryRecord t;
  t.instance = instance;
  t.sender_out =
      sender_forward(sender, instance.sender_target_x, instance.sender_distractor_x, rng);
  t.receiver_out = receiver_forward(receiver, instance.receiver_left_x, instance.receiver_right_x,
                                    t.sender_out.symbol, rng);
  t.reward = t.receiver_out.choice == static_cast<std::size_t>(instance.target_position) ? 1.0
                                                                                         : 0.0;
  return t;
}

// Mean reward over `repeats` sampled plays of every instance.
inline double evaluate(const SenderParams& sender, const ReceiverParams& receiver,
                       const std::vector<GameInstance>& instances, RngStream& rng,
                       std::size_t repeats = 1) {
  if (instances.empty()) fail(ErrorKind::Parameter, "evaluate: empty instance list");
  if (repeats < 1) fail(ErrorKind::Parameter, "evaluate: repeats must be >= 1");
  double total = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    for (const GameInstance& g : instances) {
      total += play_game(sender, receiver, g, rng).reward;
    }
  }
  return total / static_cast<double>(repeats * instances.size());
}

inline constexpr std::size_t kEnumerationGuard = 1000;

// Exact expected reward sum_s p_S(s) p_R(target | s), enumerating the whole
// vocabulary. Test oracle; guarded against large V.
inline double expected_reward_exact(const SenderParams& sender, const ReceiverParams& receiver,
                                    const GameInstance& instance) {
  if (sender.vocab_size() > kEnumerationGuard) {
    fail(ErrorKind::Guard, "expected_reward_exact: vocabulary exceeds enumeration guard");
  }
  const SenderOutput s_eval =
      sender_eval(sender, instance.sender_target_x, instance.sender_distractor_x);
  const auto target = static_cast<std::size_t>(instance.target_position);
  double expectation = 0.0;
  for (std::size_t s = 0; s < sender.vocab_size(); ++s) {
    if (s_eval.probs[s] == 0.0) continue;
    const ReceiverOutput r_eval =
        receiver_eval(receiver, instance.receiver_left_x, instance.receiver_right_x, s);
    expectation += s_eval.probs[s] * r_eval.probs[target];
  }
  return expectation;
}

struct ExpectedRewardGrad {
  SenderGrad sender;
  ReceiverGrad receiver;
};

// Exact gradient of expected_reward_exact for both agents:
//   d/dθ E[r] = sum_s p_S(s) p_R(T|s) [ dlog p_S(s)/dθ_S + dlog p_R(T|s)/dθ_R ]
inline ExpectedRewardGrad expected_reward_grad_exact(const SenderParams& sender,
                                                     const ReceiverParams& receiver,
                                                     const GameInstance& instance) {
  if (sender.vocab_size() > kEnumerationGuard) {
    fail(ErrorKind::Guard, "expected_reward_grad_exact: vocabulary exceeds enumeration guard");
  }
  const SenderOutput s_eval =
      sender_eval(sender, instance.sender_target_x, instance.sender_distractor_x);
  const auto target = static_cast<std::size_t>(instance.target_position);
  ExpectedRewardGrad g{zeros_like(sender), zeros_like(receiver)};
  for (std::size_t s = 0; s < sender.vocab_size(); ++s) {
    if (s_eval.probs[s] == 0.0) continue;
    const ReceiverOutput r_eval =
        receiver_eval(receiver, instance.receiver_left_x, instance.receiver_right_x, s);
    const double weight = s_eval.probs[s] * r_eval.probs[target];
    if (weight == 0.0) continue;
    accumulate(g.sender, weight,
               sender_grad_logp_at(sender, s_eval, instance.sender_target_x,
                                   instance.sender_distractor_x, s));
    accumulate(g.receiver, weight,
               receiver_grad_logp_at(receiver, r_eval, instance.receiver_left_x,
                                     instance.receiver_right_x, s, target));
  }
  return g;
}

}  // namespace lewisgame
