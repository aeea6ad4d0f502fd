#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lewisgame/error.hpp"
#include "lewisgame/numerics.hpp"
#include "lewisgame/rng.hpp"

#include "json.hpp"

namespace lewisgame {

inline constexpr std::size_t kNoAction = static_cast<std::size_t>(-1);

// Sender policy: u_t = sigmoid(W_img x_target), u_d = sigmoid(W_img x_distractor),
// logits = W_vocab [u_t ; u_d] + b_vocab, probs = softmax(logits / tau).
struct SenderParams {
  Mat64 w_img;    // h x d
  Mat64 w_vocab;  // V x 2h
  Vec64 b_vocab;  // V
  double tau = 1.0;

  std::size_t hidden_dim() const { return w_img.rows(); }
  std::size_t feature_dim() const { return w_img.cols(); }
  std::size_t vocab_size() const { return w_vocab.rows(); }
};

// Receiver policy: v_j = U_img x_j (linear), e = E_sym column of the symbol,
// scores = [v_left . e, v_right . e], probs = softmax(scores).
struct ReceiverParams {
  Mat64 u_img;  // h x d
  Mat64 e_sym;  // h x V

  std::size_t hidden_dim() const { return u_img.rows(); }
  std::size_t feature_dim() const { return u_img.cols(); }
  std::size_t vocab_size() const { return e_sym.cols(); }
};

struct SenderOutput {
  Vec64 probs;                    // V
  std::size_t symbol = kNoAction; // sampled symbol; kNoAction for eval-only passes
  double log_prob = 0.0;
  Vec64 u_target;                 // cached activations for gradients
  Vec64 u_distractor;
};

struct ReceiverOutput {
  Vec64 probs;                    // 2, over presented positions
  std::size_t choice = kNoAction;
  double log_prob = 0.0;
  Vec64 v_left;
  Vec64 v_right;
  Vec64 e_symbol;
};

struct SenderGrad {
  Mat64 w_img;
  Mat64 w_vocab;
  Vec64 b_vocab;
};

struct ReceiverGrad {
  Mat64 u_img;
  Mat64 e_sym;
};

inline SenderGrad zeros_like(const SenderParams& p) {
  return SenderGrad{Mat64(p.w_img.rows(), p.w_img.cols()),
                    Mat64(p.w_vocab.rows(), p.w_vocab.cols()), Vec64::zeros(p.b_vocab.size())};
}

inline ReceiverGrad zeros_like(const ReceiverParams& p) {
  return ReceiverGrad{Mat64(p.u_img.rows(), p.u_img.cols()),
                      Mat64(p.e_sym.rows(), p.e_sym.cols())};
}

namespace detail {

inline void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace detail

inline void accumulate(SenderGrad& acc, double scale, const SenderGrad& g) {
  detail::axpy(acc.w_img.values(), scale, g.w_img.values());
  detail::axpy(acc.w_vocab.values(), scale, g.w_vocab.values());
  for (std::size_t i = 0; i < acc.b_vocab.size(); ++i) acc.b_vocab[i] += scale * g.b_vocab[i];
}

inline void accumulate(ReceiverGrad& acc, double scale, const ReceiverGrad& g) {
  detail::axpy(acc.u_img.values(), scale, g.u_img.values());
  detail::axpy(acc.e_sym.values(), scale, g.e_sym.values());
}

inline void apply_step(SenderParams& p, double lr, const SenderGrad& g) {
  detail::axpy(p.w_img.values(), lr, g.w_img.values());
  detail::axpy(p.w_vocab.values(), lr, g.w_vocab.values());
  for (std::size_t i = 0; i < p.b_vocab.size(); ++i) p.b_vocab[i] += lr * g.b_vocab[i];
}

inline void apply_step(ReceiverParams& p, double lr, const ReceiverGrad& g) {
  detail::axpy(p.u_img.values(), lr, g.u_img.values());
  detail::axpy(p.e_sym.values(), lr, g.e_sym.values());
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace detail {

inline Mat64 uniform_init(std::size_t rows, std::size_t cols, double bound, RngStream& rng) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = bound * (2.0 * rng.next_double() - 1.0);
  return Mat64(rows, cols, std::move(values));
}

}  // namespace detail

// Glorot-uniform tensors, zero biases. The two image projections are drawn
// once and copied so both agents start from the same view of the input.
inline std::pair<SenderParams, ReceiverParams> init_agents(std::size_t d, std::size_t h,
                                                           std::size_t vocab, RngStream& rng) {
  if (d < 1 || h < 1 || vocab < 1) fail(ErrorKind::Parameter, "init_agents: dims must be >= 1");
  const double a_img = std::sqrt(6.0 / static_cast<double>(d + h));
  const double a_vocab = std::sqrt(6.0 / static_cast<double>(2 * h + vocab));
  const double a_sym = std::sqrt(6.0 / static_cast<double>(vocab + h));

  SenderParams sender;
  sender.w_img = detail::uniform_init(h, d, a_img, rng);
  sender.w_vocab = detail::uniform_init(vocab, 2 * h, a_vocab, rng);
  sender.b_vocab = Vec64::zeros(vocab);
  sender.tau = 1.0;

  ReceiverParams receiver;
  receiver.u_img = sender.w_img;  // identical initial projections
  receiver.e_sym = detail::uniform_init(h, vocab, a_sym, rng);
  return {std::move(sender), std::move(receiver)};
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

// Deterministic part of the sender policy: probabilities and cached
// activations, no action sampled.
inline SenderOutput sender_eval(const SenderParams& p, const Vec64& x_target,
                                const Vec64& x_distractor) {
  if (x_target.size() != p.feature_dim() || x_distractor.size() != p.feature_dim()) {
    fail(ErrorKind::Dimension, "sender: input length does not match feature dim");
  }
  SenderOutput out;
  out.u_target = sigmoid(matvec(p.w_img, x_target));
  out.u_distractor = sigmoid(matvec(p.w_img, x_distractor));
  const std::size_t h = p.hidden_dim();
  Vec64 concat = Vec64::zeros(2 * h);
  for (std::size_t i = 0; i < h; ++i) {
    concat[i] = out.u_target[i];
    concat[h + i] = out.u_distractor[i];
  }
  Vec64 logits = matvec(p.w_vocab, concat);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += p.b_vocab[k];
  out.probs = softmax(logits, p.tau);
  out.log_prob = 0.0;
  // keep the stable log-probabilities around for sampling paths
  out.symbol = kNoAction;
  return out;
}

inline SenderOutput sender_forward(const SenderParams& p, const Vec64& x_target,
                                   const Vec64& x_distractor, RngStream& rng) {
  SenderOutput out = sender_eval(p, x_target, x_distractor);
  out.symbol = sample_categorical(out.probs, rng);
  out.log_prob = std::log(out.probs[out.symbol]);
  return out;
}

inline ReceiverOutput receiver_eval(const ReceiverParams& p, const Vec64& x_left,
                                    const Vec64& x_right, std::size_t symbol) {
  if (symbol >= p.vocab_size()) {
    fail(ErrorKind::Parameter, "receiver: symbol " + std::to_string(symbol) +
                                   " out of range for vocabulary of " +
                                   std::to_string(p.vocab_size()));
  }
  if (x_left.size() != p.feature_dim() || x_right.size() != p.feature_dim()) {
    fail(ErrorKind::Dimension, "receiver: input length does not match feature dim");
  }
  ReceiverOutput out;
  out.v_left = matvec(p.u_img, x_left);
  out.v_right = matvec(p.u_img, x_right);
  out.e_symbol = Vec64::zeros(p.hidden_dim());
  for (std::size_t i = 0; i < p.hidden_dim(); ++i) out.e_symbol[i] = p.e_sym(i, symbol);
  const Vec64 scores{dot(out.v_left, out.e_symbol), dot(out.v_right, out.e_symbol)};
  out.probs = softmax(scores, 1.0);
  return out;
}

inline ReceiverOutput receiver_forward(const ReceiverParams& p, const Vec64& x_left,
                                       const Vec64& x_right, std::size_t symbol,
                                       RngStream& rng) {
  ReceiverOutput out = receiver_eval(p, x_left, x_right, symbol);
  out.choice = sample_categorical(out.probs, rng);
  out.log_prob = std::log(out.probs[out.choice]);
  return out;
}

// ---------------------------------------------------------------------------
// Embedding extractors (the representations analysed downstream)
// ---------------------------------------------------------------------------

inline Vec64 sender_embed(const SenderParams& p, const Vec64& x) {
  if (x.size() != p.feature_dim()) {
    fail(ErrorKind::Dimension, "sender_embed: input length does not match feature dim");
  }
  return sigmoid(matvec(p.w_img, x));
}

inline Vec64 receiver_embed(const ReceiverParams& p, const Vec64& x) {
  if (x.size() != p.feature_dim()) {
    fail(ErrorKind::Dimension, "receiver_embed: input length does not match feature dim");
  }
  return matvec(p.u_img, x);
}

// ---------------------------------------------------------------------------
// Hand-derived score-function gradients
// ---------------------------------------------------------------------------

namespace detail {

// Backprop from d(objective)/d(logits) through the sender network.
// dlogits has length V and already includes any 1/tau factor.
inline SenderGrad sender_backprop(const SenderParams& p, const SenderOutput& out,
                                  const Vec64& x_target, const Vec64& x_distractor,
                                  const Vec64& dlogits) {
  const std::size_t h = p.hidden_dim();
  const std::size_t d = p.feature_dim();
  const std::size_t vocab = p.vocab_size();
  SenderGrad g = zeros_like(p);

  // b_vocab and W_vocab
  Vec64 dconcat = Vec64::zeros(2 * h);
  for (std::size_t k = 0; k < vocab; ++k) {
    g.b_vocab[k] = dlogits[k];
    for (std::size_t j = 0; j < h; ++j) {
      g.w_vocab(k, j) = dlogits[k] * out.u_target[j];
      g.w_vocab(k, h + j) = dlogits[k] * out.u_distractor[j];
      dconcat[j] += dlogits[k] * p.w_vocab(k, j);
      dconcat[h + j] += dlogits[k] * p.w_vocab(k, h + j);
    }
  }

  // through the sigmoid into W_img, for both input branches
  for (std::size_t i = 0; i < h; ++i) {
    const double dt = dconcat[i] * out.u_target[i] * (1.0 - out.u_target[i]);
    const double dd = dconcat[h + i] * out.u_distractor[i] * (1.0 - out.u_distractor[i]);
    for (std::size_t m = 0; m < d; ++m) {
      g.w_img(i, m) = dt * x_target[m] + dd * x_distractor[m];
    }
  }
  return g;
}

}  // namespace detail

// Gradient of log p_S(symbol) with respect to every sender tensor.
inline SenderGrad sender_grad_logp_at(const SenderParams& p, const SenderOutput& out,
                                      const Vec64& x_target, const Vec64& x_distractor,
                                      std::size_t symbol) {
  if (symbol >= p.vocab_size()) fail(ErrorKind::Parameter, "sender_grad_logp: symbol out of range");
  if (out.u_target.size() != p.hidden_dim() || out.u_distractor.size() != p.hidden_dim() ||
      out.probs.size() != p.vocab_size()) {
    fail(ErrorKind::Dimension, "sender_grad_logp: cache does not match parameters");
  }
  // d log p_s / d logits_k = (1[k==s] - p_k) / tau
  Vec64 dlogits = Vec64::zeros(p.vocab_size());
  for (std::size_t k = 0; k < p.vocab_size(); ++k) {
    dlogits[k] = ((k == symbol ? 1.0 : 0.0) - out.probs[k]) / p.tau;
  }
  return detail::sender_backprop(p, out, x_target, x_distractor, dlogits);
}

inline SenderGrad sender_grad_logp(const SenderParams& p, const SenderOutput& out,
                                   const Vec64& x_target, const Vec64& x_distractor) {
  if (out.symbol == kNoAction) {
    fail(ErrorKind::Parameter, "sender_grad_logp: output carries no sampled symbol");
  }
  return sender_grad_logp_at(p, out, x_target, x_distractor, out.symbol);
}

// Gradient of the sender policy entropy H(probs); used by the optional
// entropy bonus.
inline SenderGrad sender_grad_entropy(const SenderParams& p, const SenderOutput& out,
                                      const Vec64& x_target, const Vec64& x_distractor) {
  double entropy = 0.0;
  for (std::size_t k = 0; k < out.probs.size(); ++k) {
    if (out.probs[k] > 0.0) entropy -= out.probs[k] * std::log(out.probs[k]);
  }
  // dH/dz_k = -p_k (log p_k + H), z = logits / tau
  Vec64 dlogits = Vec64::zeros(p.vocab_size());
  for (std::size_t k = 0; k < p.vocab_size(); ++k) {
    const double logp = out.probs[k] > 0.0 ? std::log(out.probs[k]) : 0.0;
    dlogits[k] = -out.probs[k] * (logp + entropy) / p.tau;
  }
  return detail::sender_backprop(p, out, x_target, x_distractor, dlogits);
}

// Gradient of log p_R(choice) with respect to U_img and E_sym.
inline ReceiverGrad receiver_grad_logp_at(const ReceiverParams& p, const ReceiverOutput& out,
                                          const Vec64& x_left, const Vec64& x_right,
                                          std::size_t symbol, std::size_t choice) {
  if (symbol >= p.vocab_size()) {
    fail(ErrorKind::Parameter, "receiver_grad_logp: symbol out of range");
  }
  if (choice > 1) fail(ErrorKind::Parameter, "receiver_grad_logp: choice must be 0 or 1");
  if (out.v_left.size() != p.hidden_dim() || out.v_right.size() != p.hidden_dim() ||
      out.e_symbol.size() != p.hidden_dim() || out.probs.size() != 2) {
    fail(ErrorKind::Dimension, "receiver_grad_logp: cache does not match parameters");
  }
  const std::size_t h = p.hidden_dim();
  const std::size_t d = p.feature_dim();
  ReceiverGrad g = zeros_like(p);
  const double ds_left = (choice == 0 ? 1.0 : 0.0) - out.probs[0];
  const double ds_right = (choice == 1 ? 1.0 : 0.0) - out.probs[1];

  for (std::size_t i = 0; i < h; ++i) {
    // dL/dU = ds_left * e (x) x_left + ds_right * e (x) x_right
    const double ei = out.e_symbol[i];
    for (std::size_t m = 0; m < d; ++m) {
      g.u_img(i, m) = ei * (ds_left * x_left[m] + ds_right * x_right[m]);
    }
    // dL/de = ds_left * v_left + ds_right * v_right, only the symbol column
    g.e_sym(i, symbol) = ds_left * out.v_left[i] + ds_right * out.v_right[i];
  }
  return g;
}

inline ReceiverGrad receiver_grad_logp(const ReceiverParams& p, const ReceiverOutput& out,
                                       const Vec64& x_left, const Vec64& x_right,
                                       std::size_t symbol) {
  if (out.choice == kNoAction) {
    fail(ErrorKind::Parameter, "receiver_grad_logp: output carries no sampled choice");
  }
  return receiver_grad_logp_at(p, out, x_left, x_right, symbol, out.choice);
}

// ---------------------------------------------------------------------------
// LGCK checkpoint format
// ---------------------------------------------------------------------------
//
//   bytes "LGCK" | u32 version=1 | u32 metadata-length | UTF-8 JSON metadata
//   | W_img | W_vocab | b_vocab | U_img | E_sym   (float64 LE, row-major)

struct CheckpointMeta {
  std::size_t d = 0;
  std::size_t h = 0;
  std::size_t vocab = 0;
  double tau = 1.0;
  std::uint64_t seed = 0;
  std::string game_mode = "same-image";
  std::uint64_t batches_trained = 0;
};

struct Checkpoint {
  SenderParams sender;
  ReceiverParams receiver;
  CheckpointMeta meta;
};

namespace detail {

inline void put_u32b(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void put_tensor(std::string& out, const std::vector<double>& values) {
  for (double v : values) put_f64(out, v);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const SenderParams& sender,
                            const ReceiverParams& receiver, const CheckpointMeta& meta) {
  nlohmann::json m;
  m["d"] = meta.d;
  m["h"] = meta.h;
  m["V"] = meta.vocab;
  m["tau"] = meta.tau;
  m["seed"] = meta.seed;
  m["game_mode"] = meta.game_mode;
  m["batches_trained"] = meta.batches_trained;
  const std::string meta_bytes = m.dump();

  std::string bytes;
  bytes += "LGCK";
  detail::put_u32b(bytes, 1u);
  detail::put_u32b(bytes, static_cast<std::uint32_t>(meta_bytes.size()));
  bytes += meta_bytes;
  detail::put_tensor(bytes, sender.w_img.values());
  detail::put_tensor(bytes, sender.w_vocab.values());
  detail::put_tensor(bytes, sender.b_vocab.values());
  detail::put_tensor(bytes, receiver.u_img.values());
  detail::put_tensor(bytes, receiver.e_sym.values());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 12 || bytes.compare(0, 4, "LGCK") != 0) {
    fail(ErrorKind::Format, path + ": not an LGCK checkpoint (bad magic)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto get_u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(p[off]) | (static_cast<std::uint32_t>(p[off + 1]) << 8) |
           (static_cast<std::uint32_t>(p[off + 2]) << 16) |
           (static_cast<std::uint32_t>(p[off + 3]) << 24);
  };
  if (get_u32(4) != 1) {
    fail(ErrorKind::Format, path + ": unsupported LGCK version " + std::to_string(get_u32(4)));
  }
  const std::size_t meta_len = get_u32(8);
  if (bytes.size() < 12 + meta_len) fail(ErrorKind::Format, path + ": truncated metadata");

  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.substr(12, meta_len));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Format, path + ": metadata is not valid JSON: " + e.what());
  }
  for (const char* key : {"d", "h", "V", "tau", "seed", "game_mode", "batches_trained"}) {
    if (!m.contains(key)) fail(ErrorKind::Format, path + ": metadata missing key '" + key + "'");
  }
  CheckpointMeta meta;
  meta.d = m["d"].get<std::size_t>();
  meta.h = m["h"].get<std::size_t>();
  meta.vocab = m["V"].get<std::size_t>();
  meta.tau = m["tau"].get<double>();
  meta.seed = m["seed"].get<std::uint64_t>();
  meta.game_mode = m["game_mode"].get<std::string>();
  meta.batches_trained = m["batches_trained"].get<std::uint64_t>();

  const std::size_t n_doubles = meta.h * meta.d + meta.vocab * 2 * meta.h + meta.vocab +
                                meta.h * meta.d + meta.h * meta.vocab;
  if (bytes.size() != 12 + meta_len + n_doubles * 8) {
    fail(ErrorKind::Format, path + ": tensor payload does not match metadata shapes");
  }
  std::size_t off = 12 + meta_len;
  auto read_tensor = [&](std::size_t count) {
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = detail::get_f64(p + off);
      off += 8;
    }
    return values;
  };

  Checkpoint ck;
  ck.meta = meta;
  ck.sender.w_img = Mat64(meta.h, meta.d, read_tensor(meta.h * meta.d));
  ck.sender.w_vocab = Mat64(meta.vocab, 2 * meta.h, read_tensor(meta.vocab * 2 * meta.h));
  ck.sender.b_vocab = Vec64(read_tensor(meta.vocab));
  ck.sender.tau = meta.tau;
  ck.receiver.u_img = Mat64(meta.h, meta.d, read_tensor(meta.h * meta.d));
  ck.receiver.e_sym = Mat64(meta.h, meta.vocab, read_tensor(meta.h * meta.vocab));
  return ck;
}

}  // namespace lewisgame
