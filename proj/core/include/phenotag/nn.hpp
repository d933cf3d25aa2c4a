#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phenotag/autodiff.hpp"
#include "phenotag/optim.hpp"
#include "phenotag/random.hpp"

namespace phenotag {

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  // x: [n, in] -> [n, out]
  Var<T> operator()(const Var<T>& x) const;
  std::size_t in_features() const { return weight_.value().dim(0); }
  std::size_t out_features() const { return weight_.value().dim(1); }

 private:
  Var<T> weight_;
  Var<T> bias_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet<T>& params, const std::string& name, std::size_t width);
  Var<T> operator()(const Var<T>& x) const;

 private:
  Var<T> gamma_;
  Var<T> beta_;
};

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t max_len = 64;
};

// Pre-norm Transformer block: x + MHA(LN(x)), then x + FFN(LN(x)).
template <typename T>
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParameterSet<T>& params, const std::string& prefix, const EncoderConfig& cfg, Rng& rng);
  Var<T> operator()(const Var<T>& x, std::span<const Segment> segments) const;

 private:
  std::size_t heads_ = 1;
  LayerNorm<T> attn_norm_, ffn_norm_;
  Linear<T> query_, key_, value_, out_;
  Linear<T> ffn_in_, ffn_out_;
};

// Token + learned position embeddings, a stack of encoder layers and a final
// layer norm. Sequences are packed back to back and delimited by segments.
template <typename T>
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterSet<T>& params, const std::string& prefix, const EncoderConfig& cfg, Rng& rng);

  // ids: packed token ids; returns [ids.size(), hidden].
  Var<T> operator()(std::span<const std::int32_t> ids, std::span<const Segment> segments) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  Var<T> token_embedding_;
  Var<T> position_embedding_;
  std::vector<EncoderLayer<T>> layers_;
  LayerNorm<T> final_norm_;
};

// Packs variable-length sequences back to back.
struct PackedBatch {
  std::vector<std::int32_t> ids;
  std::vector<Segment> segments;

  void append(std::span<const std::int32_t> seq) {
    segments.push_back({ids.size(), seq.size()});
    ids.insert(ids.end(), seq.begin(), seq.end());
  }
};

}  // namespace phenotag
