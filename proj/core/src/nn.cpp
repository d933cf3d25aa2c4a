#include "phenotag/nn.hpp"

namespace phenotag {

template <typename T>
Linear<T>::Linear(ParameterSet<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  weight_ = params.add(name + ".weight", init_dense<T>(Shape{in, out}, in, rng));
  bias_ = params.add(name + ".bias", init_dense<T>(Shape{out}, in, rng));
}

template <typename T>
Var<T> Linear<T>::operator()(const Var<T>& x) const {
  return ops::add_bias(ops::matmul(x, weight_), bias_);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParameterSet<T>& params, const std::string& name, std::size_t width) {
  gamma_ = params.add(name + ".gamma", Tensor<T>(Shape{width}, T(1)));
  beta_ = params.add(name + ".beta", Tensor<T>(Shape{width}, T(0)));
}

template <typename T>
Var<T> LayerNorm<T>::operator()(const Var<T>& x) const {
  return ops::layer_norm(x, gamma_, beta_);
}

template <typename T>
EncoderLayer<T>::EncoderLayer(ParameterSet<T>& params, const std::string& prefix, const EncoderConfig& cfg,
                              Rng& rng)
    : heads_(cfg.heads) {
  if (cfg.heads == 0 || cfg.hidden % cfg.heads != 0) {
    throw ConfigError("hidden size " + std::to_string(cfg.hidden) + " is not divisible by " +
                      std::to_string(cfg.heads) + " heads");
  }
  attn_norm_ = LayerNorm<T>(params, prefix + ".attn_norm", cfg.hidden);
  query_ = Linear<T>(params, prefix + ".query", cfg.hidden, cfg.hidden, rng);
  key_ = Linear<T>(params, prefix + ".key", cfg.hidden, cfg.hidden, rng);
  value_ = Linear<T>(params, prefix + ".value", cfg.hidden, cfg.hidden, rng);
  out_ = Linear<T>(params, prefix + ".attn_out", cfg.hidden, cfg.hidden, rng);
  ffn_norm_ = LayerNorm<T>(params, prefix + ".ffn_norm", cfg.hidden);
  ffn_in_ = Linear<T>(params, prefix + ".ffn_in", cfg.hidden, cfg.ffn, rng);
  ffn_out_ = Linear<T>(params, prefix + ".ffn_out", cfg.ffn, cfg.hidden, rng);
}

template <typename T>
Var<T> EncoderLayer<T>::operator()(const Var<T>& x, std::span<const Segment> segments) const {
  const auto h = attn_norm_(x);
  const auto attn = ops::segment_attention(query_(h), key_(h), value_(h), segments, heads_);
  const auto x1 = ops::add(x, out_(attn));
  const auto f = ffn_out_(ops::relu(ffn_in_(ffn_norm_(x1))));
  return ops::add(x1, f);
}

template <typename T>
TransformerEncoder<T>::TransformerEncoder(ParameterSet<T>& params, const std::string& prefix,
                                          const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.vocab_size == 0) throw ConfigError("encoder vocabulary is empty");
  token_embedding_ = params.add(prefix + ".token_embedding", init_normal<T>(Shape{cfg.vocab_size, cfg.hidden}, 0.02, rng));
  position_embedding_ =
      params.add(prefix + ".position_embedding", init_normal<T>(Shape{cfg.max_len, cfg.hidden}, 0.02, rng));
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    layers_.emplace_back(params, prefix + ".layer" + std::to_string(i), cfg, rng);
  }
  final_norm_ = LayerNorm<T>(params, prefix + ".final_norm", cfg.hidden);
}

template <typename T>
Var<T> TransformerEncoder<T>::operator()(std::span<const std::int32_t> ids, std::span<const Segment> segments) const {
  std::vector<std::int32_t> positions(ids.size());
  for (const auto& seg : segments) {
    if (seg.length > cfg_.max_len) {
      throw UsageError("sequence of " + std::to_string(seg.length) + " tokens exceeds max_len " +
                       std::to_string(cfg_.max_len));
    }
    for (std::size_t i = 0; i < seg.length; ++i) positions.at(seg.offset + i) = static_cast<std::int32_t>(i);
  }
  auto x = ops::add(ops::embedding(token_embedding_, ids), ops::embedding(position_embedding_, std::span<const std::int32_t>(positions)));
  for (const auto& layer : layers_) x = layer(x, segments);
  return final_norm_(x);
}

template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class EncoderLayer<float>;
template class EncoderLayer<double>;
template class TransformerEncoder<float>;
template class TransformerEncoder<double>;

}  // namespace phenotag
