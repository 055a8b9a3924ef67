#include "respllm/model/transformer.hpp"

#include <cmath>

namespace respllm {

std::pair<Parameter*, Parameter*> make_layer_norm(ParameterSet& params, const std::string& prefix,
                                                  Eigen::Index width, bool trainable) {
  Parameter& g = params.add(prefix + ".gamma", Matrix::Ones(1, width), trainable);
  Parameter& b = params.add(prefix + ".beta", Matrix::Zero(1, width), trainable);
  return {&g, &b};
}

TransformerBlock make_transformer_block(ParameterSet& params, const std::string& prefix,
                                        Eigen::Index width, int heads, int ffn_mult, Rng& rng,
                                        bool trainable) {
  if (heads <= 0 || width % heads != 0)
    throw ConfigError("transformer block: width " + std::to_string(width) +
                      " not divisible by " + std::to_string(heads) + " heads");
  if (ffn_mult < 1) throw ConfigError("transformer block: ffn_mult must be >= 1");
  const Eigen::Index hidden = width * ffn_mult;
  const double s_in = 1.0 / std::sqrt(static_cast<double>(width));
  const double s_hidden = 1.0 / std::sqrt(static_cast<double>(hidden));
  TransformerBlock b;
  b.heads = heads;
  std::tie(b.ln1_gamma, b.ln1_beta) = make_layer_norm(params, prefix + ".ln1", width, trainable);
  b.wq = &params.add(prefix + ".attn.wq", normal_matrix(width, width, s_in, rng), trainable);
  b.wk = &params.add(prefix + ".attn.wk", normal_matrix(width, width, s_in, rng), trainable);
  b.wv = &params.add(prefix + ".attn.wv", normal_matrix(width, width, s_in, rng), trainable);
  b.wo = &params.add(prefix + ".attn.wo", normal_matrix(width, width, s_in, rng), trainable);
  std::tie(b.ln2_gamma, b.ln2_beta) = make_layer_norm(params, prefix + ".ln2", width, trainable);
  b.w1 = &params.add(prefix + ".ffn.w1", normal_matrix(width, hidden, s_in, rng), trainable);
  b.b1 = &params.add(prefix + ".ffn.b1", Matrix::Zero(1, hidden), trainable);
  b.w2 = &params.add(prefix + ".ffn.w2", normal_matrix(hidden, width, s_hidden, rng), trainable);
  b.b2 = &params.add(prefix + ".ffn.b2", Matrix::Zero(1, width), trainable);
  return b;
}

Var TransformerBlock::forward(Tape& tape, Var x, const AttentionMask& mask,
                              bool use_adapters) const {
  Var h = ops::layer_norm(x, tape.param(*ln1_gamma), tape.param(*ln1_beta));
  Var q = (use_adapters && q_lora) ? lora_linear(tape, h, *wq, *q_lora)
                                   : ops::matmul(h, tape.param(*wq));
  Var k = (use_adapters && k_lora) ? lora_linear(tape, h, *wk, *k_lora)
                                   : ops::matmul(h, tape.param(*wk));
  Var v = ops::matmul(h, tape.param(*wv));
  Var attn = ops::matmul(ops::attention(q, k, v, heads, mask), tape.param(*wo));
  Var x1 = ops::add(x, attn);
  Var h2 = ops::layer_norm(x1, tape.param(*ln2_gamma), tape.param(*ln2_beta));
  Var ff = ops::gelu(ops::linear(h2, tape.param(*w1), tape.param(*b1)));
  ff = ops::linear(ff, tape.param(*w2), tape.param(*b2));
  return ops::add(x1, ff);
}

}  // namespace respllm
