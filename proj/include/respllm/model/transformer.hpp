#pragma once

#include "respllm/core/ops.hpp"
#include "respllm/core/random.hpp"
#include "respllm/model/lora.hpp"

#include <optional>
#include <string>

namespace respllm {

// Pre-norm block: h = x + MHA(LN1 x); y = h + FFN(LN2 h), FFN = W2 gelu(W1 . + b1) + b2.
// Attention projections carry no bias.
struct TransformerBlock {
  Parameter* ln1_gamma = nullptr;
  Parameter* ln1_beta = nullptr;
  Parameter* wq = nullptr;
  Parameter* wk = nullptr;
  Parameter* wv = nullptr;
  Parameter* wo = nullptr;
  Parameter* ln2_gamma = nullptr;
  Parameter* ln2_beta = nullptr;
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;
  std::optional<LoraAdapter> q_lora;
  std::optional<LoraAdapter> k_lora;
  int heads = 1;

  // use_adapters=false evaluates the frozen base weights only.
  Var forward(Tape& tape, Var x, const AttentionMask& mask, bool use_adapters = true) const;
};

TransformerBlock make_transformer_block(ParameterSet& params, const std::string& prefix,
                                        Eigen::Index width, int heads, int ffn_mult, Rng& rng,
                                        bool trainable);

// y = LN(x) with gamma/beta under `prefix`.
std::pair<Parameter*, Parameter*> make_layer_norm(ParameterSet& params, const std::string& prefix,
                                                  Eigen::Index width, bool trainable);

}  // namespace respllm
