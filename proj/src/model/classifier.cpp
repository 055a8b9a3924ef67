#include "respllm/model/classifier.hpp"

#include "respllm/audio/encoder.hpp"
#include "respllm/core/ops.hpp"

namespace respllm {

RowVector Classifier::probabilities(const Example& ex) const {
  Tape tape;
  Var l = logits(tape, ex);
  return softmax_rows(l.value()).row(0);
}

Var audio_embedding(Tape& tape, const Classifier& model, const Example& ex) {
  const audio::AudioEncoder* enc = model.encoder();
  if (enc == nullptr) throw ConfigError(model.kind() + ": model has no audio encoder");
  if (model.encoder_frozen() && ex.encoded) {
    if (ex.encoded->cols() != enc->config().width)
      throw DimensionError("cached audio encoding " + shape_str(*ex.encoded) +
                           " does not match encoder width " +
                           std::to_string(enc->config().width));
    return tape.view(*ex.encoded);
  }
  if (!ex.patches) throw InputError(model.kind() + ": example " + ex.task_id + " has no audio");
  return enc->encode(tape, *ex.patches);
}

}  // namespace respllm
