#include "respllm/train/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace respllm::train {
namespace fs = std::filesystem;
using baselines::DmsMode;
using baselines::FusionKind;

nlohmann::json ModelOptions::to_json() const {
  return {{"respllm", respllm.to_json()},
          {"text_width", text_width},
          {"fusion_dms", baselines::to_string(fusion_dms)},
          {"audio_finetune_encoder", audio_finetune_encoder},
          {"fusion_finetune_encoder", fusion_finetune_encoder},
          {"xattn_heads", xattn_heads}};
}

ModelOptions ModelOptions::from_json(const nlohmann::json& j) {
  ModelOptions o;
  if (j.contains("respllm")) o.respllm = RespLLMConfig::from_json(j.at("respllm"));
  o.text_width = j.value("text_width", o.text_width);
  o.fusion_dms = baselines::parse_dms_mode(j.value("fusion_dms", std::string("hard")));
  o.audio_finetune_encoder = j.value("audio_finetune_encoder", o.audio_finetune_encoder);
  o.fusion_finetune_encoder = j.value("fusion_finetune_encoder", o.fusion_finetune_encoder);
  o.xattn_heads = j.value("xattn_heads", o.xattn_heads);
  return o;
}

namespace {

FusionKind fusion_kind(const std::string& kind) {
  if (kind == "fusion-concat") return FusionKind::Concat;
  if (kind == "fusion-add") return FusionKind::Add;
  if (kind == "fusion-xattn") return FusionKind::CrossAttention;
  throw ConfigError("unknown model kind '" + kind + "'");
}

std::string unknown_kind(const std::string& kind) {
  std::string msg = "unknown model kind '" + kind + "' (expected one of";
  for (const char* k : kModelKinds) msg += std::string(" ") + k;
  return msg + ")";
}

}  // namespace

std::unique_ptr<Classifier> make_model(const std::string& kind, const ModelOptions& opts,
                                       const baselines::DmsSchema& schema, int vocab_size,
                                       std::uint64_t seed) {
  const audio::AudioEncoderConfig& enc = opts.respllm.encoder;
  if (kind == "respllm") {
    RespLLMConfig cfg = opts.respllm;
    cfg.vocab_size = vocab_size;
    return std::make_unique<RespLLM>(cfg, seed);
  }
  if (kind == "audio")
    return std::make_unique<baselines::AudioOnlyClassifier>(enc, seed, opts.audio_finetune_encoder);
  if (kind == "dms-hard")
    return std::make_unique<baselines::DmsOnlyClassifier>(DmsMode::Hard, schema, vocab_size,
                                                          opts.text_width, seed);
  if (kind == "dms-soft")
    return std::make_unique<baselines::DmsOnlyClassifier>(DmsMode::Soft, schema, vocab_size,
                                                          opts.text_width, seed);
  if (kind.rfind("fusion-", 0) == 0)
    return std::make_unique<baselines::FusionClassifier>(
        fusion_kind(kind), opts.fusion_dms, enc, schema, vocab_size, opts.text_width, seed,
        opts.fusion_finetune_encoder, opts.xattn_heads);
  throw ConfigError(unknown_kind(kind));
}

std::unique_ptr<Classifier> make_classifier(const std::string& kind, const nlohmann::json& c) {
  // Values are overwritten by the checkpoint, so the seed is irrelevant.
  constexpr std::uint64_t seed = 0;
  if (kind == "respllm") return std::make_unique<RespLLM>(RespLLMConfig::from_json(c), seed);
  if (kind == "audio")
    return std::make_unique<baselines::AudioOnlyClassifier>(
        audio::AudioEncoderConfig::from_json(c.at("encoder")), seed,
        c.at("finetune_encoder").get<bool>());
  if (kind == "dms-hard" || kind == "dms-soft")
    return std::make_unique<baselines::DmsOnlyClassifier>(
        baselines::parse_dms_mode(c.at("dms").get<std::string>()),
        baselines::DmsSchema::from_json(c.at("schema")), c.at("vocab_size").get<int>(),
        c.at("text_width").get<int>(), seed);
  if (kind.rfind("fusion-", 0) == 0)
    return std::make_unique<baselines::FusionClassifier>(
        fusion_kind(kind), baselines::parse_dms_mode(c.at("dms").get<std::string>()),
        audio::AudioEncoderConfig::from_json(c.at("encoder")),
        baselines::DmsSchema::from_json(c.at("schema")), c.at("vocab_size").get<int>(),
        c.at("text_width").get<int>(), seed, c.at("finetune_encoder").get<bool>(),
        c.at("xattn_heads").get<int>());
  throw CheckpointError("checkpoint: " + unknown_kind(kind));
}

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string string() { return bytes(get<std::uint64_t>()); }
  void read_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Classifier& model, const text::Vocabulary& vocab,
                                 const TrainState& state) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const nlohmann::json header = {
      {"kind", model.kind()}, {"config", model.config()}, {"state", state.to_json()}};
  put_string(out, header.dump());
  put_string(out, vocab.serialize());
  const ParameterSet& params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put<std::uint8_t>(out, p.trainable ? 1 : 0);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p.value.cols()));
    out.append(reinterpret_cast<const char*>(p.value.data()),
               static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.bytes(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic))
    throw CheckpointError("checkpoint: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.string());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  }
  Checkpoint ck;
  ck.model = make_classifier(header.at("kind").get<std::string>(), header.at("config"));
  ck.state = TrainState::from_json(header.at("state"));
  ck.vocab = text::Vocabulary::parse(in.string());

  ParameterSet& params = ck.model->parameters();
  const auto count = in.get<std::uint64_t>();
  if (count != params.size())
    throw CheckpointError("checkpoint: " + std::to_string(count) + " parameters, model has " +
                          std::to_string(params.size()));
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = in.bytes(in.get<std::uint32_t>());
    const bool trainable = in.get<std::uint8_t>() != 0;
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    Parameter* p = params.find(name);
    if (p == nullptr) throw CheckpointError("checkpoint: unknown parameter '" + name + "'");
    if (!seen.insert(name).second)
      throw CheckpointError("checkpoint: duplicate parameter '" + name + "'");
    if (static_cast<std::uint64_t>(p->value.rows()) != rows ||
        static_cast<std::uint64_t>(p->value.cols()) != cols)
      throw CheckpointError("checkpoint: shape mismatch for '" + name + "': file " +
                            std::to_string(rows) + "x" + std::to_string(cols) + " vs model " +
                            shape_str(p->value));
    in.read_doubles(p->value.data(), static_cast<std::size_t>(rows * cols));
    p->trainable = trainable;
  }
  if (!in.done()) throw CheckpointError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const fs::path& path, const Classifier& model, const text::Vocabulary& vocab,
                     const TrainState& state) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot write " + path.string());
  out << serialize_checkpoint(model, vocab, state);
  if (!out) throw InputError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace respllm::train
