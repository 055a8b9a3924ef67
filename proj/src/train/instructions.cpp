#include "respllm/train/instructions.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace respllm::train {
namespace fs = std::filesystem;

TaskSpecMap task_specs(const data::CohortManifest& manifest) {
  TaskSpecMap out;
  for (const data::SourceSpec& s : manifest.sources) out[s.source_id] = s.task;
  return out;
}

std::vector<InstructionRecord> build_instruction_dataset(const data::CohortManifest& manifest,
                                                         const TaskSpecMap& specs) {
  std::map<std::string, std::string> prompts;
  for (const data::CohortRow& row : manifest.rows) {
    if (prompts.count(row.source_id)) continue;
    const auto it = specs.find(row.source_id);
    if (it == specs.end())
      throw ConfigError("instruction dataset: no TaskSpec for source '" + row.source_id + "'");
    prompts[row.source_id] = text::render_task_prompt(it->second);
  }
  std::vector<InstructionRecord> out;
  out.reserve(manifest.rows.size());
  for (const data::CohortRow& row : manifest.rows) {
    InstructionRecord r;
    r.task_id = row.source_id;
    r.sample_id = row.sample_id;
    r.prompt_text = prompts.at(row.source_id);
    r.dms_text = text::render_dms(row.dms);
    r.wav_path = row.wav_path;
    r.label = row.label;
    r.split = row.split;
    r.dms = row.dms;
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<InstructionRecord> filter_split(std::span<const InstructionRecord> records,
                                            const std::string& split) {
  std::vector<InstructionRecord> out;
  for (const InstructionRecord& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

std::vector<std::string> task_ids(std::span<const InstructionRecord> records) {
  std::set<std::string> ids;
  for (const InstructionRecord& r : records) ids.insert(r.task_id);
  return {ids.begin(), ids.end()};
}

std::vector<std::size_t> EpochShuffler::next(std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng_.shuffle(order.begin(), order.end());
  return order;
}

std::string EpochShuffler::state() const {
  std::ostringstream os;
  os << rng_.engine();
  return os.str();
}

void EpochShuffler::restore(const std::string& state) {
  std::istringstream is(state);
  is >> rng_.engine();
  if (!is) throw InputError("epoch shuffler: malformed RNG state");
}

nlohmann::json record_to_json(const InstructionRecord& r) {
  return {{"task_id", r.task_id},   {"sample_id", r.sample_id}, {"prompt_text", r.prompt_text},
          {"dms_text", r.dms_text}, {"wav_path", r.wav_path},   {"label", r.label},
          {"split", r.split},       {"dms", data::dms_to_json(r.dms)}};
}

InstructionRecord record_from_json(const nlohmann::json& j) {
  InstructionRecord r;
  r.task_id = j.at("task_id").get<std::string>();
  r.sample_id = j.value("sample_id", std::string());
  r.prompt_text = j.at("prompt_text").get<std::string>();
  r.dms_text = j.at("dms_text").get<std::string>();
  r.wav_path = j.at("wav_path").get<std::string>();
  r.label = j.at("label").get<int>();
  if (r.label != 0 && r.label != 1)
    throw InputError("record '" + r.sample_id + "': label must be 0 or 1");
  r.split = j.at("split").get<std::string>();
  if (j.contains("dms")) r.dms = data::dms_from_json(j.at("dms"));
  return r;
}

void save_records(const fs::path& path, std::span<const InstructionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("records: cannot write " + path.string());
  for (const InstructionRecord& r : records) out << record_to_json(r).dump() << "\n";
}

std::vector<InstructionRecord> load_records(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("records: cannot read " + path.string());
  std::vector<InstructionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> text_corpus(std::span<const InstructionRecord> records) {
  std::vector<std::string> out;
  out.reserve(2 * records.size());
  for (const InstructionRecord& r : records) {
    out.push_back(r.prompt_text);
    if (!r.dms_text.empty()) out.push_back(r.dms_text);
  }
  return out;
}

std::vector<text::DmsRecord> dms_records(std::span<const InstructionRecord> records) {
  std::vector<text::DmsRecord> out;
  out.reserve(records.size());
  for (const InstructionRecord& r : records) out.push_back(r.dms);
  return out;
}

AudioLoader wav_loader(const fs::path& root) {
  return [root](const InstructionRecord& r) {
    const fs::path p(r.wav_path);
    return audio::read_wav(p.is_absolute() ? p : root / p);
  };
}

AudioLoader synthetic_loader(const data::CohortManifest& manifest) {
  auto rows = std::make_shared<std::unordered_map<std::string, data::CohortRow>>();
  for (const data::CohortRow& row : manifest.rows) (*rows)[row.sample_id] = row;
  auto sources = std::make_shared<std::vector<data::SourceSpec>>(manifest.sources);
  return [rows, sources](const InstructionRecord& r) {
    const auto it = rows->find(r.sample_id);
    if (it == rows->end())
      throw InputError("synthetic audio: unknown sample '" + r.sample_id + "'");
    for (const data::SourceSpec& s : *sources)
      if (s.source_id == it->second.source_id) return data::row_waveform(it->second, s);
    throw InputError("synthetic audio: unknown source '" + it->second.source_id + "'");
  };
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (std::thread& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<Example> make_examples(std::span<const InstructionRecord> records,
                                   const text::Vocabulary& vocab,
                                   const baselines::DmsSchema& schema, const AudioLoader& loader,
                                   const ExampleOptions& opts) {
  std::vector<Example> out(records.size());
  parallel_for(records.size(), opts.threads, [&](std::size_t i) {
    const InstructionRecord& r = records[i];
    Example& ex = out[i];
    ex.task_id = r.task_id;
    ex.prompt_ids = vocab.encode(r.prompt_text);
    ex.dms_ids = vocab.encode(r.dms_text);
    ex.hard_dms = baselines::dms_hard_encode(r.dms, schema);
    ex.label = r.label;
    auto patches = std::make_shared<Matrix>(audio::waveform_to_patches(loader(r)).patches);
    if (opts.encoder != nullptr)
      ex.encoded = std::make_shared<const Matrix>(opts.encoder->encode(*patches));
    if (opts.keep_patches || opts.encoder == nullptr) ex.patches = std::move(patches);
  });
  return out;
}

void cache_encodings(std::span<Example> examples, const audio::AudioEncoder& encoder,
                     bool drop_patches, int threads) {
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    Example& ex = examples[i];
    if (!ex.patches) throw InputError("cache_encodings: example without patches");
    ex.encoded = std::make_shared<const Matrix>(encoder.encode(*ex.patches));
    if (drop_patches) ex.patches.reset();
  });
}

}  // namespace respllm::train
